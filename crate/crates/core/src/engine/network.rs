//! Network topology: plain-text description and its expanded, engine-ready form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{decay_factor, EngineError};
use crate::scalar::Scalar;

/// Index of a population inside a network.
pub type PopulationId = usize;

/// `(pre_index, post_index, weight)` triple produced by a connectivity generator.
pub type Edge = (u32, u32, i32);

/// Parameters passed to a named connectivity generator.
pub type GeneratorParams = BTreeMap<String, f64>;

/// A connectivity generator expands named parameters into explicit edges.
pub type GeneratorFn = fn(&GeneratorParams, usize, usize) -> Result<Vec<Edge>, EngineError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

/// Direction a plastic set moves when its reinforcement neuron fires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adaptation {
    Increment,
    Decrement,
}

impl Adaptation {
    fn delta(self) -> i32 {
        match self {
            Adaptation::Increment => 1,
            Adaptation::Decrement => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronRef {
    pub population: PopulationId,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub name: String,
    pub size: usize,
    /// Firing threshold of neuron 0.
    pub threshold: f64,
    /// Per-index threshold increment; neuron `k` fires at `threshold + k * threshold_step`.
    #[serde(default)]
    pub threshold_step: f64,
    /// Voltage persistence in timesteps; `inf` gives a non-leaky integrator.
    pub decay_tau: f64,
    #[serde(default)]
    pub refractory: u32,
    #[serde(default)]
    pub self_excitation: i32,
    /// Constant input added every timestep.
    #[serde(default)]
    pub bias: i32,
    /// Increment delivered by one external input spike.
    #[serde(default = "default_input_weight")]
    pub input_weight: i32,
}

fn default_input_weight() -> i32 {
    1
}

impl PopulationSpec {
    pub fn new(name: impl Into<String>, size: usize, threshold: f64, decay_tau: f64) -> Self {
        Self {
            name: name.into(),
            size,
            threshold,
            threshold_step: 0.0,
            decay_tau,
            refractory: 0,
            self_excitation: 0,
            bias: 0,
            input_weight: 1,
        }
    }

    pub fn with_self_excitation(mut self, weight: i32) -> Self {
        self.self_excitation = weight;
        self
    }

    pub fn with_bias(mut self, bias: i32) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_threshold_step(mut self, step: f64) -> Self {
        self.threshold_step = step;
        self
    }

    pub fn with_input_weight(mut self, weight: i32) -> Self {
        self.input_weight = weight;
        self
    }

    pub fn with_refractory(mut self, steps: u32) -> Self {
        self.refractory = steps;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Connectivity {
    OneToOne {
        weight: i32,
    },
    AllToAll {
        weight: i32,
        #[serde(default)]
        include_self: bool,
    },
    Explicit {
        edges: Vec<[i64; 3]>,
    },
    Generator {
        name: String,
        #[serde(default)]
        params: GeneratorParams,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasticitySpec {
    /// Population name of the reinforcement neuron.
    pub reinforcement_population: String,
    pub reinforcement_index: usize,
    pub adaptation: Adaptation,
    #[serde(default = "default_w_min")]
    pub w_min: i32,
    #[serde(default = "default_w_max")]
    pub w_max: i32,
}

fn default_w_min() -> i32 {
    -256
}

fn default_w_max() -> i32 {
    255
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub name: String,
    pub pre: String,
    pub post: String,
    pub sign: Sign,
    pub connectivity: Connectivity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plasticity: Option<PlasticitySpec>,
}

/// Serializable network topology.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescription {
    #[serde(default, rename = "population")]
    pub populations: Vec<PopulationSpec>,
    #[serde(default, rename = "synapses")]
    pub synapses: Vec<SynapseSpec>,
}

impl NetworkDescription {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a population and returns its id.
    pub fn add_population(&mut self, spec: PopulationSpec) -> PopulationId {
        self.populations.push(spec);
        self.populations.len() - 1
    }

    pub fn add_synapses(&mut self, spec: SynapseSpec) -> usize {
        self.synapses.push(spec);
        self.synapses.len() - 1
    }

    pub fn population_id(&self, name: &str) -> Option<PopulationId> {
        self.populations.iter().position(|p| p.name == name)
    }

    pub fn to_text(&self) -> Result<String, EngineError> {
        toml::to_string(self).map_err(|e| EngineError::Description(e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self, EngineError> {
        toml::from_str(text).map_err(|e| EngineError::Description(e.to_string()))
    }

    pub fn build<T: Scalar>(&self, generators: &Generators) -> Result<Network<T>, EngineError> {
        Network::build(self.clone(), generators)
    }
}

/// Registry of named connectivity generators.
#[derive(Clone, Default)]
pub struct Generators {
    table: BTreeMap<String, GeneratorFn>,
}

impl Generators {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, f: GeneratorFn) -> &mut Self {
        self.table.insert(name.to_string(), f);
        self
    }

    pub fn get(&self, name: &str) -> Option<GeneratorFn> {
        self.table.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for Generators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.table.keys()).finish()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PlasticRule {
    pub reinforcement: usize,
    pub delta: i32,
    pub w_min: i32,
    pub w_max: i32,
}

/// Expanded synapse set in compressed-row form (rows indexed by pre neuron).
#[derive(Clone, Debug)]
pub struct SynapseSet {
    pub name: String,
    pub pre: PopulationId,
    pub post: PopulationId,
    pub sign: Sign,
    pub(crate) row_ptr: Vec<u32>,
    pub(crate) targets: Vec<u32>,
    pub(crate) weights: Vec<i32>,
    pub(crate) plastic: Option<PlasticRule>,
}

impl SynapseSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn is_plastic(&self) -> bool {
        self.plastic.is_some()
    }

    pub fn weights(&self) -> &[i32] {
        &self.weights
    }

    /// Outgoing `(post_index, weight)` pairs of one pre-synaptic neuron.
    pub fn row(&self, pre_index: usize) -> impl Iterator<Item = (u32, i32)> + '_ {
        let lo = self.row_ptr[pre_index] as usize;
        let hi = self.row_ptr[pre_index + 1] as usize;
        self.targets[lo..hi]
            .iter()
            .copied()
            .zip(self.weights[lo..hi].iter().copied())
    }

    /// Weight between two neurons, if connected.
    pub fn weight(&self, pre_index: usize, post_index: usize) -> Option<i32> {
        self.row(pre_index)
            .find(|&(t, _)| t as usize == post_index)
            .map(|(_, w)| w)
    }

    fn clamp_range(&self, rule: &PlasticRule) -> (i32, i32) {
        match self.sign {
            Sign::Excitatory => (rule.w_min.max(0), rule.w_max),
            Sign::Inhibitory => (rule.w_min, rule.w_max.min(0)),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Population<T> {
    pub offset: usize,
    pub size: usize,
    pub decay: T,
    pub thresholds: Vec<T>,
    pub refractory: u32,
    pub self_excitation: T,
    pub bias: T,
    pub input_weight: T,
    /// Synapse sets whose pre population is this one.
    pub outgoing: Vec<usize>,
}

/// A network ready for simulation.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub(crate) description: NetworkDescription,
    pub(crate) populations: Vec<Population<T>>,
    pub(crate) sets: Vec<SynapseSet>,
    pub(crate) neuron_population: Vec<u32>,
}

impl<T: Scalar> Network<T> {
    pub fn build(description: NetworkDescription, generators: &Generators) -> Result<Self, EngineError> {
        let mut populations = Vec::with_capacity(description.populations.len());
        let mut neuron_population = Vec::new();
        let mut offset = 0;
        for (pid, spec) in description.populations.iter().enumerate() {
            if spec.size == 0 {
                return Err(EngineError::Config(format!("population `{}` is empty", spec.name)));
            }
            if description.populations[..pid].iter().any(|p| p.name == spec.name) {
                return Err(EngineError::Config(format!("duplicate population `{}`", spec.name)));
            }
            let decay = decay_factor::<T>(spec.decay_tau)?;
            let thresholds: Vec<T> = (0..spec.size)
                .map(|k| T::lit(spec.threshold + spec.threshold_step * k as f64))
                .collect();
            if thresholds.iter().any(|&th| !(th > T::zero())) {
                return Err(EngineError::Config(format!(
                    "population `{}` has a non-positive threshold",
                    spec.name
                )));
            }
            populations.push(Population {
                offset,
                size: spec.size,
                decay,
                thresholds,
                refractory: spec.refractory,
                self_excitation: T::lit(spec.self_excitation as f64),
                bias: T::lit(spec.bias as f64),
                input_weight: T::lit(spec.input_weight as f64),
                outgoing: Vec::new(),
            });
            neuron_population.extend(std::iter::repeat_n(pid as u32, spec.size));
            offset += spec.size;
        }

        let lookup = |name: &str| -> Result<PopulationId, EngineError> {
            description
                .population_id(name)
                .ok_or_else(|| EngineError::Config(format!("unknown population `{name}`")))
        };

        let mut sets = Vec::with_capacity(description.synapses.len());
        for spec in &description.synapses {
            let pre = lookup(&spec.pre)?;
            let post = lookup(&spec.post)?;
            let (pre_size, post_size) = (populations[pre].size, populations[post].size);
            let mut edges = expand(&spec.connectivity, pre_size, post_size, generators)?;
            for &(i, j, w) in &edges {
                if i as usize >= pre_size || j as usize >= post_size {
                    return Err(EngineError::Config(format!(
                        "synapse set `{}` edge ({i}, {j}) outside {pre_size}x{post_size}",
                        spec.name
                    )));
                }
                let ok = match spec.sign {
                    Sign::Excitatory => w >= 0,
                    Sign::Inhibitory => w <= 0,
                };
                if !ok {
                    return Err(EngineError::Config(format!(
                        "synapse set `{}` weight {w} contradicts its sign",
                        spec.name
                    )));
                }
            }
            edges.sort_by_key(|&(i, j, _)| (i, j));
            let mut row_ptr = vec![0u32; pre_size + 1];
            for &(i, _, _) in &edges {
                row_ptr[i as usize + 1] += 1;
            }
            for k in 0..pre_size {
                row_ptr[k + 1] += row_ptr[k];
            }
            let plastic = match &spec.plasticity {
                None => None,
                Some(p) => {
                    let rp = lookup(&p.reinforcement_population)?;
                    if p.reinforcement_index >= populations[rp].size {
                        return Err(EngineError::Config(format!(
                            "reinforcement neuron {} outside `{}`",
                            p.reinforcement_index, p.reinforcement_population
                        )));
                    }
                    if p.w_min > p.w_max {
                        return Err(EngineError::Config(format!(
                            "synapse set `{}` has w_min > w_max",
                            spec.name
                        )));
                    }
                    Some(PlasticRule {
                        reinforcement: populations[rp].offset + p.reinforcement_index,
                        delta: p.adaptation.delta(),
                        w_min: p.w_min,
                        w_max: p.w_max,
                    })
                }
            };
            populations[pre].outgoing.push(sets.len());
            sets.push(SynapseSet {
                name: spec.name.clone(),
                pre,
                post,
                sign: spec.sign,
                row_ptr,
                targets: edges.iter().map(|e| e.1).collect(),
                weights: edges.iter().map(|e| e.2).collect(),
                plastic,
            });
        }
        for set in &mut sets {
            if let Some(rule) = set.plastic.clone() {
                let (lo, hi) = set.clamp_range(&rule);
                for w in &mut set.weights {
                    *w = (*w).clamp(lo, hi);
                }
            }
        }

        Ok(Self {
            description,
            populations,
            sets,
            neuron_population,
        })
    }

    pub fn description(&self) -> &NetworkDescription {
        &self.description
    }

    pub fn population_count(&self) -> usize {
        self.populations.len()
    }

    pub fn population_size(&self, id: PopulationId) -> usize {
        self.populations[id].size
    }

    pub fn population_id(&self, name: &str) -> Option<PopulationId> {
        self.description.population_id(name)
    }

    pub fn population_name(&self, id: PopulationId) -> &str {
        &self.description.populations[id].name
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_population.len()
    }

    pub fn synapse_sets(&self) -> &[SynapseSet] {
        &self.sets
    }

    pub fn synapse_set(&self, name: &str) -> Option<&SynapseSet> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn synapse_set_index(&self, name: &str) -> Option<usize> {
        self.sets.iter().position(|s| s.name == name)
    }

    pub fn threshold(&self, id: PopulationId, index: usize) -> T {
        self.populations[id].thresholds[index]
    }

    pub(crate) fn apply_plastic_step(&mut self, set_index: usize) -> Vec<super::WeightDelta> {
        let set = &mut self.sets[set_index];
        let Some(rule) = set.plastic.clone() else {
            return Vec::new();
        };
        let (lo, hi) = set.clamp_range(&rule);
        let mut deltas = Vec::new();
        for (k, w) in set.weights.iter_mut().enumerate() {
            let next = (*w + rule.delta).clamp(lo, hi);
            if next != *w {
                deltas.push(super::WeightDelta {
                    set: set_index,
                    synapse: k,
                    before: *w,
                    after: next,
                });
                *w = next;
            }
        }
        deltas
    }
}

fn expand(
    connectivity: &Connectivity,
    pre_size: usize,
    post_size: usize,
    generators: &Generators,
) -> Result<Vec<Edge>, EngineError> {
    match connectivity {
        Connectivity::OneToOne { weight } => {
            if pre_size != post_size {
                return Err(EngineError::Config(format!(
                    "one-to-one between sizes {pre_size} and {post_size}"
                )));
            }
            Ok((0..pre_size as u32).map(|i| (i, i, *weight)).collect())
        }
        Connectivity::AllToAll { weight, include_self } => {
            let mut edges = Vec::with_capacity(pre_size * post_size);
            for i in 0..pre_size as u32 {
                for j in 0..post_size as u32 {
                    if *include_self || i != j {
                        edges.push((i, j, *weight));
                    }
                }
            }
            Ok(edges)
        }
        Connectivity::Explicit { edges } => edges
            .iter()
            .map(|&[i, j, w]| {
                let conv = |v: i64| {
                    u32::try_from(v).map_err(|_| EngineError::Config(format!("bad neuron index {v}")))
                };
                let w = i32::try_from(w).map_err(|_| EngineError::Config(format!("bad weight {w}")))?;
                Ok((conv(i)?, conv(j)?, w))
            })
            .collect(),
        Connectivity::Generator { name, params } => {
            let f = generators
                .get(name)
                .ok_or_else(|| EngineError::Config(format!("unknown generator `{name}`")))?;
            f(params, pre_size, post_size)
        }
    }
}
