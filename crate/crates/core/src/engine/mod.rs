//! Fixed-timestep leaky integrate-and-fire engine.
//!
//! One call to [`Engine::step`] advances every population by one timestep:
//!
//! ```text
//! V <- V * exp(-1/tau) + pending + bias        (decay first, then integrate)
//! spike if V >= threshold and not refractory; V <- 0 after a spike
//! ```
//!
//! `pending` holds the synaptic increments of spikes emitted during the
//! previous timestep together with the external inputs submitted with the
//! previous call, so every hop (generator -> layer, layer -> layer) costs
//! exactly one timestep.
//!
//! Voltages are decayed lazily: a neuron is only visited on timesteps where it
//! receives input or has a bias, since a positive threshold cannot be crossed
//! by pure decay.

mod network;
pub mod trace;

pub use network::{
    Adaptation, Connectivity, Edge, GeneratorFn, GeneratorParams, Generators, NetworkDescription,
    Network, NeuronRef, PlasticitySpec, PopulationId, PopulationSpec, Sign, SynapseSet, SynapseSpec,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("scheduling error: expected timestep {expected}, got {got}")]
    Schedule { expected: u64, got: u64 },
    #[error("input error: neuron {index} outside population {population} of size {size}")]
    Input {
        population: PopulationId,
        index: usize,
        size: usize,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("network description error: {0}")]
    Description(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Wall-time length of one timestep in microseconds.
    pub timestep_us: u32,
    /// Seed for stochastic components (the current neuron model has none).
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            timestep_us: 50,
            seed: 0,
        }
    }
}

/// Per-step voltage multiplier `exp(-1/tau)`; `tau = inf` is a non-leaky integrator.
pub fn decay_factor<T: Scalar>(decay_tau: f64) -> Result<T, EngineError> {
    if decay_tau.is_infinite() && decay_tau > 0.0 {
        return Ok(T::one());
    }
    if !(decay_tau >= 1.0) {
        return Err(EngineError::Config(format!(
            "decay_tau must be >= 1 timestep, got {decay_tau}"
        )));
    }
    Ok(T::lit((-1.0 / decay_tau).exp()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Spike {
    pub population: PopulationId,
    pub index: u32,
}

impl Spike {
    pub fn new(population: PopulationId, index: usize) -> Self {
        Self {
            population,
            index: index as u32,
        }
    }
}

/// Spikes attributed to one timestep.
///
/// Batches returned by the engine hold at most one spike per neuron, sorted by
/// `(population, index)`. Input batches may repeat a neuron; each copy
/// delivers one `input_weight` increment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpikeBatch {
    pub timestep: u64,
    pub spikes: Vec<Spike>,
}

impl SpikeBatch {
    pub fn new(timestep: u64) -> Self {
        Self {
            timestep,
            spikes: Vec::new(),
        }
    }

    pub fn with_spikes(timestep: u64, spikes: Vec<Spike>) -> Self {
        Self { timestep, spikes }
    }

    pub fn push(&mut self, population: PopulationId, index: usize) {
        self.spikes.push(Spike::new(population, index));
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    /// Requires the batch to be sorted, as engine output is.
    pub fn contains(&self, population: PopulationId, index: usize) -> bool {
        self.spikes.binary_search(&Spike::new(population, index)).is_ok()
    }

    /// Indices that fired in one population, ascending.
    pub fn indices_in(&self, population: PopulationId) -> impl Iterator<Item = usize> + '_ {
        self.spikes
            .iter()
            .filter(move |s| s.population == population)
            .map(|s| s.index as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronState<T> {
    pub membrane_potential: T,
    pub threshold: T,
    pub decay_factor: T,
    pub refractory_remaining: u32,
    pub self_excitation_weight: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightDelta {
    pub set: usize,
    pub synapse: usize,
    pub before: i32,
    pub after: i32,
}

/// Sequential simulator for one [`Network`].
#[derive(Clone, Debug)]
pub struct Engine<T> {
    config: EngineConfig,
    network: Network<T>,
    voltage: Vec<T>,
    last_update: Vec<u64>,
    refractory_until: Vec<u64>,
    pending: Vec<T>,
    dirty: Vec<bool>,
    dirty_list: Vec<u32>,
    biased: Vec<u32>,
    next_timestep: u64,
    fired_scratch: Vec<u32>,
}

impl<T: Scalar> Engine<T> {
    pub fn new(config: EngineConfig, network: Network<T>) -> Result<Self, EngineError> {
        if config.timestep_us == 0 {
            return Err(EngineError::Config("timestep_us must be positive".into()));
        }
        let n = network.neuron_count();
        let biased = network
            .populations
            .iter()
            .filter(|p| p.bias != T::zero())
            .flat_map(|p| (p.offset..p.offset + p.size).map(|g| g as u32))
            .collect();
        Ok(Self {
            config,
            network,
            voltage: vec![T::zero(); n],
            last_update: vec![0; n],
            refractory_until: vec![0; n],
            pending: vec![T::zero(); n],
            dirty: vec![false; n],
            dirty_list: Vec::new(),
            biased,
            next_timestep: 0,
            fired_scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    /// Timestep the next call to [`Engine::step`] must carry.
    pub fn next_timestep(&self) -> u64 {
        self.next_timestep
    }

    /// Simulated time elapsed, in microseconds.
    pub fn elapsed_us(&self) -> u64 {
        self.next_timestep * self.config.timestep_us as u64
    }

    /// Advances one timestep and returns the spikes emitted during it.
    pub fn step(&mut self, input: &SpikeBatch) -> Result<SpikeBatch, EngineError> {
        if input.timestep != self.next_timestep {
            return Err(EngineError::Schedule {
                expected: self.next_timestep,
                got: input.timestep,
            });
        }
        for s in &input.spikes {
            let size = self
                .network
                .populations
                .get(s.population)
                .map(|p| p.size)
                .ok_or(EngineError::Input {
                    population: s.population,
                    index: s.index as usize,
                    size: 0,
                })?;
            if s.index as usize >= size {
                return Err(EngineError::Input {
                    population: s.population,
                    index: s.index as usize,
                    size,
                });
            }
        }

        let t = self.next_timestep;
        for k in 0..self.biased.len() {
            let g = self.biased[k] as usize;
            self.mark(g);
        }

        let mut fired = std::mem::take(&mut self.fired_scratch);
        fired.clear();
        for k in 0..self.dirty_list.len() {
            let g = self.dirty_list[k] as usize;
            self.dirty[g] = false;
            let pid = self.network.neuron_population[g] as usize;
            let pop = &self.network.populations[pid];
            let input = self.pending[g] + pop.bias;
            self.pending[g] = T::zero();
            if t < self.refractory_until[g] {
                self.voltage[g] = T::zero();
                self.last_update[g] = t;
                continue;
            }
            let gap = t - self.last_update[g];
            let decayed = match gap {
                0 => self.voltage[g],
                1 => self.voltage[g] * pop.decay,
                _ => self.voltage[g] * pop.decay.powi(gap.min(i32::MAX as u64) as i32),
            };
            let v = decayed + input;
            self.last_update[g] = t;
            if v >= pop.thresholds[g - pop.offset] {
                self.voltage[g] = T::zero();
                self.refractory_until[g] = t + 1 + pop.refractory as u64;
                fired.push(g as u32);
            } else {
                self.voltage[g] = v;
            }
        }
        self.dirty_list.clear();
        fired.sort_unstable();

        let mut out = SpikeBatch::new(t);
        out.spikes.reserve(fired.len());
        for &g in &fired {
            let g = g as usize;
            let pid = self.network.neuron_population[g] as usize;
            let local = g - self.network.populations[pid].offset;
            out.spikes.push(Spike::new(pid, local));
            let self_w = self.network.populations[pid].self_excitation;
            if self_w != T::zero() {
                self.deliver(g, self_w);
            }
            for oi in 0..self.network.populations[pid].outgoing.len() {
                let si = self.network.populations[pid].outgoing[oi];
                let set = &self.network.sets[si];
                let post_offset = self.network.populations[set.post].offset;
                let lo = set.row_ptr[local] as usize;
                let hi = set.row_ptr[local + 1] as usize;
                for e in lo..hi {
                    let target = post_offset + self.network.sets[si].targets[e] as usize;
                    let w = T::lit(self.network.sets[si].weights[e] as f64);
                    self.deliver(target, w);
                }
            }
        }
        for s in &input.spikes {
            let pop = &self.network.populations[s.population];
            let (g, w) = (pop.offset + s.index as usize, pop.input_weight);
            self.deliver(g, w);
        }
        self.fired_scratch = fired;
        self.next_timestep += 1;
        Ok(out)
    }

    /// Applies the reinforcement-gated rule for one timestep's spikes.
    ///
    /// Every plastic set whose reinforcement neuron appears in `fired` moves
    /// all of its weights by one unit in its configured direction, clamped to
    /// `[w_min, w_max]` and to the set's sign.
    pub fn apply_plasticity(&mut self, fired: &SpikeBatch) -> Vec<WeightDelta> {
        let mut deltas = Vec::new();
        for si in 0..self.network.sets.len() {
            let Some(rule) = &self.network.sets[si].plastic else {
                continue;
            };
            let r = rule.reinforcement;
            let pid = self.network.neuron_population[r] as usize;
            let local = r - self.network.populations[pid].offset;
            if fired.contains(pid, local) {
                deltas.extend(self.network.apply_plastic_step(si));
            }
        }
        deltas
    }

    /// [`Engine::step`] followed by [`Engine::apply_plasticity`].
    pub fn run_step(&mut self, input: &SpikeBatch) -> Result<SpikeBatch, EngineError> {
        let out = self.step(input)?;
        self.apply_plasticity(&out);
        Ok(out)
    }

    /// Advances with empty input until (and including) `timestep - 1`.
    pub fn idle_until(&mut self, timestep: u64) -> Result<Vec<SpikeBatch>, EngineError> {
        let mut out = Vec::new();
        while self.next_timestep < timestep {
            let b = self.run_step(&SpikeBatch::new(self.next_timestep))?;
            if !b.is_empty() {
                out.push(b);
            }
        }
        Ok(out)
    }

    /// State of a neuron as of the last completed timestep.
    pub fn neuron_state(&self, population: PopulationId, index: usize) -> NeuronState<T> {
        let pop = &self.network.populations[population];
        let g = pop.offset + index;
        let now = self.next_timestep.saturating_sub(1);
        let gap = now.saturating_sub(self.last_update[g]);
        let v = self.voltage[g] * pop.decay.powi(gap.min(i32::MAX as u64) as i32);
        NeuronState {
            membrane_potential: v,
            threshold: pop.thresholds[index],
            decay_factor: pop.decay,
            refractory_remaining: self
                .refractory_until[g]
                .saturating_sub(self.next_timestep)
                .min(u32::MAX as u64) as u32,
            self_excitation_weight: pop.self_excitation,
        }
    }

    pub fn weights(&self, set_name: &str) -> Option<&[i32]> {
        self.network.synapse_set(set_name).map(|s| s.weights())
    }

    fn deliver(&mut self, g: usize, w: T) {
        self.pending[g] = self.pending[g] + w;
        self.mark(g);
    }

    fn mark(&mut self, g: usize) {
        if !self.dirty[g] {
            self.dirty[g] = true;
            self.dirty_list.push(g as u32);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(threshold: f64, tau: f64) -> Engine<f64> {
        let mut d = NetworkDescription::new();
        d.add_population(PopulationSpec::new("n", 1, threshold, tau));
        Engine::new(EngineConfig::default(), d.build(&Generators::new()).unwrap()).unwrap()
    }

    fn chain(layers: usize) -> Engine<f64> {
        let mut d = NetworkDescription::new();
        for l in 0..layers {
            d.add_population(PopulationSpec::new(format!("l{l}"), 4, 1.0, 1.0));
        }
        for l in 1..layers {
            d.add_synapses(SynapseSpec {
                name: format!("l{}->l{l}", l - 1),
                pre: format!("l{}", l - 1),
                post: format!("l{l}"),
                sign: Sign::Excitatory,
                connectivity: Connectivity::OneToOne { weight: 1 },
                plasticity: None,
            });
        }
        Engine::new(EngineConfig::default(), d.build(&Generators::new()).unwrap()).unwrap()
    }

    #[test]
    fn decay_factor_values() {
        assert!((decay_factor::<f64>(3.0).unwrap() - 0.716_531_310_573_789_2).abs() < 1e-12);
        assert!((decay_factor::<f64>(1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-12);
        assert_eq!(decay_factor::<f64>(f64::INFINITY).unwrap(), 1.0);
        assert!(decay_factor::<f64>(0.5).is_err());
        assert!(decay_factor::<f64>(f64::NAN).is_err());
        assert!(decay_factor::<f32>(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn threshold_exactly_met_fires_and_resets() {
        let mut e = single(2.0, 3.0);
        let b = SpikeBatch::with_spikes(0, vec![Spike::new(0, 0), Spike::new(0, 0)]);
        assert!(e.step(&b).unwrap().is_empty());
        let out = e.step(&SpikeBatch::new(1)).unwrap();
        assert!(out.contains(0, 0));
        assert_eq!(e.neuron_state(0, 0).membrane_potential, 0.0);
    }

    #[test]
    fn nineteen_of_twenty_never_fires() {
        let mut e = single(20.0, 3.0);
        let volley = SpikeBatch::with_spikes(0, vec![Spike::new(0, 0); 19]);
        assert!(e.step(&volley).unwrap().is_empty());
        for t in 1..200 {
            assert!(e.step(&SpikeBatch::new(t)).unwrap().is_empty());
        }
    }

    #[test]
    fn chain_latency_equals_layer_count() {
        for layers in 1..=6 {
            let mut e = chain(layers);
            let mut volley = SpikeBatch::new(0);
            volley.push(0, 2);
            let mut first = None;
            let mut b = volley;
            for t in 0..20u64 {
                let out = e.step(&b).unwrap();
                if first.is_none() && out.contains(layers - 1, 2) {
                    first = Some(t);
                }
                b = SpikeBatch::new(t + 1);
            }
            assert_eq!(first, Some(layers as u64));
        }
    }

    #[test]
    fn scheduling_and_index_errors() {
        let mut e = single(1.0, 1.0);
        assert!(matches!(
            e.step(&SpikeBatch::new(3)),
            Err(EngineError::Schedule { expected: 0, got: 3 })
        ));
        let mut b = SpikeBatch::new(0);
        b.push(0, 1);
        assert!(matches!(e.step(&b), Err(EngineError::Input { index: 1, size: 1, .. })));
        let mut b = SpikeBatch::new(0);
        b.push(7, 0);
        assert!(matches!(e.step(&b), Err(EngineError::Input { .. })));
    }

    #[test]
    fn decays_before_integrating() {
        let mut e = single(100.0, 2.0);
        let a = (-0.5f64).exp();
        e.step(&SpikeBatch::with_spikes(0, vec![Spike::new(0, 0); 10])).unwrap();
        e.step(&SpikeBatch::with_spikes(1, vec![Spike::new(0, 0); 4])).unwrap();
        assert_eq!(e.neuron_state(0, 0).membrane_potential, 10.0);
        e.step(&SpikeBatch::new(2)).unwrap();
        let v = e.neuron_state(0, 0).membrane_potential;
        assert!((v - (10.0 * a + 4.0)).abs() < 1e-12);
        // Lazy read-out applies the pending decay.
        e.step(&SpikeBatch::new(3)).unwrap();
        let v2 = e.neuron_state(0, 0).membrane_potential;
        assert!((v2 - (10.0 * a + 4.0) * a).abs() < 1e-12);
    }

    #[test]
    fn refractory_blocks_spikes() {
        let mut d = NetworkDescription::new();
        d.add_population(PopulationSpec::new("n", 1, 1.0, 1.0).with_refractory(2));
        let mut e = Engine::<f64>::new(EngineConfig::default(), d.build(&Generators::new()).unwrap())
            .unwrap();
        let mut fired = Vec::new();
        for t in 0..8 {
            let mut b = SpikeBatch::new(t);
            b.push(0, 0);
            if !e.step(&b).unwrap().is_empty() {
                fired.push(t);
            }
        }
        assert_eq!(fired, vec![1, 4, 7]);
    }

    #[test]
    fn self_excitation_sustains() {
        let mut d = NetworkDescription::new();
        d.add_population(PopulationSpec::new("m", 1, 1.0, 1.0).with_self_excitation(1));
        let mut e = Engine::<f64>::new(EngineConfig::default(), d.build(&Generators::new()).unwrap())
            .unwrap();
        let mut b = SpikeBatch::new(0);
        b.push(0, 0);
        e.step(&b).unwrap();
        for t in 1..3000 {
            assert!(e.step(&SpikeBatch::new(t)).unwrap().contains(0, 0), "t={t}");
        }
    }

    #[test]
    fn sign_is_enforced() {
        let mut d = NetworkDescription::new();
        d.add_population(PopulationSpec::new("a", 2, 1.0, 1.0));
        d.add_population(PopulationSpec::new("b", 2, 1.0, 1.0));
        d.add_synapses(SynapseSpec {
            name: "bad".into(),
            pre: "a".into(),
            post: "b".into(),
            sign: Sign::Inhibitory,
            connectivity: Connectivity::OneToOne { weight: 3 },
            plasticity: None,
        });
        assert!(matches!(d.build::<f64>(&Generators::new()), Err(EngineError::Config(_))));
    }

    fn plastic_net(w0: i64, adaptation: Adaptation, w_min: i32) -> Engine<f64> {
        let mut d = NetworkDescription::new();
        d.add_population(PopulationSpec::new("ff", 1, 1.0, 1.0));
        d.add_population(PopulationSpec::new("b", 3, 1000.0, 1.0));
        d.add_population(PopulationSpec::new("r", 1, 1.0, 1.0));
        d.add_synapses(SynapseSpec {
            name: "ff->b".into(),
            pre: "ff".into(),
            post: "b".into(),
            sign: Sign::Excitatory,
            connectivity: Connectivity::Explicit {
                edges: vec![[0, 0, w0], [0, 1, w0], [0, 2, w0]],
            },
            plasticity: Some(PlasticitySpec {
                reinforcement_population: "r".into(),
                reinforcement_index: 0,
                adaptation,
                w_min,
                w_max: 255,
            }),
        });
        Engine::new(EngineConfig::default(), d.build(&Generators::new()).unwrap()).unwrap()
    }

    #[test]
    fn reinforcement_increments_weights() {
        let mut e = plastic_net(5, Adaptation::Increment, -256);
        let mut b = SpikeBatch::new(0);
        b.push(2, 0);
        e.run_step(&b).unwrap();
        assert_eq!(e.weights("ff->b").unwrap(), &[5, 5, 5]);
        e.run_step(&SpikeBatch::new(1)).unwrap(); // r fires here
        assert_eq!(e.weights("ff->b").unwrap(), &[6, 6, 6]);
    }

    #[test]
    fn no_reinforcement_no_change() {
        let mut e = plastic_net(5, Adaptation::Increment, -256);
        for t in 0..50 {
            let mut b = SpikeBatch::new(t);
            b.push(0, 0);
            let out = e.step(&b).unwrap();
            assert!(e.apply_plasticity(&out).is_empty());
        }
        assert_eq!(e.weights("ff->b").unwrap(), &[5, 5, 5]);
    }

    #[test]
    fn repeated_decrements_clamp_at_w_min() {
        let mut e = plastic_net(50, Adaptation::Decrement, 0);
        let mut fired = SpikeBatch::new(0);
        fired.push(2, 0);
        for _ in 0..100 {
            e.apply_plasticity(&fired);
        }
        // Iterating w <- max(w - 1, 0) a hundred times from 50 gives 0.
        let mut oracle = 50i32;
        for _ in 0..100 {
            oracle = (oracle - 1).max(0);
        }
        assert_eq!(e.weights("ff->b").unwrap(), &[oracle; 3]);
    }

    #[test]
    fn description_round_trips_through_text() {
        let e = plastic_net(5, Adaptation::Decrement, 0);
        let text = e.network().description().to_text().unwrap();
        let back = NetworkDescription::from_text(&text).unwrap();
        assert_eq!(&back, e.network().description());
    }
}
