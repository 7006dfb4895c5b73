//! Plasticity-driven feed-forward pathway.
//!
//! ```text
//! error ─e²>0─► R+ ──reinforces──► FF+ ═plastic, +1═► B
//! error ─e²<0─► R− ──reinforces──► FF− ═plastic, −1═► B
//! ```
//!
//! R± are leaky accumulators of the squared error on their side of zero; their
//! threshold equals ε times the leak-weighted window sum, so a constant error
//! fires R exactly when its mean square over ΔT reaches ε. FF± fire tonically.
//! B neurons receive `b_size/2 + w+ + w−` per step and have thresholds
//! `(k + ½)/(1 − a)`, so the number of active B neurons tracks the net
//! plastic weight and each one is worth `b_step` thrust units.

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::engine::{
    decay_factor, Adaptation, Connectivity, Engine, EngineConfig, Network, NetworkDescription, PlasticitySpec,
    PopulationId, PopulationSpec, Sign, SpikeBatch, SynapseSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    /// Monitoring period ΔT.
    pub delta_t_ms: f64,
    /// Mean-square error threshold ε, deg².
    pub epsilon: f64,
    pub b_size: usize,
    /// Thrust units per active B neuron.
    pub b_step: f64,
    /// Accumulator leak, in monitoring periods.
    pub leak_periods: f64,
    /// Synaptic weight per deg² of represented error.
    pub weight_per_deg2: f64,
    pub w_min: i32,
    pub w_max: i32,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            delta_t_ms: 500.0,
            epsilon: 25.0,
            b_size: 64,
            b_step: 40.0,
            leak_periods: 3.0,
            weight_per_deg2: 1.0,
            w_min: -256,
            w_max: 255,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.delta_t_ms > 0.0 && self.epsilon > 0.0 && self.leak_periods > 0.0 && self.weight_per_deg2 > 0.0) {
            return Err(ControlError::Config("ΔT, ε, leak and weight scale must be positive".into()));
        }
        if self.b_size < 2 || self.b_step < 0.0 {
            return Err(ControlError::Config("B needs at least two neurons and a non-negative step".into()));
        }
        Ok(())
    }

    /// Samples per monitoring period at one sample per millisecond.
    pub fn window_samples(&self) -> usize {
        self.delta_t_ms.round().max(1.0) as usize
    }

    /// Accumulator decay time constant in engine steps.
    pub fn leak_tau_steps(&self, steps_per_sample: u32) -> f64 {
        self.leak_periods * self.window_samples() as f64 * steps_per_sample as f64
    }

    /// R threshold: ε·scale·Σ_{m<W} a^{m·s}.
    pub fn trigger_threshold(&self, steps_per_sample: u32) -> f64 {
        let a = (-(steps_per_sample as f64) / self.leak_tau_steps(steps_per_sample)).exp();
        let w = self.window_samples() as i32;
        self.epsilon * self.weight_per_deg2 * (1.0 - a.powi(w)) / (1.0 - a)
    }
}

/// Non-spiking reference: fire iff the mean of `err²` reaches `epsilon`.
pub fn adaptation_trigger_check(err: &[f64], epsilon: f64) -> bool {
    if err.is_empty() {
        return false;
    }
    err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64 >= epsilon
}

#[derive(Clone, Debug)]
pub struct AdaptationLayers {
    pub r_plus: String,
    pub r_minus: String,
    pub ff_plus: String,
    pub ff_minus: String,
    pub b: String,
    pub plastic_plus: String,
    pub plastic_minus: String,
}

impl Default for AdaptationLayers {
    fn default() -> Self {
        Self {
            r_plus: "r_plus".into(),
            r_minus: "r_minus".into(),
            ff_plus: "ff_plus".into(),
            ff_minus: "ff_minus".into(),
            b: "ff_magnitude".into(),
            plastic_plus: "ff_plus->ff_magnitude".into(),
            plastic_minus: "ff_minus->ff_magnitude".into(),
        }
    }
}

/// Adds the adaptation pathway to `d`, reading the position-coded error
/// population `error` (`n` neurons, `angle_step` degrees apart, centred).
pub fn adaptation_fragment(
    d: &mut NetworkDescription,
    cfg: &AdaptationConfig,
    error: &str,
    n: usize,
    angle_step: f64,
    steps_per_sample: u32,
) -> Result<AdaptationLayers, ControlError> {
    cfg.validate()?;
    let names = AdaptationLayers::default();
    let tau_r = cfg.leak_tau_steps(steps_per_sample);
    let threshold = cfg.trigger_threshold(steps_per_sample);
    d.add_population(PopulationSpec::new(&names.r_plus, 1, threshold, tau_r));
    d.add_population(PopulationSpec::new(&names.r_minus, 1, threshold, tau_r));

    let c = (n - 1) / 2;
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for i in 0..n {
        let e = (i as f64 - c as f64) * angle_step;
        let w = (e * e * cfg.weight_per_deg2).round() as i64;
        if w == 0 {
            continue;
        }
        if i > c {
            plus.push([i as i64, 0, w]);
        } else {
            minus.push([i as i64, 0, w]);
        }
    }
    let fixed = |name: &str, pre: &str, post: &str, sign, connectivity| SynapseSpec {
        name: name.into(),
        pre: pre.into(),
        post: post.into(),
        sign,
        connectivity,
        plasticity: None,
    };
    d.add_synapses(fixed(
        "error->r_plus",
        error,
        &names.r_plus,
        Sign::Excitatory,
        Connectivity::Explicit { edges: plus },
    ));
    d.add_synapses(fixed(
        "error->r_minus",
        error,
        &names.r_minus,
        Sign::Excitatory,
        Connectivity::Explicit { edges: minus },
    ));

    d.add_population(PopulationSpec::new(&names.ff_plus, 1, 1.0, 1.0).with_bias(1));
    d.add_population(PopulationSpec::new(&names.ff_minus, 1, 1.0, 1.0).with_bias(1));
    let leak = 1.0 - decay_factor::<f64>(1.0)?;
    d.add_population(
        PopulationSpec::new(&names.b, cfg.b_size, 0.5 / leak, 1.0)
            .with_threshold_step(1.0 / leak)
            .with_bias((cfg.b_size / 2) as i32),
    );
    let plastic = |name: &str, pre: &str, sign, r: &str, adaptation| SynapseSpec {
        name: name.into(),
        pre: pre.into(),
        post: names.b.clone(),
        sign,
        connectivity: Connectivity::AllToAll {
            weight: 0,
            include_self: true,
        },
        plasticity: Some(PlasticitySpec {
            reinforcement_population: r.into(),
            reinforcement_index: 0,
            adaptation,
            w_min: cfg.w_min,
            w_max: cfg.w_max,
        }),
    };
    d.add_synapses(plastic(
        &names.plastic_plus,
        &names.ff_plus,
        Sign::Excitatory,
        &names.r_plus,
        Adaptation::Increment,
    ));
    d.add_synapses(plastic(
        &names.plastic_minus,
        &names.ff_minus,
        Sign::Inhibitory,
        &names.r_minus,
        Adaptation::Decrement,
    ));
    Ok(names)
}

/// The error population and R± alone: replays a 1 kHz error trace (one
/// position-coded spike per sample at 1° resolution) and reports whether either
/// R neuron fired.
pub struct TriggerProbe {
    network: Network<f64>,
    error: PopulationId,
    r_plus: PopulationId,
    r_minus: PopulationId,
    steps_per_sample: u32,
}

impl TriggerProbe {
    pub fn new(cfg: &AdaptationConfig) -> Result<Self, ControlError> {
        const N: usize = 361;
        let steps_per_sample = 20;
        let mut d = NetworkDescription::new();
        d.add_population(PopulationSpec::new("error", N, 1.0, 1.0));
        let names = adaptation_fragment(&mut d, cfg, "error", N, 1.0, steps_per_sample)?;
        d.populations
            .retain(|p| p.name == "error" || p.name == names.r_plus || p.name == names.r_minus);
        d.synapses.retain(|s| s.plasticity.is_none());
        let network = d.build::<f64>(&crate::standard_generators())?;
        let id = |n: &str| network.population_id(n).expect("probe population");
        Ok(Self {
            error: id("error"),
            r_plus: id(&names.r_plus),
            r_minus: id(&names.r_minus),
            network,
            steps_per_sample,
        })
    }

    pub fn fires(&self, trace: &[f64]) -> Result<bool, ControlError> {
        let mut eng = Engine::new(EngineConfig::default(), self.network.clone())?;
        let centre = 180.0;
        let mut fired = false;
        let mut check = |out: &SpikeBatch| {
            fired |= out.indices_in(self.r_plus).next().is_some() || out.indices_in(self.r_minus).next().is_some();
        };
        for &e in trace {
            let mut b = SpikeBatch::new(eng.next_timestep());
            b.push(self.error, (centre + e).round().clamp(0.0, 2.0 * centre) as usize);
            check(&eng.run_step(&b)?);
            for _ in 1..self.steps_per_sample {
                check(&eng.run_step(&SpikeBatch::new(eng.next_timestep()))?);
            }
        }
        // The last sample integrates one step after injection.
        check(&eng.run_step(&SpikeBatch::new(eng.next_timestep()))?);
        Ok(fired)
    }
}
