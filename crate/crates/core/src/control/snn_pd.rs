//! Position-coded spiking PD.
//!
//! The error and rate populations each carry one spike per update. Every
//! (error, rate) pair owns a coincidence neuron (threshold 2) wired to the
//! output neuron `round(c + g_P·(i − c) + g_D·(j − c))`, so the output index is
//! the PD law evaluated in index space and saturates at the population edges.

use serde::{Deserialize, Serialize};

use super::adaptation::{adaptation_fragment, AdaptationConfig, AdaptationLayers};
use super::{ControlError, ControlSignal, Controller, OutputDecode, PdGains, ThrustMap};
use crate::engine::{
    Connectivity, Edge, Engine, EngineConfig, EngineError, GeneratorParams, NetworkDescription, PopulationId,
    PopulationSpec, Sign, SpikeBatch, SynapseSpec,
};
use crate::scalar::Scalar;

pub const POP_ERROR: &str = "pd_error";
pub const POP_RATE: &str = "pd_rate";
pub const POP_COINCIDENCE: &str = "pd_coincidence";
pub const POP_OUTPUT: &str = "pd_output";

/// Engine steps from injecting (θ, θ̇) to the output spike.
pub const PD_LATENCY: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SnnPdParams<T> {
    /// Size of the error, rate and output populations.
    pub n: usize,
    /// Error population spans ±`angle_range` degrees.
    pub angle_range: T,
    /// Rate population spans ±`rate_range` deg/s.
    pub rate_range: T,
    pub gains: PdGains<T>,
    pub decode: OutputDecode<T>,
    pub thrust: ThrustMap<T>,
    /// Engine steps per controller update (20 × 50 µs = 1 ms).
    pub steps_per_update: u32,
    pub adaptation: Option<AdaptationConfig>,
}

impl<T: Scalar> Default for SnnPdParams<T> {
    fn default() -> Self {
        Self {
            n: 361,
            angle_range: T::lit(180.0),
            rate_range: T::lit(1500.0),
            gains: PdGains::full_range(),
            decode: OutputDecode {
                n: 361,
                t_min: T::lit(-1850.0),
                t_max: T::lit(1850.0),
            },
            thrust: ThrustMap::default(),
            steps_per_update: 20,
            adaptation: None,
        }
    }
}

impl<T: Scalar> SnnPdParams<T> {
    pub fn angle_step(&self) -> T {
        T::lit(2.0) * self.angle_range / T::lit((self.n - 1) as f64)
    }

    pub fn rate_step(&self) -> T {
        T::lit(2.0) * self.rate_range / T::lit((self.n - 1) as f64)
    }

    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    /// (g_P, g_D): output indices per error / rate index.
    pub fn index_gains(&self) -> (f64, f64) {
        let (kp, kd) = self.gains.per_degree();
        let du = self.decode.bin_width();
        (
            (kp * self.angle_step() / du).to_f64_lossy(),
            (kd * self.rate_step() / du).to_f64_lossy(),
        )
    }

    fn encode(&self, x: T, step: T) -> usize {
        let c = self.center() as f64;
        let k = (x / step).to_f64_lossy();
        if k.is_nan() {
            return self.center();
        }
        (c + k).round().clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn error_index(&self, theta: T) -> usize {
        self.encode(theta, self.angle_step())
    }

    pub fn rate_index(&self, rate: T) -> usize {
        self.encode(rate, self.rate_step())
    }

    fn validate(&self) -> Result<(), ControlError> {
        if self.n < 3 || self.n % 2 == 0 {
            return Err(ControlError::Config("PD populations need an odd size >= 3".into()));
        }
        if self.decode.n != self.n {
            return Err(ControlError::Config("output decode size differs from population size".into()));
        }
        if !(self.angle_range > T::zero() && self.rate_range > T::zero()) {
            return Err(ControlError::Config("input ranges must be positive".into()));
        }
        if self.steps_per_update as u64 <= PD_LATENCY {
            return Err(ControlError::Config(format!(
                "an update needs more than {PD_LATENCY} engine steps"
            )));
        }
        Ok(())
    }
}

fn param(p: &GeneratorParams, k: &str) -> Result<f64, EngineError> {
    p.get(k)
        .copied()
        .ok_or_else(|| EngineError::Config(format!("missing parameter `{k}`")))
}

/// Coincidence wiring. `axis = 0`: pre `i` drives cells `(i, ·)`;
/// `axis = 1`: pre `j` drives cells `(·, j)`. Cell `(i, j)` is `i·n + j`.
pub fn coincidence_edges(p: &GeneratorParams, pre: usize, post: usize) -> Result<Vec<Edge>, EngineError> {
    let axis = param(p, "axis")? as u32;
    let n = pre;
    if post != n * n || axis > 1 {
        return Err(EngineError::Config(format!("coincidence expects n -> n², got {pre} -> {post}")));
    }
    let n = n as u32;
    let mut edges = Vec::with_capacity((n * n) as usize);
    for a in 0..n {
        for b in 0..n {
            let cell = if axis == 0 { a * n + b } else { b * n + a };
            edges.push((a, cell, 1));
        }
    }
    Ok(edges)
}

/// Cell `(i, j)` -> output `round(c + g_p·(i − c) + g_d·(j − c))`, clamped.
pub fn pd_shift_edges(p: &GeneratorParams, pre: usize, post: usize) -> Result<Vec<Edge>, EngineError> {
    let (gp, gd) = (param(p, "g_p")?, param(p, "g_d")?);
    let n = post;
    if pre != n * n {
        return Err(EngineError::Config(format!("pd_shift expects n² -> n, got {pre} -> {post}")));
    }
    let c = ((n - 1) / 2) as f64;
    let top = (n - 1) as f64;
    let mut edges = Vec::with_capacity(pre);
    for i in 0..n {
        for j in 0..n {
            let k = (c + gp * (i as f64 - c) + gd * (j as f64 - c)).round().clamp(0.0, top);
            edges.push(((i * n + j) as u32, k as u32, 1));
        }
    }
    Ok(edges)
}

pub(crate) fn register_generators(g: &mut crate::engine::Generators) {
    g.register("coincidence", coincidence_edges);
    g.register("pd_shift", pd_shift_edges);
}

fn excitatory(name: &str, pre: &str, post: &str, connectivity: Connectivity) -> SynapseSpec {
    SynapseSpec {
        name: name.into(),
        pre: pre.into(),
        post: post.into(),
        sign: Sign::Excitatory,
        connectivity,
        plasticity: None,
    }
}

/// Network description of the PD controller (and, if configured, the
/// adaptation pathway). Returns the description and any build warnings.
pub fn snn_pd_network<T: Scalar>(
    p: &SnnPdParams<T>,
) -> Result<(NetworkDescription, Option<AdaptationLayers>, Vec<String>), ControlError> {
    p.validate()?;
    let n = p.n;
    let (gp, gd) = p.index_gains();
    let mut warnings = Vec::new();
    for (name, g) in [("g_P", gp), ("g_D", gd)] {
        if g > p.center() as f64 {
            warnings.push(format!(
                "{name} = {g:.1} output indices per input index: one input step spans more than half the output range"
            ));
        }
    }

    let mut d = NetworkDescription::new();
    d.add_population(PopulationSpec::new(POP_ERROR, n, 1.0, 1.0));
    d.add_population(PopulationSpec::new(POP_RATE, n, 1.0, 1.0));
    d.add_population(PopulationSpec::new(POP_COINCIDENCE, n * n, 2.0, 1.0));
    d.add_population(PopulationSpec::new(POP_OUTPUT, n, 1.0, 1.0));
    let gen = |name: &str, kv: &[(&str, f64)]| Connectivity::Generator {
        name: name.into(),
        params: kv.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
    };
    d.add_synapses(excitatory(
        "error->coincidence",
        POP_ERROR,
        POP_COINCIDENCE,
        gen("coincidence", &[("axis", 0.0)]),
    ));
    d.add_synapses(excitatory(
        "rate->coincidence",
        POP_RATE,
        POP_COINCIDENCE,
        gen("coincidence", &[("axis", 1.0)]),
    ));
    d.add_synapses(excitatory(
        "coincidence->output",
        POP_COINCIDENCE,
        POP_OUTPUT,
        gen("pd_shift", &[("g_p", gp), ("g_d", gd)]),
    ));
    let layers = match &p.adaptation {
        Some(cfg) => Some(adaptation_fragment(
            &mut d,
            cfg,
            POP_ERROR,
            n,
            p.angle_step().to_f64_lossy(),
            p.steps_per_update,
        )?),
        None => None,
    };
    Ok((d, layers, warnings))
}

struct FeedForward {
    b: PopulationId,
    last_fire: Vec<Option<u64>>,
    half: usize,
    step: f64,
}

/// Spiking PD controller, optionally with the adaptive feed-forward term.
pub struct SnnPd<T> {
    params: SnnPdParams<T>,
    engine: Engine<T>,
    error: PopulationId,
    rate: PopulationId,
    output: PopulationId,
    ff: Option<FeedForward>,
    last_index: usize,
    warnings: Vec<String>,
    /// Spikes of the reinforcement neurons during the last update: (R+, R−).
    last_reinforcement: (bool, bool),
    reinforcement_ids: Option<(PopulationId, PopulationId)>,
}

impl<T: Scalar> SnnPd<T> {
    pub fn new(params: SnnPdParams<T>, config: EngineConfig) -> Result<Self, ControlError> {
        let (description, layers, warnings) = snn_pd_network(&params)?;
        let network = description.build::<T>(&crate::standard_generators())?;
        let id = |name: &str| {
            network
                .population_id(name)
                .ok_or_else(|| ControlError::Config(format!("missing population `{name}`")))
        };
        let (error, rate, output) = (id(POP_ERROR)?, id(POP_RATE)?, id(POP_OUTPUT)?);
        let (ff, reinforcement_ids) = match (&layers, &params.adaptation) {
            (Some(l), Some(cfg)) => (
                Some(FeedForward {
                    b: id(&l.b)?,
                    last_fire: vec![None; cfg.b_size],
                    half: cfg.b_size / 2,
                    step: cfg.b_step,
                }),
                Some((id(&l.r_plus)?, id(&l.r_minus)?)),
            ),
            _ => (None, None),
        };
        let center = params.center();
        Ok(Self {
            engine: Engine::new(config, network)?,
            params,
            error,
            rate,
            output,
            ff,
            last_index: center,
            warnings,
            last_reinforcement: (false, false),
            reinforcement_ids,
        })
    }

    pub fn params(&self) -> &SnnPdParams<T> {
        &self.params
    }

    pub fn engine(&self) -> &Engine<T> {
        &self.engine
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Output neuron that fired in the last update.
    pub fn last_index(&self) -> usize {
        self.last_index
    }

    pub fn last_reinforcement(&self) -> (bool, bool) {
        self.last_reinforcement
    }

    /// Number of B neurons that fired within the last update period.
    pub fn active_b(&self) -> usize {
        let Some(ff) = &self.ff else { return 0 };
        let now = self.engine.next_timestep();
        let window = self.params.steps_per_update as u64;
        ff.last_fire
            .iter()
            .filter(|t| t.is_some_and(|t| t + window >= now))
            .count()
    }

    pub fn ff_term(&self) -> T {
        match &self.ff {
            Some(ff) => T::lit((self.active_b() as f64 - ff.half as f64) * ff.step),
            None => T::zero(),
        }
    }

    /// Runs one update period; returns the output index of the PD pathway.
    pub fn step_indices(&mut self, i: usize, j: usize) -> Result<usize, ControlError> {
        let mut batch = SpikeBatch::new(self.engine.next_timestep());
        batch.push(self.error, i);
        batch.push(self.rate, j);
        let mut fired_output = None;
        let mut reinforcement = (false, false);
        for k in 0..self.params.steps_per_update {
            let input = if k == 0 {
                std::mem::take(&mut batch)
            } else {
                SpikeBatch::new(self.engine.next_timestep())
            };
            let out = self.engine.run_step(&input)?;
            if fired_output.is_none() {
                fired_output = out.indices_in(self.output).next();
            }
            if let Some(ff) = &mut self.ff {
                for b in out.indices_in(ff.b) {
                    ff.last_fire[b] = Some(out.timestep);
                }
            }
            if let Some((rp, rm)) = self.reinforcement_ids {
                reinforcement.0 |= out.indices_in(rp).next().is_some();
                reinforcement.1 |= out.indices_in(rm).next().is_some();
            }
        }
        self.last_reinforcement = reinforcement;
        if let Some(idx) = fired_output {
            self.last_index = idx;
        }
        Ok(self.last_index)
    }
}

impl<T: Scalar> Controller<T> for SnnPd<T> {
    fn update(&mut self, theta: T, theta_rate: T) -> Result<ControlSignal<T>, ControlError> {
        let (i, j) = (self.params.error_index(theta), self.params.rate_index(theta_rate));
        let idx = self.step_indices(i, j)?;
        let ff_term = self.ff_term();
        let clamp = self.params.thrust.u_clamp;
        let u = (self.params.decode.decode(idx)? + ff_term).max(-clamp).min(clamp);
        let (thrust_left, thrust_right) = self.params.thrust.apply(u);
        Ok(ControlSignal {
            theta,
            theta_rate,
            u,
            thrust_left,
            thrust_right,
            ff_term,
        })
    }

    fn name(&self) -> &'static str {
        if self.ff.is_some() {
            "snn-pd-adaptive"
        } else {
            "snn-pd"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{cpu_pd, AngleUnit};

    #[test]
    fn zero_input_decodes_to_center() {
        let mut pd = SnnPd::<f64>::new(SnnPdParams::default(), EngineConfig::default()).unwrap();
        let s = pd.update(0.0, 0.0).unwrap();
        assert_eq!(pd.last_index(), 180);
        assert!((s.u + 5.12).abs() < 0.01, "{}", s.u);
        assert_eq!(s.ff_term, 0.0);
        assert_eq!(pd.engine().next_timestep(), 20);
    }

    #[test]
    fn positive_edge_saturates() {
        let mut pd = SnnPd::<f64>::new(SnnPdParams::default(), EngineConfig::default()).unwrap();
        pd.update(180.0, 0.0).unwrap();
        assert_eq!(pd.last_index(), 360);
        pd.update(-500.0, -5000.0).unwrap();
        assert_eq!(pd.last_index(), 0);
    }

    #[test]
    fn output_appears_three_steps_after_input() {
        let mut pd = SnnPd::<f64>::new(SnnPdParams::default(), EngineConfig::default()).unwrap();
        let (e, r, o) = (pd.error, pd.rate, pd.output);
        let mut b = SpikeBatch::new(0);
        b.push(e, 190);
        b.push(r, 180);
        let mut first = None;
        for k in 0..6u64 {
            let input = if k == 0 { b.clone() } else { SpikeBatch::new(k) };
            let out = pd.engine.run_step(&input).unwrap();
            if first.is_none() && out.indices_in(o).next().is_some() {
                first = Some(k);
            }
        }
        assert_eq!(first, Some(PD_LATENCY));
    }

    #[test]
    fn sweep_matches_reference_within_one_bin() {
        let params = SnnPdParams::<f64>::default();
        let mut pd = SnnPd::new(params.clone(), EngineConfig::default()).unwrap();
        let d = params.decode;
        let offset = d.decode(params.center()).unwrap().abs();
        let mut worst: f64 = 0.0;
        let mut rng = 12345u64;
        for _ in 0..100 {
            // Inputs on the population grid, so only output rounding remains.
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = (rng >> 33) as usize % 361;
            let j = (rng >> 13) as usize % 361;
            let theta = (i as f64 - 180.0) * params.angle_step();
            let rate = (j as f64 - 180.0) * params.rate_step();
            let u = pd.update(theta, rate).unwrap().u;
            let reference = cpu_pd(theta, rate, &params.gains).clamp(d.t_min, d.decode(360).unwrap());
            worst = worst.max((u - reference).abs());
        }
        assert!(worst <= d.bin_width() + offset, "worst {worst}");
    }

    #[test]
    fn large_gain_warns() {
        let params = SnnPdParams::<f64> {
            gains: PdGains::new(3000.0, 0.0, AngleUnit::Degree).unwrap(),
            ..Default::default()
        };
        let pd = SnnPd::new(params, EngineConfig::default()).unwrap();
        assert_eq!(pd.warnings().len(), 1);
    }
}
