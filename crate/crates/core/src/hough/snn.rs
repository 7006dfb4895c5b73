//! Five-layer spiking Hough network:
//!
//! ```text
//! b  Cartesian input (downsampled frame)      threshold 1
//! c  (θ, r) Hough cells                       threshold 20·Wgt, decay 3 steps
//! d  θ readout, one neuron per column         threshold 1
//! e  clean-up, lateral all-to-all inhibition  threshold 1
//! f  memory, self-excitation + overwrite      threshold 1
//! ```
//!
//! An event volley injected at step `t` reaches `f` at step `t + 5`.

use serde::{Deserialize, Serialize};

use super::{AngleEstimate, HoughGrid};
use crate::engine::{
    Connectivity, Engine, EngineConfig, EngineError, NetworkDescription, PopulationId, PopulationSpec,
    Sign, SpikeBatch, SynapseSpec,
};
use crate::events::{downsample, DvsEvent};
use crate::scalar::Scalar;

pub const LAYER_INPUT: &str = "input";
pub const LAYER_HOUGH: &str = "hough";
pub const LAYER_ANGLE: &str = "angle";
pub const LAYER_CLEANUP: &str = "cleanup";
pub const LAYER_MEMORY: &str = "memory";

/// Weights in units of Wgt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughNetworkParams {
    pub wgt: i32,
    /// Coincident input count needed by a Hough cell.
    pub hough_threshold: i32,
    pub hough_decay_tau: f64,
    pub cleanup_inhibition: i32,
    /// Inhibition of every other memory neuron by one clean-up spike.
    pub memory_inhibition: i32,
    pub downsample_factor: u16,
}

impl Default for HoughNetworkParams {
    fn default() -> Self {
        Self {
            wgt: 1,
            hough_threshold: 20,
            hough_decay_tau: 3.0,
            cleanup_inhibition: 2,
            memory_inhibition: 3,
            downsample_factor: 4,
        }
    }
}

fn synapses(name: &str, pre: &str, post: &str, sign: Sign, connectivity: Connectivity) -> SynapseSpec {
    SynapseSpec {
        name: name.into(),
        pre: pre.into(),
        post: post.into(),
        sign,
        connectivity,
        plasticity: None,
    }
}

/// Network description of the Hough pipeline for `grid`.
pub fn hough_network(grid: &HoughGrid, p: &HoughNetworkParams) -> Result<NetworkDescription, EngineError> {
    grid.validate()?;
    let n = grid.theta_bins;
    let unit = p.wgt as f64;
    let mut d = NetworkDescription::new();
    d.add_population(PopulationSpec::new(LAYER_INPUT, grid.pixel_count(), unit, 1.0).with_input_weight(p.wgt));
    d.add_population(PopulationSpec::new(
        LAYER_HOUGH,
        grid.cell_count(),
        (p.hough_threshold * p.wgt) as f64,
        p.hough_decay_tau,
    ));
    d.add_population(PopulationSpec::new(LAYER_ANGLE, n, unit, 1.0));
    d.add_population(PopulationSpec::new(LAYER_CLEANUP, n, unit, 1.0));
    d.add_population(PopulationSpec::new(LAYER_MEMORY, n, unit, 1.0).with_self_excitation(p.wgt));

    let mut hough_params = grid.to_params();
    hough_params.insert("weight".into(), p.wgt as f64);
    d.add_synapses(synapses(
        "input->hough",
        LAYER_INPUT,
        LAYER_HOUGH,
        Sign::Excitatory,
        Connectivity::Generator {
            name: "hough_transform".into(),
            params: hough_params,
        },
    ));
    d.add_synapses(synapses(
        "hough->angle",
        LAYER_HOUGH,
        LAYER_ANGLE,
        Sign::Excitatory,
        Connectivity::Generator {
            name: "column_readout".into(),
            params: [("weight".to_string(), p.wgt as f64)].into_iter().collect(),
        },
    ));
    d.add_synapses(synapses(
        "angle->cleanup",
        LAYER_ANGLE,
        LAYER_CLEANUP,
        Sign::Excitatory,
        Connectivity::OneToOne { weight: p.wgt },
    ));
    d.add_synapses(synapses(
        "cleanup->cleanup",
        LAYER_CLEANUP,
        LAYER_CLEANUP,
        Sign::Inhibitory,
        Connectivity::AllToAll {
            weight: -p.cleanup_inhibition * p.wgt,
            include_self: false,
        },
    ));
    // A clean-up spike installs its own memory neuron even when every other
    // clean-up neuron fired in the same step.
    let install = p.wgt + p.memory_inhibition * p.wgt * (n as i32 - 1);
    d.add_synapses(synapses(
        "cleanup->memory",
        LAYER_CLEANUP,
        LAYER_MEMORY,
        Sign::Excitatory,
        Connectivity::OneToOne { weight: install },
    ));
    d.add_synapses(synapses(
        "cleanup-|memory",
        LAYER_CLEANUP,
        LAYER_MEMORY,
        Sign::Inhibitory,
        Connectivity::AllToAll {
            weight: -p.memory_inhibition * p.wgt,
            include_self: false,
        },
    ));
    Ok(d)
}

/// Angle of the active memory set.
///
/// One active neuron decodes to its bin centre. Several active neurons (a
/// volley that crossed threshold in neighbouring columns in the same step)
/// decode to their circular mean on the 180°-periodic line orientation.
pub fn decode_memory(grid: &HoughGrid, active: &[usize]) -> Option<f64> {
    match active {
        [] => None,
        [i] => Some(grid.theta_of_index(*i)),
        many => {
            let (s, c) = many.iter().fold((0.0, 0.0), |(s, c), &i| {
                let a = (2.0 * grid.theta_of_index(i)).to_radians();
                (s + a.sin(), c + a.cos())
            });
            let mean = 0.5 * s.atan2(c).to_degrees();
            // atan2 returns (-180, 180]; keep the estimate in [-90, 90).
            Some(if mean >= 90.0 { mean - 180.0 } else { mean })
        }
    }
}

pub struct SnnHoughEstimator<T> {
    engine: Engine<T>,
    grid: HoughGrid,
    factor: u16,
    input: PopulationId,
    memory: PopulationId,
    active: Vec<usize>,
    held: Option<f64>,
    last_batch: SpikeBatch,
}

impl<T: Scalar> SnnHoughEstimator<T> {
    pub fn new(grid: HoughGrid, params: &HoughNetworkParams, config: EngineConfig) -> Result<Self, EngineError> {
        let description = hough_network(&grid, params)?;
        let network = description.build::<T>(&crate::standard_generators())?;
        let input = network.population_id(LAYER_INPUT).expect("input layer");
        let memory = network.population_id(LAYER_MEMORY).expect("memory layer");
        Ok(Self {
            engine: Engine::new(config, network)?,
            grid,
            factor: params.downsample_factor,
            input,
            memory,
            active: Vec::new(),
            held: None,
            last_batch: SpikeBatch::default(),
        })
    }

    pub fn engine(&self) -> &Engine<T> {
        &self.engine
    }

    pub fn grid(&self) -> &HoughGrid {
        &self.grid
    }

    /// Memory neurons that fired in the last step.
    pub fn active_memory(&self) -> &[usize] {
        &self.active
    }

    /// All spikes of the last step.
    pub fn last_spikes(&self) -> &SpikeBatch {
        &self.last_batch
    }

    /// One engine step fed with full-resolution sensor events.
    pub fn step(&mut self, events: &[DvsEvent]) -> Result<AngleEstimate, EngineError> {
        let mut batch = SpikeBatch::new(self.engine.next_timestep());
        for e in events {
            let d = downsample(*e, self.factor).map_err(|err| EngineError::Config(err.to_string()))?;
            if d.x >= self.grid.frame_width || d.y >= self.grid.frame_height {
                return Err(EngineError::Input {
                    population: self.input,
                    index: self.grid.pixel_count(),
                    size: self.grid.pixel_count(),
                });
            }
            batch.push(self.input, self.grid.pixel_index(d.x, d.y));
        }
        self.step_batch(batch)
    }

    /// One engine step fed with downsampled pixel coordinates.
    pub fn step_pixels(&mut self, pixels: &[(u16, u16)]) -> Result<AngleEstimate, EngineError> {
        let mut batch = SpikeBatch::new(self.engine.next_timestep());
        for &(x, y) in pixels {
            if x >= self.grid.frame_width || y >= self.grid.frame_height {
                return Err(EngineError::Input {
                    population: self.input,
                    index: self.grid.pixel_count(),
                    size: self.grid.pixel_count(),
                });
            }
            batch.push(self.input, self.grid.pixel_index(x, y));
        }
        self.step_batch(batch)
    }

    fn step_batch(&mut self, batch: SpikeBatch) -> Result<AngleEstimate, EngineError> {
        let out = self.engine.run_step(&batch)?;
        self.active.clear();
        self.active.extend(out.indices_in(self.memory));
        let timestep = out.timestep;
        self.last_batch = out;
        let theta = decode_memory(&self.grid, &self.active);
        let valid = theta.is_some();
        if theta.is_some() {
            self.held = theta;
        }
        Ok(AngleEstimate {
            theta: self.held,
            timestep,
            valid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_sizes() {
        let g = HoughGrid::default();
        let d = hough_network(&g, &HoughNetworkParams::default()).unwrap();
        let sizes: Vec<_> = d.populations.iter().map(|p| p.size).collect();
        assert_eq!(sizes, vec![2700, 3690, 90, 90, 90]);
        assert_eq!(d.populations[1].threshold, 20.0);
        assert_eq!(d.populations[1].decay_tau, 3.0);
    }

    #[test]
    fn memory_decode() {
        let g = HoughGrid::default();
        assert_eq!(decode_memory(&g, &[]), None);
        assert_eq!(decode_memory(&g, &[60]), Some(31.0));
        let m = decode_memory(&g, &[59, 60, 61]).unwrap();
        assert!((m - 31.0).abs() < 1e-9);
        // Wraps across ±90°.
        let m = decode_memory(&g, &[89, 0]).unwrap();
        assert!((m.abs() - 90.0).abs() < 1e-9, "{m}");
        let m = decode_memory(&g, &[88, 89, 0]).unwrap();
        assert!((m - 88.6).abs() < 0.5, "{m}");
    }

    #[test]
    fn nothing_in_nothing_out() {
        let mut est = SnnHoughEstimator::<f64>::new(
            HoughGrid::default(),
            &HoughNetworkParams::default(),
            EngineConfig::default(),
        )
        .unwrap();
        for _ in 0..10 {
            let e = est.step(&[]).unwrap();
            assert!(!e.valid);
            assert_eq!(e.theta, None);
        }
    }

    fn estimator() -> SnnHoughEstimator<f64> {
        SnnHoughEstimator::new(HoughGrid::default(), &HoughNetworkParams::default(), EngineConfig::default()).unwrap()
    }

    fn line(theta: f64, r: f64) -> Vec<(u16, u16)> {
        crate::hough::line_pixels(&HoughGrid::default(), theta, r, 0.5)
    }

    #[test]
    fn volley_reaches_memory_after_five_steps() {
        let mut est = estimator();
        let px = line(31.0, 0.0);
        assert!(px.len() >= 20);
        let e = est.step_pixels(&px).unwrap();
        assert!(!e.valid);
        for k in 1..5 {
            let e = est.step_pixels(&[]).unwrap();
            assert!(!e.valid, "memory active after {k} steps");
        }
        let e = est.step_pixels(&[]).unwrap();
        assert!(e.valid);
        assert_eq!(e.timestep, 5);
        let th = e.theta.unwrap();
        assert!((th - 31.0).abs() <= 2.0, "{th}");
        // Neighbouring columns also cross threshold on a simultaneous volley.
        let m = est.active_memory();
        assert!(m.contains(&60) && m.iter().all(|&i| (i as i64 - 60).abs() <= 5), "{m:?}");
    }

    #[test]
    fn memory_holds_then_is_overwritten() {
        let mut est = estimator();
        est.step_pixels(&line(31.0, 0.0)).unwrap();
        for _ in 0..5 {
            est.step_pixels(&[]).unwrap();
        }
        let first = est.active_memory().to_vec();
        for _ in 0..200 {
            let e = est.step_pixels(&[]).unwrap();
            assert!(e.valid);
            assert_eq!(est.active_memory(), &first[..]);
        }
        est.step_pixels(&line(-41.0, 10.0)).unwrap();
        let mut switched = None;
        for k in 1..=10 {
            let e = est.step_pixels(&[]).unwrap();
            if (e.theta.unwrap() + 41.0).abs() <= 2.0 {
                switched = Some(k);
                break;
            }
        }
        assert_eq!(switched, Some(5));
        for _ in 0..20 {
            let e = est.step_pixels(&[]).unwrap();
            assert!((e.theta.unwrap() + 41.0).abs() <= 2.0);
        }
    }

    #[test]
    fn sparse_volley_does_not_fire() {
        let mut est = estimator();
        let px: Vec<_> = line(31.0, 0.0).into_iter().take(19).collect();
        est.step_pixels(&px).unwrap();
        for _ in 0..20 {
            assert!(!est.step_pixels(&[]).unwrap().valid);
        }
    }
}
