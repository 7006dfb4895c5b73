//! Lockstep closed loop: plant → camera → estimator every 50 µs; controller
//! every 1 ms.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::metrics::wrapped_diff;
use super::HarnessError;
use crate::control::{Controller, CpuPd, SnnPd};
use crate::engine::trace::SpikeTraceWriter;
use crate::engine::EngineConfig;
use crate::events::{DvsEvent, EventCamera};
use crate::hough::{CpuHoughEstimator, SlidingAverage, SnnHoughEstimator};
use crate::plant::{DiskProfile, Encoder, Plant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Snn,
    Cpu,
    /// Error from the joint encoder against a set-point profile; no vision.
    EncoderDirect,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Snn => "snn",
            Backend::Cpu => "cpu",
            Backend::EncoderDirect => "encoder-direct",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    CpuPd,
    SnnPd,
    SnnPdAdaptive,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::CpuPd => "cpu-pd",
            ControllerKind::SnnPd => "snn-pd",
            ControllerKind::SnnPdAdaptive => "snn-pd-adaptive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopSpec {
    pub backend: Backend,
    pub controller: ControllerKind,
    pub disk: DiskProfile,
    /// Roll set-point for the encoder-direct backend.
    pub setpoint: DiskProfile,
    pub disturbance: bool,
    pub duration_us: u64,
    /// Keep every SNN Hough spike as `timestep,population,neuron_index` CSV.
    pub record_spikes: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthRow {
    pub time_us: u64,
    pub roll_deg: f64,
    pub roll_rate: f64,
    pub disk_deg: f64,
    pub thrust_l: f64,
    pub thrust_r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRow {
    pub time_us: u64,
    pub theta_deg: Option<f64>,
    pub valid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlRow {
    pub time_ms: u64,
    pub theta: f64,
    pub theta_dot: f64,
    pub u: f64,
    pub thrust_l: f64,
    pub thrust_r: f64,
    pub ff_term: f64,
}

/// Everything a run records.
#[derive(Clone, Debug, Default)]
pub struct Traces {
    pub backend: String,
    /// 1 kHz plant ground truth.
    pub ground_truth: Vec<GroundTruthRow>,
    /// Raw estimator output at its native rate.
    pub estimates: Vec<EstimateRow>,
    pub control: Vec<ControlRow>,
    /// 1 kHz encoder readings of the drone joint and the disk.
    pub roll_encoder: Vec<f64>,
    pub disk_encoder: Vec<f64>,
    /// 1 kHz set-point (encoder-direct runs).
    pub setpoint: Vec<f64>,
    pub spikes_csv: Option<Vec<u8>>,
    pub events: u64,
    pub max_roll_rate: f64,
    pub fault: Option<String>,
}

/// Backward difference over `n` samples at 1 kHz, optionally on a periodic signal.
#[derive(Clone, Debug)]
pub struct RateEstimator {
    n: usize,
    period: Option<f64>,
    history: VecDeque<f64>,
}

impl RateEstimator {
    pub fn new(n: usize, period: Option<f64>) -> Self {
        Self {
            n,
            period,
            history: VecDeque::with_capacity(n + 1),
        }
    }

    /// Rate in units/s after adding `x`.
    pub fn push(&mut self, x: f64) -> f64 {
        self.history.push_back(x);
        if self.history.len() > self.n + 1 {
            self.history.pop_front();
        }
        let (first, last) = (self.history[0], x);
        let span = self.history.len() - 1;
        if span == 0 {
            return 0.0;
        }
        let d = match self.period {
            Some(p) => wrapped_diff(last, first, p),
            None => last - first,
        };
        d * 1000.0 / span as f64
    }
}

enum Vision {
    Snn {
        est: Box<SnnHoughEstimator<f64>>,
        smooth: SlidingAverage<f64>,
        last_smoothed: f64,
    },
    Cpu {
        est: Box<CpuHoughEstimator>,
        smooth: SlidingAverage<f64>,
        last_smoothed: f64,
    },
}

fn controller(cfg: &Config, spec: &LoopSpec) -> Result<Box<dyn Controller<f64>>, HarnessError> {
    let gains = match spec.backend {
        Backend::EncoderDirect => cfg.controller.encoder_gains,
        _ => cfg.controller.vision_gains,
    };
    let engine = cfg.engine;
    Ok(match spec.controller {
        ControllerKind::CpuPd => Box::new(CpuPd::new(gains, cfg.controller.thrust)),
        ControllerKind::SnnPd | ControllerKind::SnnPdAdaptive => {
            let mut p = cfg
                .controller
                .snn_pd_params(spec.controller == ControllerKind::SnnPdAdaptive);
            p.gains = gains;
            Box::new(SnnPd::new(p, engine)?)
        }
    })
}

/// Runs one closed loop.
pub fn simulate(cfg: &Config, spec: &LoopSpec) -> Result<Traces, HarnessError> {
    cfg.validate()?;
    let dt = cfg.engine.timestep_us;
    let steps_per_ms = (1000 / dt) as u64;
    let mut ctrl = controller(cfg, spec)?;
    let thrust0 = cfg.controller.thrust.apply(0.0);
    let disturbance = if spec.disturbance {
        cfg.plant.disturbance_torque()
    } else {
        0.0
    };
    let mut plant = Plant::new(cfg.plant.params.clone(), spec.disk.clone(), disturbance, dt, thrust0)?;
    let seed = cfg.engine.seed;
    let mut roll_enc = Encoder::from_params(&cfg.plant.params, seed.wrapping_mul(2).wrapping_add(1));
    let mut disk_enc = Encoder::from_params(&cfg.plant.params, seed.wrapping_mul(2).wrapping_add(2));
    let relative = |p: &Plant<f64>| p.state.disk_angle - p.state.roll;

    let mut vision = match spec.backend {
        Backend::Snn => Some(Vision::Snn {
            est: Box::new(SnnHoughEstimator::new(
                cfg.grid.clone(),
                &cfg.snn_hough,
                EngineConfig { seed, ..cfg.engine },
            )?),
            smooth: SlidingAverage::new(cfg.smoothing.window, cfg.smoothing.decimation),
            last_smoothed: 0.0,
        }),
        Backend::Cpu => Some(Vision::Cpu {
            est: Box::new(CpuHoughEstimator::new(cfg.grid.clone(), cfg.cpu_hough.clone())),
            smooth: SlidingAverage::new(cfg.smoothing.cpu_window.max(1), 1),
            last_smoothed: 0.0,
        }),
        Backend::EncoderDirect => None,
    };
    let mut camera = vision
        .is_some()
        .then(|| EventCamera::new(cfg.camera.clone(), 0, relative(&plant)));
    let period = vision.is_some().then_some(180.0);
    let mut rate = RateEstimator::new(cfg.smoothing.rate_samples, period);

    let total = spec.duration_us / dt as u64;
    let mut tr = Traces {
        backend: spec.backend.name().into(),
        ..Default::default()
    };
    let ms = (total / steps_per_ms) as usize + 1;
    tr.ground_truth.reserve(ms);
    tr.control.reserve(ms);
    let mut events: Vec<DvsEvent> = Vec::new();
    let mut spikes = match (&vision, spec.record_spikes) {
        (Some(Vision::Snn { .. }), true) => Some(SpikeTraceWriter::new(Vec::new())?),
        _ => None,
    };
    for k in 0..=total {
        let t = plant.state.time_us;
        let tick = k % steps_per_ms == 0;
        if let (Some(cam), Some(v)) = (&mut camera, &mut vision) {
            events.clear();
            if t > 0 {
                cam.advance(t, relative(&plant), &mut events);
            }
            tr.events += events.len() as u64;
            match v {
                Vision::Snn {
                    est,
                    smooth,
                    last_smoothed,
                } => {
                    let e = est.step(&events)?;
                    if let Some(w) = &mut spikes {
                        w.write_batch(est.engine().network(), est.last_spikes())?;
                    }
                    tr.estimates.push(EstimateRow {
                        time_us: t,
                        theta_deg: e.theta,
                        valid: e.valid,
                    });
                    if let Some(s) = smooth.push(e.theta.unwrap_or(0.0)) {
                        *last_smoothed = s;
                    }
                }
                Vision::Cpu {
                    est,
                    smooth,
                    last_smoothed,
                } => {
                    est.push(&events)?;
                    if tick {
                        let e = est.estimate(t);
                        tr.estimates.push(EstimateRow {
                            time_us: t,
                            theta_deg: e.theta,
                            valid: e.valid,
                        });
                        if let Some(s) = smooth.push(e.theta.unwrap_or(0.0)) {
                            *last_smoothed = s;
                        }
                    }
                }
            }
        }
        if tick {
            let s = plant.state;
            let roll_read = roll_enc.read(s.roll);
            let disk_read = disk_enc.read(s.disk_angle);
            let sp = spec.setpoint.angle_at(t);
            let theta = match &vision {
                Some(Vision::Snn { last_smoothed, .. } | Vision::Cpu { last_smoothed, .. }) => *last_smoothed,
                None => sp - roll_read,
            };
            let theta_dot = rate.push(theta);
            let c = ctrl.update(theta, theta_dot)?;
            plant.set_command(c.thrust_left, c.thrust_right);
            tr.control.push(ControlRow {
                time_ms: t / 1000,
                theta,
                theta_dot,
                u: c.u,
                thrust_l: c.thrust_left,
                thrust_r: c.thrust_right,
                ff_term: c.ff_term,
            });
            tr.ground_truth.push(GroundTruthRow {
                time_us: t,
                roll_deg: s.roll,
                roll_rate: s.roll_rate,
                disk_deg: s.disk_angle,
                thrust_l: s.thrust_left,
                thrust_r: s.thrust_right,
            });
            tr.roll_encoder.push(roll_read);
            tr.disk_encoder.push(disk_read);
            tr.setpoint.push(sp);
        }
        if k == total {
            break;
        }
        match plant.step() {
            Ok(s) => tr.max_roll_rate = tr.max_roll_rate.max(s.roll_rate.abs()),
            Err(e) => {
                tr.fault = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(w) = spikes {
        tr.spikes_csv = Some(w.finish()?);
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_estimator() {
        let mut r = RateEstimator::new(5, None);
        assert_eq!(r.push(0.0), 0.0);
        for k in 1..10 {
            let v = r.push(k as f64 * 0.5);
            assert!((v - 500.0).abs() < 1e-9);
        }
        let mut w = RateEstimator::new(5, Some(180.0));
        w.push(89.0);
        assert!((w.push(-89.0) - 2000.0).abs() < 1e-9);
    }

    fn still(backend: Backend, controller: ControllerKind) -> Traces {
        let spec = LoopSpec {
            backend,
            controller,
            disk: DiskProfile::Constant {
                start_deg: 0.0,
                deg_per_s: 0.0,
            },
            setpoint: DiskProfile::Constant {
                start_deg: 0.0,
                deg_per_s: 0.0,
            },
            disturbance: false,
            duration_us: 200_000,
            record_spikes: false,
        };
        simulate(&Config::default(), &spec).unwrap()
    }

    #[test]
    fn resting_loop_stays_put() {
        for backend in [Backend::Snn, Backend::Cpu] {
            let tr = still(backend, ControllerKind::CpuPd);
            assert_eq!(tr.control.len(), 201);
            assert_eq!(tr.events, 0);
            assert!(tr.ground_truth.iter().all(|g| g.roll_deg.abs() < 0.5), "{backend:?}");
        }
        let tr = still(Backend::EncoderDirect, ControllerKind::SnnPd);
        assert!(tr.ground_truth.iter().all(|g| g.roll_deg.abs() < 1.0));
    }
}
