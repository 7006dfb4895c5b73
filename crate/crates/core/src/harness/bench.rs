//! Pipeline throughput and latency.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::HarnessError;
use crate::events::{load_events, synthesize_events, DvsEvent, OrderingPolicy, SensorGeometry, SyntheticSceneConfig};
use crate::hough::{line_pixels, CpuHoughEstimator, SnnHoughEstimator};

#[derive(Clone, Debug, PartialEq)]
pub enum EventSource {
    File(PathBuf),
    /// Pattern rotating at `bench.synth_speed` for `bench.synth_duration_ms`.
    Synth,
}

impl EventSource {
    pub fn parse(s: &str) -> Self {
        if s == "synth" {
            EventSource::Synth
        } else {
            EventSource::File(s.into())
        }
    }

    pub fn load(&self, cfg: &Config) -> Result<Vec<DvsEvent>, HarnessError> {
        Ok(match self {
            EventSource::File(p) => load_events(p, SensorGeometry::default(), OrderingPolicy::StableSort)?,
            EventSource::Synth => {
                let mut scene = SyntheticSceneConfig::rotating(cfg.bench.synth_speed);
                scene.camera = cfg.camera.clone();
                scene.seed = cfg.engine.seed;
                synthesize_events(&scene, cfg.bench.synth_duration_ms * 1000)
            }
        })
    }
}

/// Deterministic part of a benchmark: everything measured in simulated time.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineFigures {
    pub events: u64,
    pub timesteps: u64,
    pub simulated_us: u64,
    pub snn_estimates: u64,
    pub cpu_estimates: u64,
    /// Steps from injecting a super-threshold volley to the first memory spike.
    pub latency_steps: Option<u64>,
}

impl PipelineFigures {
    pub fn latency_us(&self, timestep_us: u32) -> Option<u64> {
        self.latency_steps.map(|s| s * timestep_us as u64)
    }

    pub fn rate_ratio(&self) -> f64 {
        self.snn_estimates as f64 / self.cpu_estimates.max(1) as f64
    }
}

/// Wall-clock part; varies run to run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub snn_seconds: f64,
    pub cpu_seconds: f64,
    pub events_per_s: f64,
    pub timesteps_per_s: f64,
    pub cpu_events_per_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub figures: PipelineFigures,
    pub timing: Timing,
}

/// Steps from a volley on a 30° line to the first memory-layer spike of a fresh network.
pub fn measure_latency(cfg: &Config) -> Result<Option<u64>, HarnessError> {
    let mut est = SnnHoughEstimator::<f64>::new(cfg.grid.clone(), &cfg.snn_hough, cfg.engine)?;
    let volley = line_pixels(&cfg.grid, 30.0, 0.0, 0.5);
    let injected = est.step_pixels(&volley)?.timestep;
    if !est.active_memory().is_empty() {
        return Ok(Some(0));
    }
    for _ in 0..64 {
        let e = est.step_pixels(&[])?;
        if !est.active_memory().is_empty() {
            return Ok(Some(e.timestep - injected));
        }
    }
    Ok(None)
}

/// Feeds `events` through both estimators in simulated time; wall-clock
/// figures are the best of `bench.repeats` passes.
pub fn run_benchmark(cfg: &Config, events: &[DvsEvent]) -> Result<BenchReport, HarnessError> {
    let dt = cfg.engine.timestep_us as u64;
    let steps_per_ms = 1000 / dt;
    // Whole milliseconds covering the stream; step k covers ((k-1)·dt, k·dt].
    let ms = events.last().map_or(0, |e| e.t).div_ceil(1000).max(1);
    let timesteps = ms * steps_per_ms;

    let repeats = cfg.bench.repeats.max(1);
    let mut snn_seconds = f64::INFINITY;
    let mut snn_estimates = 0;
    for _ in 0..repeats {
        let mut snn = SnnHoughEstimator::<f64>::new(cfg.grid.clone(), &cfg.snn_hough, cfg.engine)?;
        snn_estimates = 0;
        let start = Instant::now();
        let mut i = 0;
        for k in 1..=timesteps {
            let j = i + events[i..].partition_point(|e| e.t <= k * dt);
            snn.step(&events[i..j])?;
            snn_estimates += 1;
            i = j;
        }
        snn_seconds = snn_seconds.min(start.elapsed().as_secs_f64());
    }

    let mut cpu_seconds = f64::INFINITY;
    let mut cpu_estimates = 0;
    for _ in 0..repeats {
        let mut cpu = CpuHoughEstimator::new(cfg.grid.clone(), cfg.cpu_hough.clone());
        cpu_estimates = 0;
        let start = Instant::now();
        let mut i = 0;
        for m in 1..=ms {
            let now = m * 1000;
            let j = i + events[i..].partition_point(|e| e.t <= now);
            cpu.push(&events[i..j])?;
            cpu.estimate(now);
            cpu_estimates += 1;
            i = j;
        }
        cpu_seconds = cpu_seconds.min(start.elapsed().as_secs_f64());
    }

    let n = events.len() as f64;
    let per_s = |x: f64, s: f64| if s > 0.0 { x / s } else { f64::INFINITY };
    Ok(BenchReport {
        figures: PipelineFigures {
            events: events.len() as u64,
            timesteps,
            simulated_us: timesteps * dt,
            snn_estimates,
            cpu_estimates,
            latency_steps: measure_latency(cfg)?,
        },
        timing: Timing {
            snn_seconds,
            cpu_seconds,
            events_per_s: per_s(n, snn_seconds),
            timesteps_per_s: per_s(timesteps as f64, snn_seconds),
            cpu_events_per_s: per_s(n, cpu_seconds),
        },
    })
}

/// Checked-in reference throughput.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// SNN pipeline events/s on the synthetic benchmark stream.
    pub events_per_s: f64,
    /// Long-term goal; informational only.
    pub target_events_per_s: f64,
    pub note: String,
}

impl Baseline {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionCheck {
    pub baseline: f64,
    pub measured: f64,
    /// Lowest acceptable throughput.
    pub floor: f64,
    pub pass: bool,
}

pub fn check_regression(measured: f64, baseline: &Baseline, tolerance: f64) -> RegressionCheck {
    let floor = baseline.events_per_s * (1.0 - tolerance);
    RegressionCheck {
        baseline: baseline.events_per_s,
        measured,
        floor,
        pass: measured >= floor,
    }
}
