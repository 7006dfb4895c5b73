//! End-to-end scenarios: run, then write a complete run directory.

use std::path::{Path, PathBuf};

use super::bench::{check_regression, run_benchmark, Baseline, BenchReport, EventSource, RegressionCheck};
use super::config::Config;
use super::experiments::{run_adaptation, run_step, run_tracking, SetpointResult, StepResult, TrackingResult};
use super::output::{MetricRow, RunWriter};
use super::sim::{Backend, ControllerKind};
use super::HarnessError;

pub struct Outcome<R> {
    pub result: R,
    pub metrics: Vec<MetricRow>,
    pub manifest: PathBuf,
}

fn fmt_speed(speed: f64) -> String {
    // 800 -> "800", 12.5 -> "12.5"
    format!("{speed}")
}

pub fn track(
    cfg: &Config,
    backend: Backend,
    speeds: &[f64],
    record_spikes: bool,
    out: &Path,
    command: &[String],
) -> Result<Outcome<Vec<TrackingResult>>, HarnessError> {
    let mut w = RunWriter::create(out)?;
    let mut metrics = Vec::new();
    let mut results = Vec::new();
    for &speed in speeds {
        let (r, tr) = run_tracking(cfg, backend, speed, record_spikes)?;
        let run = format!("{}@{}", backend.name(), fmt_speed(speed));
        w.write_traces(&format!("{}_{}_", backend.name(), fmt_speed(speed)), &tr)?;
        metrics.push(MetricRow::new(&run, "rmse_deg", r.rmse));
        metrics.push(MetricRow::new(&run, "delay_correction_ms", r.delay_ms));
        metrics.push(MetricRow::new(&run, "stable", r.stable));
        metrics.push(MetricRow::new(&run, "valid", r.valid));
        metrics.push(MetricRow::new(&run, "max_roll_rate", r.max_roll_rate));
        metrics.push(MetricRow::new(&run, "events", tr.events));
        let rate = tr.estimates.len() as f64 / cfg.tracking.duration_s;
        metrics.push(MetricRow::new(&run, "estimate_rate_hz", rate));
        if let Some(d) = &r.diagnostics {
            metrics.push(MetricRow::new(&run, "diagnostics", d));
        }
        results.push(r);
    }
    w.write_metrics(&metrics)?;
    let manifest = w.finish(cfg, command)?;
    Ok(Outcome {
        result: results,
        metrics,
        manifest,
    })
}

pub fn step(
    cfg: &Config,
    backend: Backend,
    controller: ControllerKind,
    targets: &[f64],
    record_spikes: bool,
    out: &Path,
    command: &[String],
) -> Result<Outcome<StepResult>, HarnessError> {
    let mut w = RunWriter::create(out)?;
    let (r, tr) = run_step(cfg, backend, controller, targets, record_spikes)?;
    w.write_traces(&format!("{}_", backend.name()), &tr)?;
    let mut metrics = vec![MetricRow::new(backend.name(), "stable", r.stable)];
    for (target, m) in r.targets.iter().zip(&r.steps) {
        let run = format!("{}@{}", backend.name(), target);
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| v.to_string());
        metrics.push(MetricRow::new(&run, "rise_time_ms", opt(m.rise_time_ms)));
        metrics.push(MetricRow::new(&run, "overshoot_pct", m.overshoot_pct));
        metrics.push(MetricRow::new(&run, "settling_ms", opt(m.settling_ms)));
        metrics.push(MetricRow::new(&run, "final_error_deg", m.final_error));
    }
    w.write_metrics(&metrics)?;
    let manifest = w.finish(cfg, command)?;
    Ok(Outcome {
        result: r,
        metrics,
        manifest,
    })
}

pub fn adapt(
    cfg: &Config,
    controller: ControllerKind,
    weight: bool,
    out: &Path,
    command: &[String],
) -> Result<Outcome<Vec<SetpointResult>>, HarnessError> {
    let mut w = RunWriter::create(out)?;
    let mut metrics = Vec::new();
    let mut results = Vec::new();
    let tag = if weight { "weight" } else { "no_weight" };
    for (r, tr) in run_adaptation(cfg, controller, weight)? {
        let run = format!("{}/{}@{}", controller.name(), tag, r.setpoint);
        w.write_traces(&format!("{}_{}_{}_", controller.name(), tag, r.setpoint), &tr)?;
        metrics.push(MetricRow::new(&run, "rmse_deg", r.rmse));
        metrics.push(MetricRow::new(&run, "steady_error_deg", r.steady_error));
        metrics.push(MetricRow::new(&run, "final_ff", r.final_ff));
        metrics.push(MetricRow::new(&run, "stable", r.stable));
        results.push(r);
    }
    w.write_metrics(&metrics)?;
    let manifest = w.finish(cfg, command)?;
    Ok(Outcome {
        result: results,
        metrics,
        manifest,
    })
}

pub struct BenchOutcome {
    pub report: BenchReport,
    pub regression: Option<RegressionCheck>,
}

/// Wall-clock figures go to `timing.txt`; `metrics.csv` keeps only simulated-time figures.
pub fn bench(
    cfg: &Config,
    source: &EventSource,
    baseline: Option<&Path>,
    out: &Path,
    command: &[String],
) -> Result<Outcome<BenchOutcome>, HarnessError> {
    let mut w = RunWriter::create(out)?;
    let events = source.load(cfg)?;
    let report = run_benchmark(cfg, &events)?;
    let f = &report.figures;
    let dt = cfg.engine.timestep_us;
    let metrics = vec![
        MetricRow::new("bench", "events", f.events),
        MetricRow::new("bench", "timesteps", f.timesteps),
        MetricRow::new("bench", "simulated_us", f.simulated_us),
        MetricRow::new("bench", "snn_estimates", f.snn_estimates),
        MetricRow::new("bench", "cpu_estimates", f.cpu_estimates),
        MetricRow::new("bench", "estimate_rate_ratio", f.rate_ratio()),
        MetricRow::new(
            "bench",
            "latency_steps",
            f.latency_steps.map_or("none".into(), |s| s.to_string()),
        ),
        MetricRow::new(
            "bench",
            "latency_us",
            f.latency_us(dt).map_or("none".into(), |s| s.to_string()),
        ),
    ];
    w.write_metrics(&metrics)?;
    let t = &report.timing;
    let mut lines = vec![
        format!("snn_seconds = {}", t.snn_seconds),
        format!("events_per_s = {}", t.events_per_s),
        format!("timesteps_per_s = {}", t.timesteps_per_s),
        format!("cpu_seconds = {}", t.cpu_seconds),
        format!("cpu_events_per_s = {}", t.cpu_events_per_s),
    ];
    let regression = match baseline {
        Some(p) => {
            let b = Baseline::load(p)?;
            let c = check_regression(t.events_per_s, &b, cfg.bench.regression);
            lines.push(format!("baseline_events_per_s = {}", c.baseline));
            lines.push(format!("regression_floor = {}", c.floor));
            lines.push(format!("regression_gate = {}", if c.pass { "pass" } else { "fail" }));
            Some(c)
        }
        None => None,
    };
    w.write_timing(&lines)?;
    let manifest = w.finish(cfg, command)?;
    Ok(Outcome {
        result: BenchOutcome { report, regression },
        metrics,
        manifest,
    })
}
