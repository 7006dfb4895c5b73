//! Scenario runners. Each returns its metrics plus the recorded traces.

use super::config::Config;
use super::metrics::{delay_corrected_rmse, rmse, step_metrics, StepMetrics};
use super::sim::{simulate, Backend, ControllerKind, LoopSpec, Traces};
use super::HarnessError;
use crate::plant::DiskProfile;

fn still() -> DiskProfile {
    DiskProfile::Constant {
        start_deg: 0.0,
        deg_per_s: 0.0,
    }
}

fn us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingResult {
    pub speed: f64,
    pub backend: Backend,
    /// Delay-corrected RMSE between disk and drone encoders, degrees.
    pub rmse: f64,
    pub delay_ms: f64,
    /// No fault and the roll rate stayed bounded.
    pub stable: bool,
    /// Stable and the delay landed in the configured range.
    pub valid: bool,
    pub max_roll_rate: f64,
    pub diagnostics: Option<String>,
}

/// Metric of a tracking run from its traces; the code path is the same for every backend.
pub fn analyse_tracking(cfg: &Config, backend: Backend, speed: f64, tr: &Traces) -> TrackingResult {
    let t = &cfg.tracking;
    let n = tr.roll_encoder.len();
    let expected = (t.duration_s * 1000.0).round() as usize + 1;
    let window = n.saturating_sub((t.analysis_s * 1000.0).round() as usize)..n;
    let dc = delay_corrected_rmse(&tr.disk_encoder, &tr.roll_encoder, window, t.max_shift_ms);
    let mut diagnostics = tr.fault.clone();
    if tr.max_roll_rate > t.max_roll_rate {
        diagnostics.get_or_insert_with(|| format!("roll rate reached {:.0} deg/s", tr.max_roll_rate));
    }
    if n < expected {
        diagnostics.get_or_insert_with(|| format!("run stopped after {n} of {expected} ms"));
    }
    let stable = diagnostics.is_none();
    let (rmse, delay_ms) = dc.map_or((f64::NAN, f64::NAN), |d| (d.rmse, d.shift as f64));
    let [lo, hi] = t.valid_shift_ms;
    TrackingResult {
        speed,
        backend,
        rmse,
        delay_ms,
        stable,
        valid: stable && (lo..=hi).contains(&delay_ms),
        max_roll_rate: tr.max_roll_rate,
        diagnostics,
    }
}

/// Disk spun up to `speed` and held; the drone follows with the given vision backend.
pub fn run_tracking(
    cfg: &Config,
    backend: Backend,
    speed: f64,
    record_spikes: bool,
) -> Result<(TrackingResult, Traces), HarnessError> {
    let spec = LoopSpec {
        backend,
        controller: ControllerKind::CpuPd,
        disk: DiskProfile::SpinUp {
            deg_per_s: speed,
            ramp_s: cfg.tracking.ramp_s,
        },
        setpoint: still(),
        disturbance: false,
        duration_us: us(cfg.tracking.duration_s),
        record_spikes,
    };
    let tr = simulate(cfg, &spec)?;
    Ok((analyse_tracking(cfg, backend, speed, &tr), tr))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub backend: Backend,
    pub targets: Vec<f64>,
    /// One entry per target, measured on the drone encoder from the start of its turn.
    pub steps: Vec<StepMetrics>,
    pub stable: bool,
}

/// Disk turned between `targets`, each held for `step.hold_s`.
pub fn run_step(
    cfg: &Config,
    backend: Backend,
    controller: ControllerKind,
    targets: &[f64],
    record_spikes: bool,
) -> Result<(StepResult, Traces), HarnessError> {
    let s = &cfg.step;
    let profile = DiskProfile::steps(targets, s.hold_s, s.turn_s);
    let duration = s.hold_s * (targets.len() + 1) as f64 + s.turn_s * targets.len() as f64;
    let (disk, setpoint) = match backend {
        Backend::EncoderDirect => (still(), profile),
        _ => (profile, still()),
    };
    let spec = LoopSpec {
        backend,
        controller,
        disk,
        setpoint,
        disturbance: false,
        duration_us: us(duration),
        record_spikes,
    };
    let tr = simulate(cfg, &spec)?;
    let period = ((s.hold_s + s.turn_s) * 1000.0).round() as usize;
    let mut from = 0.0;
    let steps = targets
        .iter()
        .enumerate()
        .map(|(k, &to)| {
            let t0 = (s.hold_s * 1000.0).round() as usize + k * period;
            let end = (t0 + period).min(tr.roll_encoder.len());
            let m = step_metrics(&tr.roll_encoder[..end], t0, from, to, s.settle_band_deg);
            from = to;
            m
        })
        .collect();
    let stable = tr.fault.is_none() && tr.max_roll_rate <= cfg.tracking.max_roll_rate;
    Ok((
        StepResult {
            backend,
            targets: targets.to_vec(),
            steps,
            stable,
        },
        tr,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetpointResult {
    pub setpoint: f64,
    /// RMSE of set-point minus drone encoder over the hold.
    pub rmse: f64,
    /// Mean error over the trailing `steady_s` of the hold.
    pub steady_error: f64,
    pub final_ff: f64,
    pub stable: bool,
}

/// Warm-up at 0° followed by a hold at `setpoint`; the error enters the controller
/// straight from the joint encoder.
pub fn run_adaptation_setpoint(
    cfg: &Config,
    controller: ControllerKind,
    weight: bool,
    setpoint: f64,
) -> Result<(SetpointResult, Traces), HarnessError> {
    let a = &cfg.adaptation;
    let spec = LoopSpec {
        backend: Backend::EncoderDirect,
        controller,
        disk: still(),
        setpoint: DiskProfile::Waypoints {
            points: vec![[0.0, 0.0], [a.warmup_s, 0.0], [a.warmup_s, setpoint]],
        },
        disturbance: weight,
        duration_us: us(a.warmup_s + a.hold_s),
        record_spikes: false,
    };
    let tr = simulate(cfg, &spec)?;
    let start = (a.warmup_s * 1000.0).round() as usize + 1;
    let steady = ((a.warmup_s + a.hold_s - a.steady_s) * 1000.0).round() as usize;
    let err = |k: usize| tr.setpoint[k] - tr.roll_encoder[k];
    let n = tr.roll_encoder.len();
    let tail: Vec<f64> = (steady.min(n)..n).map(err).collect();
    let result = SetpointResult {
        setpoint,
        rmse: rmse((start.min(n)..n).map(err)),
        steady_error: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
        final_ff: tr.control.last().map_or(0.0, |c| c.ff_term),
        stable: tr.fault.is_none() && n == ((a.warmup_s + a.hold_s) * 1000.0).round() as usize + 1,
    };
    Ok((result, tr))
}

/// Every configured set-point, each from a fresh controller.
pub fn run_adaptation(
    cfg: &Config,
    controller: ControllerKind,
    weight: bool,
) -> Result<Vec<(SetpointResult, Traces)>, HarnessError> {
    cfg.adaptation
        .setpoints
        .iter()
        .map(|&sp| run_adaptation_setpoint(cfg, controller, weight, sp))
        .collect()
}
