//! Backend-agnostic run metrics on 1 kHz traces.

/// `a − b` wrapped into `[-period/2, period/2)`.
pub fn wrapped_diff(a: f64, b: f64, period: f64) -> f64 {
    (a - b + period / 2.0).rem_euclid(period) - period / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayCorrected {
    pub rmse: f64,
    /// Samples by which `response` lags `reference`.
    pub shift: usize,
}

/// RMSE of `response[k] − reference[k − s]` over `window`, minimised over
/// shifts `s ∈ [0, max_shift]`. Differences wrap at 360°. Shifts that would
/// index before the start of `reference` are skipped.
pub fn delay_corrected_rmse(
    reference: &[f64],
    response: &[f64],
    window: std::ops::Range<usize>,
    max_shift: usize,
) -> Option<DelayCorrected> {
    let end = window.end.min(reference.len()).min(response.len());
    let start = window.start;
    if start >= end {
        return None;
    }
    let mut best: Option<DelayCorrected> = None;
    for s in 0..=max_shift.min(start) {
        let sum: f64 = (start..end)
            .map(|k| wrapped_diff(response[k], reference[k - s], 360.0).powi(2))
            .sum();
        let rmse = (sum / (end - start) as f64).sqrt();
        if best.is_none_or(|b| rmse < b.rmse) {
            best = Some(DelayCorrected { rmse, shift: s });
        }
    }
    best
}

pub fn rmse(errors: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = errors.into_iter().fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    /// 10 % → 90 % of the step, ms.
    pub rise_time_ms: Option<f64>,
    /// Peak beyond the target as a percentage of the step size.
    pub overshoot_pct: f64,
    /// First time after which the response stays within the band, ms from the step.
    pub settling_ms: Option<f64>,
    pub final_error: f64,
}

/// Step figures of `response` (1 kHz) for a step `from → to` starting at `t0`.
pub fn step_metrics(response: &[f64], t0: usize, from: f64, to: f64, band: f64) -> StepMetrics {
    let seg = &response[t0.min(response.len())..];
    let size = to - from;
    let frac = |y: f64| if size == 0.0 { 1.0 } else { (y - from) / size };
    let first = |p: f64| seg.iter().position(|&y| frac(y) >= p);
    let rise_time_ms = match (first(0.1), first(0.9)) {
        (Some(a), Some(b)) if size != 0.0 => Some((b - a) as f64),
        _ => None,
    };
    let peak = seg.iter().map(|&y| frac(y)).fold(f64::NEG_INFINITY, f64::max);
    let overshoot_pct = if size == 0.0 { 0.0 } else { ((peak - 1.0) * 100.0).max(0.0) };
    let settling_ms = match seg.iter().rposition(|&y| (y - to).abs() > band) {
        None => Some(0.0),
        Some(k) if k + 1 < seg.len() => Some((k + 1) as f64),
        Some(_) => None,
    };
    let final_error = seg.last().map_or(0.0, |&y| to - y);
    StepMetrics {
        rise_time_ms,
        overshoot_pct,
        settling_ms,
        final_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap() {
        assert_eq!(wrapped_diff(350.0, 10.0, 360.0), -20.0);
        assert_eq!(wrapped_diff(10.0, 350.0, 360.0), 20.0);
        assert_eq!(wrapped_diff(100.0, -80.0, 180.0), 0.0);
        assert_eq!(wrapped_diff(720.5, 0.0, 360.0), 0.5);
    }

    #[test]
    fn recovers_pure_delay() {
        let signal = |t: f64| 30.0 * (t * 0.0031).sin() + 12.0 * (t * 0.0173).cos() + 0.8 * t;
        let reference: Vec<f64> = (0..10_000).map(|k| signal(k as f64)).collect();
        let response: Vec<f64> = (0..10_000).map(|k| signal(k as f64 - 120.0)).collect();
        let d = delay_corrected_rmse(&reference, &response, 5000..10_000, 300).unwrap();
        assert!((d.shift as i64 - 120).abs() <= 1, "{d:?}");
        assert!(d.rmse < 1e-9);
    }

    #[test]
    fn delay_is_found_through_wraps() {
        // Constant speed: a lag is indistinguishable from an angle offset.
        let reference: Vec<f64> = (0..2000).map(|k| (k as f64 * 1.2).rem_euclid(360.0)).collect();
        let response: Vec<f64> = (0..2000).map(|k| ((k as f64 - 40.0) * 1.2).rem_euclid(360.0)).collect();
        let d = delay_corrected_rmse(&reference, &response, 1000..2000, 300).unwrap();
        assert_eq!(d.shift, 40);
        assert!(d.rmse < 1e-9);
    }

    #[test]
    fn step_figures() {
        let y: Vec<f64> = (0..1000)
            .map(|k| if k < 100 { 0.0 } else { 40.0 * (1.0 - (-((k - 100) as f64) / 50.0).exp()) })
            .collect();
        let m = step_metrics(&y, 100, 0.0, 40.0, 2.0);
        // 10-90 % of a first-order response: τ·ln 9.
        assert!((m.rise_time_ms.unwrap() - 50.0 * 9f64.ln()).abs() <= 1.0);
        assert_eq!(m.overshoot_pct, 0.0);
        assert!((m.settling_ms.unwrap() - 50.0 * 20f64.ln()).abs() <= 1.0);
        let flat = vec![0.0; 100];
        let m = step_metrics(&flat, 0, 0.0, 0.0, 2.0);
        assert_eq!(m.settling_ms, Some(0.0));
        assert_eq!(m.rise_time_ms, None);
        assert_eq!(rmse([3.0, 4.0]), (12.5f64).sqrt());
    }
}
