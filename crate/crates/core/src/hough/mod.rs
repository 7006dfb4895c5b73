//! Line-orientation estimation: a spiking Hough network and a dense CPU
//! reference over the same (θ, r) grid, plus the rate-converting smoother.

mod cpu;
mod grid;
mod smoothing;
pub mod snn;

pub use cpu::{cpu_estimate_pixels, CpuHoughEstimator, CpuHoughParams};
pub use grid::{column_readout_edges, hough_transform_edges, HoughGrid};
pub use smoothing::{sliding_average, SlidingAverage};
pub use snn::{decode_memory, hough_network, HoughNetworkParams, SnnHoughEstimator};

use crate::engine::Generators;

/// Decoded line orientation.
///
/// `valid` is false when the estimator had no fresh detection this update;
/// `theta` then holds the last detection (`None` before the first).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleEstimate {
    pub theta: Option<f64>,
    pub timestep: u64,
    pub valid: bool,
}

pub fn register_generators(g: &mut Generators) {
    g.register("hough_transform", hough_transform_edges);
    g.register("column_readout", column_readout_edges);
}

/// Downsampled pixels whose centres lie within `half_width` pixels of the line
/// `x cos θ + y sin θ = r_px` (centre-origin, downsampled units).
pub fn line_pixels(grid: &HoughGrid, theta_deg: f64, r_px: f64, half_width: f64) -> Vec<(u16, u16)> {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let mut out = Vec::new();
    for y in 0..grid.frame_height {
        for x in 0..grid.frame_width {
            let (xc, yc) = grid.pixel_coords(x, y);
            let d = (xc * c + yc * s) / grid.coordinate_scale - r_px;
            if d.abs() <= half_width {
                out.push((x, y));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent brute force: vote every (pixel, θ) into a map keyed by the
    /// rounded r bin, then pick the winner with the documented tie rule.
    fn brute_force(pixels: &[(u16, u16)], min_count: u32) -> Option<f64> {
        use std::collections::BTreeMap;
        let mut votes: BTreeMap<(i64, i64), u32> = BTreeMap::new();
        for &(x, y) in pixels {
            let xc = (x as f64 + 0.5 - 30.0) * 4.0;
            let yc = (y as f64 + 0.5 - 22.5) * 4.0;
            for i in 0..90i64 {
                let th = (-89.0 + 2.0 * i as f64).to_radians();
                let r = xc * th.cos() + yc * th.sin();
                let k = (r / 10.0 + 0.5).floor() as i64;
                *votes.entry((i, k)).or_default() += 1;
            }
        }
        let mut best: Option<(u32, f64)> = None;
        for (&(i, _), &n) in &votes {
            let th = -89.0 + 2.0 * i as f64;
            match best {
                Some((bn, bt)) if n < bn || (n == bn && (bt.abs(), bt) <= (th.abs(), th)) => {}
                _ => best = Some((n, th)),
            }
        }
        best.filter(|&(n, _)| n >= min_count).map(|(_, t)| t)
    }

    fn pixels_on(grid: &HoughGrid, theta: f64, r: f64, count: usize) -> Vec<(u16, u16)> {
        let mut px = line_pixels(grid, theta, r, 0.5);
        // Spread the selection along the line.
        let step = (px.len() / count).max(1);
        px = px.into_iter().step_by(step).take(count).collect();
        assert_eq!(px.len(), count);
        px
    }

    #[test]
    fn cpu_single_line_at_zero() {
        let g = HoughGrid::default();
        // A pixel column is symmetric about θ = 0, so ±1° tie; the tie goes to -1°.
        let px = pixels_on(&g, 0.0, 0.0, 40);
        assert_eq!(cpu_estimate_pixels(&g, &px, 20), Some(-1.0));
        assert_eq!(brute_force(&px, 20), Some(-1.0));
    }

    #[test]
    fn cpu_stronger_line_wins() {
        let g = HoughGrid::default();
        let mut px = pixels_on(&g, 31.0, 0.0, 25);
        px.extend(pixels_on(&g, -41.0, 12.0, 21));
        let cpu = cpu_estimate_pixels(&g, &px, 20);
        assert_eq!(cpu, brute_force(&px, 20));
        assert!((cpu.unwrap() - 30.0).abs() <= 2.0, "{cpu:?}");
    }

    #[test]
    fn cpu_too_few_events_is_invalid() {
        let g = HoughGrid::default();
        let px = pixels_on(&g, 11.0, 0.0, 10);
        assert_eq!(cpu_estimate_pixels(&g, &px, 20), None);
        let mut est = CpuHoughEstimator::new(g, CpuHoughParams::default());
        for &(x, y) in &px {
            est.push_pixel(100, x, y);
        }
        let e = est.estimate(1000);
        assert!(!e.valid);
        assert_eq!(e.theta, None);
    }

    #[test]
    fn cpu_matches_brute_force_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let g = HoughGrid::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(0..120);
            let px: Vec<(u16, u16)> = (0..n).map(|_| (rng.random_range(0..60), rng.random_range(0..45))).collect();
            assert_eq!(cpu_estimate_pixels(&g, &px, 5), brute_force(&px, 5));
        }
    }

    #[test]
    fn cpu_window_evicts_old_events() {
        let g = HoughGrid::default();
        let px = pixels_on(&g, 21.0, 0.0, 30);
        let mut est = CpuHoughEstimator::new(g, CpuHoughParams::default());
        for &(x, y) in &px {
            est.push_pixel(1_500, x, y);
        }
        let a = est.estimate(2_000);
        assert!(a.valid);
        assert!(est.estimate(4_000).valid);
        let b = est.estimate(4_500);
        assert!(!b.valid);
        assert_eq!(b.theta, a.theta);
        assert_eq!(b.timestep, 90);
    }
}
