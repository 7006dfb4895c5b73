//! Dense sliding-window Hough accumulator, evaluated once per period.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AngleEstimate, HoughGrid};
use crate::events::{downsample, DvsEvent, EventError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpuHoughParams {
    pub window_us: u64,
    pub period_us: u64,
    /// Minimum votes in the winning cell.
    pub min_count: u32,
    pub downsample_factor: u16,
    /// Timestep length used to stamp estimates.
    pub timestep_us: u64,
}

impl Default for CpuHoughParams {
    fn default() -> Self {
        Self {
            window_us: 3_000,
            period_us: 1_000,
            min_count: 20,
            downsample_factor: 4,
            timestep_us: 50,
        }
    }
}

pub struct CpuHoughEstimator {
    grid: HoughGrid,
    params: CpuHoughParams,
    /// Cell indices each buffered pixel voted for, cached per pixel.
    pixel_cells: Vec<Vec<u32>>,
    window: VecDeque<(u64, u32)>,
    counts: Vec<u32>,
    held: Option<f64>,
}

impl CpuHoughEstimator {
    pub fn new(grid: HoughGrid, params: CpuHoughParams) -> Self {
        let trig = grid.trig_table();
        let mut pixel_cells = Vec::with_capacity(grid.pixel_count());
        for y in 0..grid.frame_height {
            for x in 0..grid.frame_width {
                pixel_cells.push(grid.pixel_bins(x, y, &trig).map(|c| c as u32).collect());
            }
        }
        Self {
            counts: vec![0; grid.cell_count()],
            grid,
            params,
            pixel_cells,
            window: VecDeque::new(),
            held: None,
        }
    }

    pub fn params(&self) -> &CpuHoughParams {
        &self.params
    }

    pub fn grid(&self) -> &HoughGrid {
        &self.grid
    }

    /// Adds full-resolution events to the window.
    pub fn push(&mut self, events: &[DvsEvent]) -> Result<(), EventError> {
        for e in events {
            let d = downsample(*e, self.params.downsample_factor)?;
            if d.x < self.grid.frame_width && d.y < self.grid.frame_height {
                self.push_pixel(d.t, d.x, d.y);
            }
        }
        Ok(())
    }

    pub fn push_pixel(&mut self, t_us: u64, x: u16, y: u16) {
        let p = self.grid.pixel_index(x, y) as u32;
        for &c in &self.pixel_cells[p as usize] {
            self.counts[c as usize] += 1;
        }
        self.window.push_back((t_us, p));
    }

    /// Estimate from the events in `(now - window, now]`.
    pub fn estimate(&mut self, now_us: u64) -> AngleEstimate {
        if now_us >= self.params.window_us {
            let cutoff = now_us - self.params.window_us;
            while let Some(&(t, p)) = self.window.front() {
                if t > cutoff {
                    break;
                }
                for &c in &self.pixel_cells[p as usize] {
                    self.counts[c as usize] -= 1;
                }
                self.window.pop_front();
            }
        }
        let timestep = now_us / self.params.timestep_us.max(1);
        match self.best_cell() {
            Some((theta, count)) if count >= self.params.min_count => {
                self.held = Some(theta);
                AngleEstimate {
                    theta: Some(theta),
                    timestep,
                    valid: true,
                }
            }
            _ => AngleEstimate {
                theta: self.held,
                timestep,
                valid: false,
            },
        }
    }

    /// Current vote count of one cell.
    pub fn count(&self, theta_index: usize, r_index: usize) -> u32 {
        self.counts[self.grid.cell(theta_index, r_index)]
    }

    /// θ (bin centre) and votes of the winning cell. Ties prefer smaller |θ|, then smaller θ.
    fn best_cell(&self) -> Option<(f64, u32)> {
        let r_bins = self.grid.r_bins();
        let mut best: Option<(u32, f64)> = None;
        for (cell, &n) in self.counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let theta = self.grid.theta_of_index(cell / r_bins);
            let better = match best {
                None => true,
                Some((bn, bt)) => n > bn || (n == bn && (theta.abs(), theta) < (bt.abs(), bt)),
            };
            if better {
                best = Some((n, theta));
            }
        }
        best.map(|(n, t)| (t, n))
    }
}

/// Dense estimate over one fixed set of downsampled pixels.
pub fn cpu_estimate_pixels(grid: &HoughGrid, pixels: &[(u16, u16)], min_count: u32) -> Option<f64> {
    let mut est = CpuHoughEstimator::new(
        grid.clone(),
        CpuHoughParams {
            min_count,
            ..CpuHoughParams::default()
        },
    );
    for &(x, y) in pixels {
        est.push_pixel(0, x, y);
    }
    let e = est.estimate(0);
    e.valid.then_some(e.theta).flatten()
}
