use serde::{Deserialize, Serialize};

use crate::engine::{Edge, EngineError, GeneratorParams};

/// Discretised (θ, r) space over a downsampled, centre-origin frame.
///
/// θ bins are centred at `-90 + (i + 1/2) * 180/theta_bins` degrees. r bins
/// have width `r_bin_width` and are centred on its integer multiples, so bin
/// `k` spans `[(k - 1/2) w, (k + 1/2) w)`, with enough bins to cover
/// `(-r_max, r_max)`. Pixel coordinates are the downsampled pixel centres
/// relative to the frame centre, multiplied by `coordinate_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughGrid {
    pub theta_bins: usize,
    pub r_bin_width: f64,
    pub r_max: f64,
    pub frame_width: u16,
    pub frame_height: u16,
    pub coordinate_scale: f64,
}

impl Default for HoughGrid {
    fn default() -> Self {
        Self {
            theta_bins: 90,
            r_bin_width: 10.0,
            r_max: 200.0,
            frame_width: 60,
            frame_height: 45,
            coordinate_scale: 4.0,
        }
    }
}

impl HoughGrid {
    pub fn theta_resolution(&self) -> f64 {
        180.0 / self.theta_bins as f64
    }

    /// Bin centre of θ index `i`, degrees.
    pub fn theta_of_index(&self, i: usize) -> f64 {
        -90.0 + (i as f64 + 0.5) * self.theta_resolution()
    }

    /// θ index whose bin contains `theta` (degrees, wrapped into [-90, 90)).
    pub fn index_of_theta(&self, theta: f64) -> usize {
        let wrapped = (theta + 90.0).rem_euclid(180.0);
        ((wrapped / self.theta_resolution()).floor() as usize).min(self.theta_bins - 1)
    }

    fn half_r_bins(&self) -> i64 {
        (self.r_max / self.r_bin_width).round() as i64
    }

    pub fn r_bins(&self) -> usize {
        (2 * self.half_r_bins() + 1) as usize
    }

    /// Centre of r bin `j`.
    pub fn r_of_index(&self, j: usize) -> f64 {
        (j as i64 - self.half_r_bins()) as f64 * self.r_bin_width
    }

    /// r bin containing `r`, or `None` outside the grid.
    pub fn r_index(&self, r: f64) -> Option<usize> {
        let k = (r / self.r_bin_width + 0.5).floor() as i64;
        let j = k + self.half_r_bins();
        (0..self.r_bins() as i64).contains(&j).then_some(j as usize)
    }

    /// Half-open interval `[lo, hi)` covered by r bin `j`.
    pub fn r_bin_bounds(&self, j: usize) -> (f64, f64) {
        let c = self.r_of_index(j);
        (c - self.r_bin_width / 2.0, c + self.r_bin_width / 2.0)
    }

    pub fn cell_count(&self) -> usize {
        self.theta_bins * self.r_bins()
    }

    /// Hough-layer neuron index; cells of one θ column are contiguous.
    pub fn cell(&self, theta_index: usize, r_index: usize) -> usize {
        theta_index * self.r_bins() + r_index
    }

    pub fn pixel_count(&self) -> usize {
        self.frame_width as usize * self.frame_height as usize
    }

    pub fn pixel_index(&self, x: u16, y: u16) -> usize {
        y as usize * self.frame_width as usize + x as usize
    }

    /// Centre-origin coordinates of a downsampled pixel, in r units.
    pub fn pixel_coords(&self, x: u16, y: u16) -> (f64, f64) {
        let xc = (x as f64 + 0.5 - self.frame_width as f64 / 2.0) * self.coordinate_scale;
        let yc = (y as f64 + 0.5 - self.frame_height as f64 / 2.0) * self.coordinate_scale;
        (xc, yc)
    }

    pub fn r_value(&self, x: f64, y: f64, theta_index: usize) -> f64 {
        let (s, c) = self.theta_of_index(theta_index).to_radians().sin_cos();
        x * c + y * s
    }

    /// Precomputed `(cos, sin)` of every θ bin centre.
    pub fn trig_table(&self) -> Vec<(f64, f64)> {
        (0..self.theta_bins)
            .map(|i| {
                let (s, c) = self.theta_of_index(i).to_radians().sin_cos();
                (c, s)
            })
            .collect()
    }

    /// r bin of every θ column for one pixel. Panics if the frame does not fit
    /// the grid, which a valid grid rules out.
    pub fn pixel_bins(&self, x: u16, y: u16, trig: &[(f64, f64)]) -> impl Iterator<Item = usize> + '_ {
        let (xc, yc) = self.pixel_coords(x, y);
        let trig = trig.to_vec();
        (0..self.theta_bins).map(move |i| {
            let (c, s) = trig[i];
            let r = xc * c + yc * s;
            let j = self
                .r_index(r)
                .unwrap_or_else(|| panic!("r={r} outside grid for pixel ({x},{y})"));
            self.cell(i, j)
        })
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.theta_bins == 0 || !(self.r_bin_width > 0.0) || !(self.r_max > 0.0) {
            return Err(EngineError::Config("degenerate Hough grid".into()));
        }
        let (xc, yc) = self.pixel_coords(0, 0);
        let reach = xc.hypot(yc);
        let (lo, _) = self.r_bin_bounds(0);
        if -reach < lo || self.r_index(reach).is_none() {
            return Err(EngineError::Config(format!(
                "frame reaches |r| = {reach:.1}, beyond the grid"
            )));
        }
        Ok(())
    }

    pub fn to_params(&self) -> GeneratorParams {
        [
            ("theta_bins", self.theta_bins as f64),
            ("r_bin_width", self.r_bin_width),
            ("r_max", self.r_max),
            ("frame_width", self.frame_width as f64),
            ("frame_height", self.frame_height as f64),
            ("coordinate_scale", self.coordinate_scale),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_params(p: &GeneratorParams) -> Result<Self, EngineError> {
        let get = |k: &str| {
            p.get(k)
                .copied()
                .ok_or_else(|| EngineError::Config(format!("missing Hough parameter `{k}`")))
        };
        let grid = Self {
            theta_bins: get("theta_bins")? as usize,
            r_bin_width: get("r_bin_width")?,
            r_max: get("r_max")?,
            frame_width: get("frame_width")? as u16,
            frame_height: get("frame_height")? as u16,
            coordinate_scale: get("coordinate_scale")?,
        };
        grid.validate()?;
        Ok(grid)
    }
}

fn weight_param(p: &GeneratorParams) -> i32 {
    p.get("weight").copied().unwrap_or(1.0) as i32
}

/// Binary pixel -> (θ, r) connectivity: `r = x cos θ + y sin θ` lands in exactly one r bin per θ.
pub fn hough_transform_edges(p: &GeneratorParams, pre: usize, post: usize) -> Result<Vec<Edge>, EngineError> {
    let grid = HoughGrid::from_params(p)?;
    if pre != grid.pixel_count() || post != grid.cell_count() {
        return Err(EngineError::Config(format!(
            "hough_transform expects {}x{}, got {pre}x{post}",
            grid.pixel_count(),
            grid.cell_count()
        )));
    }
    let w = weight_param(p);
    let trig = grid.trig_table();
    let mut edges = Vec::with_capacity(pre * grid.theta_bins);
    for y in 0..grid.frame_height {
        for x in 0..grid.frame_width {
            let src = grid.pixel_index(x, y) as u32;
            edges.extend(grid.pixel_bins(x, y, &trig).map(|cell| (src, cell as u32, w)));
        }
    }
    Ok(edges)
}

/// Every (θ, r) cell drives the readout neuron of its θ column.
pub fn column_readout_edges(p: &GeneratorParams, pre: usize, post: usize) -> Result<Vec<Edge>, EngineError> {
    let theta_bins = post;
    if theta_bins == 0 || pre % theta_bins != 0 {
        return Err(EngineError::Config(format!(
            "column_readout cannot fold {pre} cells into {post} columns"
        )));
    }
    let per_column = pre / theta_bins;
    let w = weight_param(p);
    Ok((0..pre as u32).map(|c| (c, c / per_column as u32, w)).collect())
}
