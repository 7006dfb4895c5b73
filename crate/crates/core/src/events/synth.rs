//! Synthetic event camera viewing a half-plane black/white pattern whose
//! boundary is a line through the image centre.
//!
//! Each pixel samples an ideal intensity with a one-pixel anti-aliased edge and
//! emits an event whenever its log intensity moves `contrast_threshold` away
//! from the level at its last event. Crossing times are interpolated inside
//! each sub-step and rounded to 1 µs.

use serde::{Deserialize, Serialize};

use super::{DvsEvent, Polarity, SENSOR_HEIGHT, SENSOR_WIDTH};

/// Largest boundary displacement allowed per internal sub-step, in pixels.
const MAX_SHIFT_PX: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraParams {
    pub width: u16,
    pub height: u16,
    /// Log-intensity change that triggers an event.
    pub contrast_threshold: f64,
    /// Minimum time between two events of one pixel.
    pub refractory_us: u64,
    /// Linear intensity of the dark half-plane.
    pub dark: f64,
    /// Linear intensity of the bright half-plane.
    pub bright: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            width: SENSOR_WIDTH,
            height: SENSOR_HEIGHT,
            contrast_threshold: 1.0,
            refractory_us: 0,
            dark: 0.1,
            bright: 1.0,
        }
    }
}

/// Orientation of the pattern boundary (its normal angle in the image, degrees) over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleTrajectory {
    ConstantSpeed { start_deg: f64, deg_per_s: f64 },
    /// Piecewise-linear `(time_s, angle_deg)` points; held constant outside.
    Waypoints { points: Vec<[f64; 2]> },
}

impl AngleTrajectory {
    pub fn angle_at(&self, t_us: f64) -> f64 {
        let t = t_us * 1e-6;
        match self {
            AngleTrajectory::ConstantSpeed { start_deg, deg_per_s } => start_deg + deg_per_s * t,
            AngleTrajectory::Waypoints { points } => match points.as_slice() {
                [] => 0.0,
                [only] => only[1],
                pts => {
                    if t <= pts[0][0] {
                        return pts[0][1];
                    }
                    for w in pts.windows(2) {
                        let ([t0, a0], [t1, a1]) = (w[0], w[1]);
                        if t <= t1 {
                            if t1 <= t0 {
                                return a1;
                            }
                            return a0 + (a1 - a0) * (t - t0) / (t1 - t0);
                        }
                    }
                    pts[pts.len() - 1][1]
                }
            },
        }
    }
}

/// Plain-text reproducible description of a synthetic stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneConfig {
    pub camera: CameraParams,
    pub trajectory: AngleTrajectory,
    pub seed: u64,
}

impl SyntheticSceneConfig {
    pub fn rotating(deg_per_s: f64) -> Self {
        Self {
            camera: CameraParams::default(),
            trajectory: AngleTrajectory::ConstantSpeed {
                start_deg: 0.0,
                deg_per_s,
            },
            seed: 0,
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Incremental renderer; the pattern angle can be supplied step by step so a
/// closed loop can drive it from the simulated plant.
#[derive(Clone, Debug)]
pub struct EventCamera {
    params: CameraParams,
    col_center: Vec<f64>,
    row_center: Vec<f64>,
    log_ref: Vec<f64>,
    log_now: Vec<f64>,
    last_event: Vec<Option<u64>>,
    t_us: u64,
    angle_deg: f64,
    max_radius: f64,
    scratch: Vec<DvsEvent>,
}

impl EventCamera {
    pub fn new(params: CameraParams, t_us: u64, angle_deg: f64) -> Self {
        assert!(params.contrast_threshold > 0.0, "contrast threshold must be positive");
        assert!(params.dark > 0.0 && params.bright > 0.0, "intensities must be positive");
        let (w, h) = (params.width as usize, params.height as usize);
        let col_center: Vec<f64> = (0..w).map(|x| x as f64 + 0.5 - w as f64 / 2.0).collect();
        let row_center: Vec<f64> = (0..h).map(|y| y as f64 + 0.5 - h as f64 / 2.0).collect();
        let max_radius = (w as f64 / 2.0).hypot(h as f64 / 2.0);
        let mut cam = Self {
            log_ref: vec![0.0; w * h],
            log_now: vec![0.0; w * h],
            last_event: vec![None; w * h],
            params,
            col_center,
            row_center,
            t_us,
            angle_deg,
            max_radius,
            scratch: Vec::new(),
        };
        let (s, c) = angle_deg.to_radians().sin_cos();
        for y in 0..h {
            for x in 0..w {
                let l = cam.log_intensity(cam.col_center[x] * c + cam.row_center[y] * s);
                cam.log_ref[y * w + x] = l;
                cam.log_now[y * w + x] = l;
            }
        }
        cam
    }

    pub fn params(&self) -> &CameraParams {
        &self.params
    }

    pub fn time_us(&self) -> u64 {
        self.t_us
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle_deg
    }

    /// Renders `(t_us, angle) -> (t_end_us, angle_end)`, appending time-ordered events.
    pub fn advance(&mut self, t_end_us: u64, angle_end_deg: f64, out: &mut Vec<DvsEvent>) {
        assert!(t_end_us >= self.t_us, "camera time cannot go backwards");
        let phi_start = self.angle_deg.to_radians();
        let phi_end = angle_end_deg.to_radians();
        let sweep = (phi_end - phi_start).abs() * self.max_radius;
        let n_sub = ((sweep / MAX_SHIFT_PX).ceil() as usize).max(1);
        let t_start = self.t_us as f64;
        let span = (t_end_us - self.t_us) as f64;
        let mut events = std::mem::take(&mut self.scratch);
        events.clear();
        for k in 0..n_sub {
            let f0 = k as f64 / n_sub as f64;
            let f1 = (k + 1) as f64 / n_sub as f64;
            let phi0 = phi_start + (phi_end - phi_start) * f0;
            let phi1 = phi_start + (phi_end - phi_start) * f1;
            let t0 = t_start + span * f0;
            let t1 = t_start + span * f1;
            if phi0 != phi1 {
                self.render_substep(phi0, phi1, t0, t1, &mut events);
            }
        }
        events.sort_by_key(|e| (e.t, e.y, e.x, e.polarity));
        out.extend_from_slice(&events);
        self.scratch = events;
        self.t_us = t_end_us;
        self.angle_deg = angle_end_deg;
    }

    fn log_intensity(&self, d: f64) -> f64 {
        let s = (0.5 + d).clamp(0.0, 1.0);
        (self.params.dark + (self.params.bright - self.params.dark) * s).ln()
    }

    fn render_substep(&mut self, phi0: f64, phi1: f64, t0: f64, t1: f64, out: &mut Vec<DvsEvent>) {
        let band = 0.5 + (phi1 - phi0).abs() * self.max_radius + 0.05;
        let (s0, c0) = phi0.sin_cos();
        let (s1, c1) = phi1.sin_cos();
        let (w, h) = (self.params.width as usize, self.params.height as usize);
        let half_w = w as f64 / 2.0;
        let half_h = h as f64 / 2.0;
        let mut visit = |cam: &mut Self, x: usize, y: usize| {
            let d1 = cam.col_center[x] * c1 + cam.row_center[y] * s1;
            let p = y * w + x;
            let l1 = cam.log_intensity(d1);
            let l0 = cam.log_now[p];
            if l1 != l0 {
                cam.emit_crossings(p, x, y, l0, l1, t0, t1, out);
                cam.log_now[p] = l1;
            }
        };
        // Walk along the boundary at phi0, covering every pixel whose signed
        // distance can enter the anti-aliasing band during the sub-step.
        if c0.abs() >= s0.abs() {
            for y in 0..h {
                let yc = self.row_center[y];
                let a = (-band - yc * s0) / c0;
                let b = (band - yc * s0) / c0;
                let (lo, hi) = (a.min(b), a.max(b));
                let x_lo = (lo + half_w - 0.5).ceil().max(0.0) as usize;
                let x_hi = (hi + half_w - 0.5).floor();
                if x_hi < 0.0 {
                    continue;
                }
                for x in x_lo..=(x_hi as usize).min(w - 1) {
                    visit(self, x, y);
                }
            }
        } else {
            for x in 0..w {
                let xc = self.col_center[x];
                let a = (-band - xc * c0) / s0;
                let b = (band - xc * c0) / s0;
                let (lo, hi) = (a.min(b), a.max(b));
                let y_lo = (lo + half_h - 0.5).ceil().max(0.0) as usize;
                let y_hi = (hi + half_h - 0.5).floor();
                if y_hi < 0.0 {
                    continue;
                }
                for y in y_lo..=(y_hi as usize).min(h - 1) {
                    visit(self, x, y);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_crossings(
        &mut self,
        p: usize,
        x: usize,
        y: usize,
        l0: f64,
        l1: f64,
        t0: f64,
        t1: f64,
        out: &mut Vec<DvsEvent>,
    ) {
        let c = self.params.contrast_threshold;
        let earliest = t0.ceil() as u64;
        let latest = t1.floor() as u64;
        loop {
            let diff = l1 - self.log_ref[p];
            let (level, polarity) = if diff >= c {
                (self.log_ref[p] + c, Polarity::On)
            } else if diff <= -c {
                (self.log_ref[p] - c, Polarity::Off)
            } else {
                break;
            };
            let frac = ((level - l0) / (l1 - l0)).clamp(0.0, 1.0);
            let mut t = (t0 + frac * (t1 - t0)).round() as u64;
            t = t.max(earliest);
            if let Some(last) = self.last_event[p] {
                t = t.max(last + self.params.refractory_us);
            }
            if t > latest {
                break;
            }
            out.push(DvsEvent::new(t, x as u16, y as u16, polarity));
            self.log_ref[p] = level;
            self.last_event[p] = Some(t);
        }
    }
}

/// Renders a whole stream from a scene description.
pub fn synthesize_events(scene: &SyntheticSceneConfig, duration_us: u64) -> Vec<DvsEvent> {
    const CHUNK_US: u64 = 50;
    let mut cam = EventCamera::new(scene.camera.clone(), 0, scene.trajectory.angle_at(0.0));
    let mut out = Vec::new();
    let mut t = 0;
    while t < duration_us {
        let next = (t + CHUNK_US).min(duration_us);
        cam.advance(next, scene.trajectory.angle_at(next as f64), &mut out);
        t = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap180(a: f64) -> f64 {
        (a + 180.0).rem_euclid(360.0) - 180.0
    }

    #[test]
    fn static_scene_is_silent() {
        let ev = synthesize_events(&SyntheticSceneConfig::rotating(0.0), 10_000);
        assert!(ev.is_empty());
    }

    #[test]
    fn events_hug_the_boundary() {
        let scene = SyntheticSceneConfig::rotating(360.0);
        let ev = synthesize_events(&scene, 10_000);
        assert!(!ev.is_empty());
        for e in &ev {
            let phi = scene.trajectory.angle_at(e.t as f64).to_radians();
            let xc = e.x as f64 + 0.5 - 120.0;
            let yc = e.y as f64 + 0.5 - 90.0;
            let d = xc * phi.cos() + yc * phi.sin();
            assert!(d.abs() <= 3.0, "event {e:?} is {d} px from the line");
        }
    }

    #[test]
    fn faster_rotation_makes_more_events() {
        let slow = synthesize_events(&SyntheticSceneConfig::rotating(360.0), 10_000).len();
        let fast = synthesize_events(&SyntheticSceneConfig::rotating(720.0), 10_000).len();
        assert!(fast > slow, "{fast} <= {slow}");
    }

    #[test]
    fn stream_is_ordered_deterministic_and_in_bounds() {
        let scene = SyntheticSceneConfig::rotating(-900.0);
        let a = synthesize_events(&scene, 5_000);
        let b = synthesize_events(&scene, 5_000);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].t <= w[1].t));
        assert!(a.iter().all(|e| e.x < 240 && e.y < 180 && e.t <= 5_000));
    }

    #[test]
    fn polarity_follows_edge_direction() {
        // Turning counter-clockwise, pixels ahead of the boundary in the
        // rotation direction brighten.
        let ev = synthesize_events(&SyntheticSceneConfig::rotating(360.0), 2_000);
        let on = ev.iter().filter(|e| e.polarity == Polarity::On).count();
        let off = ev.len() - on;
        assert!(on > 0 && off > 0);
    }

    #[test]
    fn default_rate_is_order_1e5_at_360_deg_per_s() {
        let ev = synthesize_events(&SyntheticSceneConfig::rotating(360.0), 100_000);
        let rate = ev.len() as f64 / 0.1;
        assert!((5e4..5e5).contains(&rate), "rate {rate}");
    }

    #[test]
    fn refractory_spaces_pixel_events() {
        let mut scene = SyntheticSceneConfig::rotating(3000.0);
        scene.camera.contrast_threshold = 0.2;
        scene.camera.refractory_us = 40;
        let ev = synthesize_events(&scene, 5_000);
        let mut last = std::collections::HashMap::new();
        for e in &ev {
            if let Some(t) = last.insert((e.x, e.y), e.t) {
                assert!(e.t >= t + 40);
            }
        }
    }

    #[test]
    fn waypoints_interpolate() {
        let tr = AngleTrajectory::Waypoints {
            points: vec![[0.0, 0.0], [1.0, 40.0], [2.0, 40.0]],
        };
        assert_eq!(tr.angle_at(0.5e6), 20.0);
        assert_eq!(tr.angle_at(5e6), 40.0);
        assert_eq!(wrap180(tr.angle_at(-1.0)), 0.0);
    }

    #[test]
    fn scene_config_text_round_trip() {
        let scene = SyntheticSceneConfig::rotating(1200.0);
        assert_eq!(SyntheticSceneConfig::from_text(&scene.to_text()).unwrap(), scene);
    }
}
