//! 1-DoF dual-copter on a roll axis, its motors, the actuated disk and the
//! joint encoders, integrated at the engine timestep.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("simulation fault at t={time_us} µs: non-finite state {state}")]
    NonFinite { time_us: u64, state: String },
    #[error("invalid plant parameters: {0}")]
    Config(String),
}

/// Physical constants. Angles in degrees, torques in N·m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PlantParams<T> {
    /// kg·m².
    pub inertia: T,
    /// Motor arm, m.
    pub arm_length: T,
    /// N per thrust unit.
    pub thrust_coefficient: T,
    /// N·m per rad/s.
    pub viscous_friction: T,
    pub motor_time_constant_ms: T,
    /// Pure command transport delay, ms (multiple of the timestep).
    pub command_delay_ms: T,
    /// Constant torque from a mass imbalance of the frame, N·m.
    pub imbalance_torque: T,
    pub encoder_quantum: T,
    pub encoder_noise_sd: T,
}

/// Steady-state error the 125 g weight produces under the full-range PD.
pub const CALIBRATION_ERROR_DEG: f64 = 20.0;
pub const DISTURBANCE_MASS_KG: f64 = 0.125;
/// Proportional gain (per rad) the calibration assumes.
pub const CALIBRATION_KP: f64 = 3000.0;
/// Differential thrust offset of the thrust map, units.
pub const THRUST_BIAS: f64 = 170.0;

impl<T: Scalar> Default for PlantParams<T> {
    fn default() -> Self {
        let arm = 0.15;
        let k_t = calibrate_thrust_coefficient(
            arm,
            disturbance_torque(DISTURBANCE_MASS_KG, arm),
            CALIBRATION_KP,
            CALIBRATION_ERROR_DEG,
        );
        Self {
            inertia: T::lit(0.005),
            arm_length: T::lit(arm),
            thrust_coefficient: T::lit(k_t),
            viscous_friction: T::lit(0.0084),
            motor_time_constant_ms: T::lit(120.0),
            command_delay_ms: T::zero(),
            imbalance_torque: T::lit(-arm * k_t * 2.0 * THRUST_BIAS),
            encoder_quantum: T::lit(0.1),
            encoder_noise_sd: T::lit(0.2 / 3.0),
        }
    }
}

impl<T: Scalar> PlantParams<T> {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("inertia", self.inertia),
            ("arm_length", self.arm_length),
            ("thrust_coefficient", self.thrust_coefficient),
            ("viscous_friction", self.viscous_friction),
            ("motor_time_constant_ms", self.motor_time_constant_ms),
            ("encoder_quantum", self.encoder_quantum),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(PlantError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.encoder_noise_sd >= T::zero() && self.command_delay_ms >= T::zero()) {
            return Err(PlantError::Config("noise and delay must be non-negative".into()));
        }
        Ok(())
    }

    /// Torque per unit of thrust difference, N·m.
    pub fn torque_per_unit(&self) -> T {
        self.arm_length * self.thrust_coefficient
    }
}

/// Gravity torque of `mass_kg` hanging at `arm_m`, N·m.
pub fn disturbance_torque(mass_kg: f64, arm_m: f64) -> f64 {
    mass_kg * GRAVITY * arm_m
}

/// Thrust coefficient for which a proportional gain `kp_per_rad` balances
/// `torque` at an error of `error_deg`: `L·k_T·K_P·θ = τ`.
pub fn calibrate_thrust_coefficient(arm_m: f64, torque: f64, kp_per_rad: f64, error_deg: f64) -> f64 {
    torque / (arm_m * kp_per_rad * error_deg.to_radians())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState<T> {
    pub time_us: u64,
    pub roll: T,
    /// deg/s.
    pub roll_rate: T,
    pub thrust_left: T,
    pub thrust_right: T,
    pub disk_angle: T,
    pub disturbance_torque: T,
}

impl<T: Scalar> PlantState<T> {
    /// At rest with motors settled on `(left, right)`.
    pub fn at_rest(thrust_left: T, thrust_right: T) -> Self {
        Self {
            thrust_left,
            thrust_right,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<(), PlantError> {
        let all = [self.roll, self.roll_rate, self.thrust_left, self.thrust_right];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PlantError::NonFinite {
                time_us: self.time_us,
                state: format!("{self:?}"),
            })
        }
    }
}

/// One semi-implicit Euler step of the roll dynamics with an exact
/// first-order motor response:
///
/// `J·α = L·k_T·(F_r − F_l) − b·ω + τ_imbalance + τ_disturbance`.
///
/// The disk angle is left to the caller.
pub fn plant_step<T: Scalar>(
    s: &PlantState<T>,
    cmd_left: T,
    cmd_right: T,
    dt_us: u32,
    p: &PlantParams<T>,
) -> Result<PlantState<T>, PlantError> {
    let dt = T::lit(dt_us as f64 * 1e-6);
    let k = T::one() - (-dt / (p.motor_time_constant_ms * T::lit(1e-3))).exp();
    let thrust_left = s.thrust_left + (cmd_left - s.thrust_left) * k;
    let thrust_right = s.thrust_right + (cmd_right - s.thrust_right) * k;
    let omega = s.roll_rate.to_radians();
    let torque = p.torque_per_unit() * (thrust_right - thrust_left) - p.viscous_friction * omega
        + p.imbalance_torque
        + s.disturbance_torque;
    let omega = omega + torque / p.inertia * dt;
    let next = PlantState {
        time_us: s.time_us + dt_us as u64,
        roll: s.roll + (omega * dt).to_degrees(),
        roll_rate: omega.to_degrees(),
        thrust_left,
        thrust_right,
        ..*s
    };
    next.check()?;
    Ok(next)
}

/// Quantised absolute encoder with Gaussian read noise.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    quantum: T,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(quantum: T, noise_sd: T, seed: u64) -> Self {
        let sd = noise_sd.to_f64_lossy();
        Self {
            quantum,
            noise: (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite sd")),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_params(p: &PlantParams<T>, seed: u64) -> Self {
        Self::new(p.encoder_quantum, p.encoder_noise_sd, seed)
    }

    pub fn read(&mut self, angle: T) -> T {
        let q = (angle / self.quantum).round() * self.quantum;
        match &self.noise {
            Some(n) => q + T::lit(n.sample(&mut self.rng)),
            None => q,
        }
    }
}

/// Disk angle over time, degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiskProfile {
    Constant { start_deg: f64, deg_per_s: f64 },
    /// Uniform acceleration from rest to `deg_per_s` over `ramp_s`, then constant.
    SpinUp { deg_per_s: f64, ramp_s: f64 },
    /// Piecewise-linear `[t_s, deg]` points, held beyond the ends.
    Waypoints { points: Vec<[f64; 2]> },
}

impl DiskProfile {
    pub fn angle_at(&self, t_us: u64) -> f64 {
        let t = t_us as f64 * 1e-6;
        match self {
            DiskProfile::Constant { start_deg, deg_per_s } => start_deg + deg_per_s * t,
            DiskProfile::SpinUp { deg_per_s, ramp_s } => {
                if t < *ramp_s {
                    0.5 * deg_per_s / ramp_s * t * t
                } else {
                    deg_per_s * (t - 0.5 * ramp_s)
                }
            }
            DiskProfile::Waypoints { points } => interpolate(points, t),
        }
    }

    /// Steps between `targets` with linear turns of `turn_s`, each held `hold_s`.
    pub fn steps(targets: &[f64], hold_s: f64, turn_s: f64) -> Self {
        let mut points = vec![[0.0, 0.0]];
        let mut t = hold_s;
        let mut last = 0.0;
        for &a in targets {
            points.push([t, last]);
            t += turn_s;
            points.push([t, a]);
            t += hold_s;
            last = a;
        }
        points.push([t, last]);
        DiskProfile::Waypoints { points }
    }
}

fn interpolate(points: &[[f64; 2]], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [p] => p[1],
        _ => {
            if t <= points[0][0] {
                return points[0][1];
            }
            for w in points.windows(2) {
                let ([t0, a0], [t1, a1]) = (w[0], w[1]);
                if t <= t1 {
                    if t1 <= t0 {
                        return a1;
                    }
                    return a0 + (a1 - a0) * (t - t0) / (t1 - t0);
                }
            }
            points[points.len() - 1][1]
        }
    }
}

/// Plant plus command transport delay, disk drive and disturbance.
pub struct Plant<T> {
    pub params: PlantParams<T>,
    pub state: PlantState<T>,
    pub disk: DiskProfile,
    dt_us: u32,
    delay: VecDeque<(T, T)>,
    delay_steps: usize,
    command: (T, T),
}

impl<T: Scalar> Plant<T> {
    /// Starts at rest with motors settled on `initial_command`.
    pub fn new(
        params: PlantParams<T>,
        disk: DiskProfile,
        disturbance: T,
        dt_us: u32,
        initial_command: (T, T),
    ) -> Result<Self, PlantError> {
        params.validate()?;
        let delay_steps = (params.command_delay_ms.to_f64_lossy() * 1000.0 / dt_us as f64).round() as usize;
        let mut state = PlantState::at_rest(initial_command.0, initial_command.1);
        state.disturbance_torque = disturbance;
        state.disk_angle = T::lit(disk.angle_at(0));
        Ok(Self {
            params,
            state,
            disk,
            dt_us,
            delay: std::iter::repeat_n(initial_command, delay_steps).collect(),
            delay_steps,
            command: initial_command,
        })
    }

    pub fn set_command(&mut self, left: T, right: T) {
        self.command = (left, right);
    }

    pub fn step(&mut self) -> Result<&PlantState<T>, PlantError> {
        let (l, r) = if self.delay_steps == 0 {
            self.command
        } else {
            self.delay.push_back(self.command);
            self.delay.pop_front().expect("delay line is never empty")
        };
        let mut next = plant_step(&self.state, l, r, self.dt_us, &self.params)?;
        next.disk_angle = T::lit(self.disk.angle_at(next.time_us));
        self.state = next;
        Ok(&self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced() -> PlantParams<f64> {
        PlantParams {
            imbalance_torque: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn equal_thrust_keeps_roll() {
        let p = balanced();
        let mut s = PlantState::at_rest(2880.0, 2880.0);
        s.roll = 12.0;
        for _ in 0..20_000 {
            s = plant_step(&s, 2880.0, 2880.0, 50, &p).unwrap();
        }
        assert_eq!(s.roll, 12.0);
        assert_eq!(s.roll_rate, 0.0);
    }

    #[test]
    fn motor_lag_reaches_63_percent_at_tau() {
        let p = balanced();
        let mut s = PlantState::at_rest(0.0, 0.0);
        for _ in 0..(120_000 / 50) {
            s = plant_step(&s, 0.0, 1000.0, 50, &p).unwrap();
        }
        assert!((s.thrust_right - 1000.0 * (1.0 - (-1f64).exp())).abs() < 1e-6);
        assert!((s.thrust_right / 1000.0 - 0.632).abs() < 5e-4);
    }

    #[test]
    fn motor_lag_superposition() {
        let p = balanced();
        let run = |f: &dyn Fn(usize) -> f64| {
            let mut s = PlantState::at_rest(0.0, 0.0);
            (0..4000)
                .map(|k| {
                    s = plant_step(&s, 0.0, f(k), 50, &p).unwrap();
                    s.thrust_right
                })
                .collect::<Vec<_>>()
        };
        let a = |k: usize| if k > 100 { 300.0 } else { 0.0 };
        let b = |k: usize| (k as f64 * 0.01).sin() * 200.0;
        let (ya, yb, yab) = (run(&a), run(&b), run(&|k| 2.0 * a(k) - 0.5 * b(k)));
        for k in 0..4000 {
            assert!((yab[k] - (2.0 * ya[k] - 0.5 * yb[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn friction_dissipates_rate() {
        let p = balanced();
        let mut s = PlantState::at_rest(2880.0, 2880.0);
        s.roll_rate = 500.0;
        let mut last = s.roll_rate;
        for _ in 0..200_000 {
            s = plant_step(&s, 2880.0, 2880.0, 50, &p).unwrap();
            assert!(s.roll_rate <= last && s.roll_rate >= 0.0);
            last = s.roll_rate;
        }
        assert!(s.roll_rate < 1e-3, "{}", s.roll_rate);
    }

    #[test]
    fn thrust_bias_cancels_imbalance() {
        let p = PlantParams::<f64>::default();
        let mut s = PlantState::at_rest(2710.0, 3050.0);
        for _ in 0..20_000 {
            s = plant_step(&s, 2710.0, 3050.0, 50, &p).unwrap();
        }
        assert!(s.roll.abs() < 1e-9);
    }

    #[test]
    fn disturbance_statics() {
        // L·k_T·K_P·θ balances the weight's torque at 20°.
        let p = PlantParams::<f64>::default();
        let tau = disturbance_torque(DISTURBANCE_MASS_KG, 0.15);
        assert!((tau - 0.18394).abs() < 1e-4);
        let theta = tau / (p.torque_per_unit() * CALIBRATION_KP);
        assert!((theta.to_degrees() - 20.0).abs() < 1e-9);
        assert!((p.thrust_coefficient - 1.170_982_49e-3).abs() < 1e-11);
    }

    #[test]
    fn non_finite_is_a_fault() {
        let p = balanced();
        let s = PlantState::at_rest(0.0, 0.0);
        assert!(matches!(
            plant_step(&s, f64::NAN, 0.0, 50, &p),
            Err(PlantError::NonFinite { .. })
        ));
    }

    #[test]
    fn encoder_quantises_and_is_unbiased() {
        let mut e = Encoder::<f64>::new(0.1, 0.0, 0);
        assert!((e.read(12.34) - 12.3).abs() < 1e-12);
        let mut e = Encoder::new(0.1, 0.2 / 3.0, 7);
        let n = 10_000;
        let reads: Vec<f64> = (0..n).map(|_| e.read(0.0)).collect();
        let mean = reads.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (0.2 / 3.0) / (n as f64).sqrt());
        let mut e = Encoder::new(0.1, 0.2 / 3.0, 8);
        let r: Vec<f64> = (0..1000).map(|_| e.read(5.0)).collect();
        for w in r.windows(2) {
            assert!((w[0] - w[1]).abs() <= 0.1 + 4.0 * 0.2 / 3.0 * 2.0);
        }
    }

    #[test]
    fn disk_profiles() {
        let c = DiskProfile::Constant {
            start_deg: 0.0,
            deg_per_s: 1200.0,
        };
        assert!((c.angle_at(1_000_000) - 1200.0).abs() < 1e-9);
        assert_eq!(c.angle_at(1_000_000).rem_euclid(360.0).round(), 120.0);
        let z = DiskProfile::Constant {
            start_deg: 7.0,
            deg_per_s: 0.0,
        };
        assert_eq!(z.angle_at(5_000_000), 7.0);
        let s = DiskProfile::SpinUp {
            deg_per_s: 800.0,
            ramp_s: 2.0,
        };
        assert!((s.angle_at(2_000_000) - 800.0).abs() < 1e-9);
        assert!((s.angle_at(3_000_000) - 1600.0).abs() < 1e-9);
        let w = DiskProfile::steps(&[40.0], 1.0, 0.2);
        assert_eq!(w.angle_at(500_000), 0.0);
        assert!((w.angle_at(1_100_000) - 20.0).abs() < 1e-9);
        assert_eq!(w.angle_at(5_000_000), 40.0);
    }

    #[test]
    fn command_delay_shifts_response() {
        let params = PlantParams {
            command_delay_ms: 10.0,
            ..balanced()
        };
        let disk = DiskProfile::Constant {
            start_deg: 0.0,
            deg_per_s: 0.0,
        };
        let mut plant = Plant::new(params, disk, 0.0, 50, (0.0, 0.0)).unwrap();
        plant.set_command(0.0, 100.0);
        for _ in 0..200 {
            assert_eq!(plant.step().unwrap().thrust_right, 0.0);
        }
        assert!(plant.step().unwrap().thrust_right > 0.0);
    }
}
