//! Controllers: reference PD, position-coded spiking PD, and the spiking PD
//! with the plasticity-driven feed-forward pathway. All run at 1 kHz.

mod adaptation;
mod snn_pd;

pub use adaptation::{adaptation_fragment, adaptation_trigger_check, AdaptationConfig, AdaptationLayers, TriggerProbe};
pub use snn_pd::{coincidence_edges, pd_shift_edges, snn_pd_network, SnnPd, SnnPdParams, PD_LATENCY};
pub(crate) use snn_pd::register_generators;

use num_traits::{FromPrimitive, Num, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("output index {idx} outside population of {n}")]
    Decode { idx: usize, n: usize },
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Angle unit the gains are expressed in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Degree,
    #[default]
    Radian,
}

/// `u = K_P·θ + K_D·θ̇` with θ in `unit` and θ̇ in `unit`/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdGains<T> {
    pub kp: T,
    pub kd: T,
    #[serde(default)]
    pub unit: AngleUnit,
}

impl<T: Scalar> PdGains<T> {
    pub fn new(kp: T, kd: T, unit: AngleUnit) -> Result<Self, ControlError> {
        if !(kp >= T::zero() && kd >= T::zero()) {
            return Err(ControlError::Config(format!("gains must be non-negative, got K_P={kp} K_D={kd}")));
        }
        Ok(Self { kp, kd, unit })
    }

    /// Gains for the encoder / full-range loop.
    pub fn full_range() -> Self {
        Self::new(T::lit(3000.0), T::lit(900.0), AngleUnit::Radian).unwrap()
    }

    /// Gains for the loop fed by the spiking vision path.
    pub fn vision() -> Self {
        Self::new(T::lit(2000.0), T::lit(600.0), AngleUnit::Radian).unwrap()
    }

    /// Gains rescaled to thrust units per degree (and per deg/s).
    pub fn per_degree(&self) -> (T, T) {
        let k = match self.unit {
            AngleUnit::Degree => T::one(),
            AngleUnit::Radian => T::lit(std::f64::consts::PI / 180.0),
        };
        (self.kp * k, self.kd * k)
    }
}

pub const U_CLAMP: f64 = 3700.0;

/// Reference PD law; `theta` in degrees, `theta_rate` in deg/s.
pub fn cpu_pd<T: Scalar>(theta: T, theta_rate: T, gains: &PdGains<T>) -> T {
    let (kp, kd) = gains.per_degree();
    let c = T::lit(U_CLAMP);
    (kp * theta + kd * theta_rate).max(-c).min(c)
}

/// Linear index decode of a position-coded output population:
/// `u = idx/N·(T_max − T_min) + T_min`.
///
/// Generic over any exact or floating number type so the decode can be
/// evaluated in rational arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDecode<T> {
    pub n: usize,
    pub t_min: T,
    pub t_max: T,
}

impl<T> OutputDecode<T>
where
    T: Copy + Num + FromPrimitive + ToPrimitive + PartialOrd,
{
    pub fn new(n: usize, t_min: T, t_max: T) -> Result<Self, ControlError> {
        if n < 2 || !(t_min < t_max) {
            return Err(ControlError::Config("output decode needs N >= 2 and T_min < T_max".into()));
        }
        Ok(Self { n, t_min, t_max })
    }

    /// N = 361 over ±1850.
    pub fn standard() -> Self {
        let t = T::from_i32(1850).unwrap();
        Self::new(361, T::zero() - t, t).unwrap()
    }

    pub fn decode(&self, idx: usize) -> Result<T, ControlError> {
        if idx >= self.n {
            return Err(ControlError::Decode { idx, n: self.n });
        }
        let idx_t = T::from_usize(idx).unwrap();
        let n_t = T::from_usize(self.n).unwrap();
        Ok(idx_t * (self.t_max - self.t_min) / n_t + self.t_min)
    }

    /// Spacing between adjacent decoded values.
    pub fn bin_width(&self) -> T {
        (self.t_max - self.t_min) / T::from_usize(self.n).unwrap()
    }

    /// Nearest index for `u`, saturating at the population edges.
    pub fn encode(&self, u: T) -> usize {
        let x = ((u - self.t_min) / self.bin_width()).to_f64().unwrap_or(0.0);
        x.round().clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// `T± = c_T ± (u/2 + b_T)`; `plus_right` assigns `T+` to the right motor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ThrustMap<T> {
    pub c_t: T,
    pub b_t: T,
    pub u_clamp: T,
    pub plus_right: bool,
}

impl<T: Scalar> Default for ThrustMap<T> {
    fn default() -> Self {
        Self {
            c_t: T::lit(2880.0),
            b_t: T::lit(170.0),
            u_clamp: T::lit(U_CLAMP),
            plus_right: true,
        }
    }
}

impl<T: Scalar> ThrustMap<T> {
    /// `(left, right)` for a difference command `u` (clamped to ±u_clamp).
    pub fn apply(&self, u: T) -> (T, T) {
        let u = u.max(-self.u_clamp).min(self.u_clamp);
        let half = u / T::lit(2.0) + self.b_t;
        let (plus, minus) = (self.c_t + half, self.c_t - half);
        if self.plus_right {
            (minus, plus)
        } else {
            (plus, minus)
        }
    }
}

/// One controller update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSignal<T> {
    pub theta: T,
    pub theta_rate: T,
    pub u: T,
    pub thrust_left: T,
    pub thrust_right: T,
    /// Learned feed-forward contribution included in `u` (0 without adaptation).
    pub ff_term: T,
}

/// A 1 kHz controller fed with the angular error (deg) and its rate (deg/s).
pub trait Controller<T> {
    fn update(&mut self, theta: T, theta_rate: T) -> Result<ControlSignal<T>, ControlError>;
    fn name(&self) -> &'static str;
}

pub struct CpuPd<T> {
    pub gains: PdGains<T>,
    pub thrust: ThrustMap<T>,
}

impl<T: Scalar> CpuPd<T> {
    pub fn new(gains: PdGains<T>, thrust: ThrustMap<T>) -> Self {
        Self { gains, thrust }
    }
}

impl<T: Scalar> Controller<T> for CpuPd<T> {
    fn update(&mut self, theta: T, theta_rate: T) -> Result<ControlSignal<T>, ControlError> {
        let u = cpu_pd(theta, theta_rate, &self.gains);
        let (thrust_left, thrust_right) = self.thrust.apply(u);
        Ok(ControlSignal {
            theta,
            theta_rate,
            u,
            thrust_left,
            thrust_right,
            ff_term: T::zero(),
        })
    }

    fn name(&self) -> &'static str {
        "cpu-pd"
    }
}
