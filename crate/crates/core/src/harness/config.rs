use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{AdaptationConfig, PdGains, SnnPdParams, ThrustMap};
use crate::engine::EngineConfig;
use crate::events::CameraParams;
use crate::hough::{CpuHoughParams, HoughGrid, HoughNetworkParams};
use crate::plant::{PlantParams, DISTURBANCE_MASS_KG};

use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub window: usize,
    pub decimation: usize,
    /// Samples spanned by the backward difference that gives θ̇.
    pub rate_samples: usize,
    /// Optional sliding average over the 1 kHz CPU estimates (1 = raw).
    pub cpu_window: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            window: 200,
            decimation: 20,
            rate_samples: 5,
            cpu_window: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// PD gains when the error comes from vision.
    pub vision_gains: PdGains<f64>,
    /// PD gains when the error comes from the joint encoder.
    pub encoder_gains: PdGains<f64>,
    pub thrust: ThrustMap<f64>,
    pub snn_n: usize,
    pub snn_angle_range: f64,
    pub snn_rate_range: f64,
    pub adaptation: AdaptationConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            vision_gains: PdGains::vision(),
            encoder_gains: PdGains::full_range(),
            thrust: ThrustMap::default(),
            snn_n: 361,
            snn_angle_range: 180.0,
            snn_rate_range: 1500.0,
            adaptation: AdaptationConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn snn_pd_params(&self, adaptive: bool) -> SnnPdParams<f64> {
        let base = SnnPdParams::<f64>::default();
        SnnPdParams {
            n: self.snn_n,
            angle_range: self.snn_angle_range,
            rate_range: self.snn_rate_range,
            gains: self.encoder_gains,
            decode: crate::control::OutputDecode {
                n: self.snn_n,
                ..base.decode
            },
            thrust: self.thrust,
            adaptation: adaptive.then(|| self.adaptation.clone()),
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    #[serde(flatten)]
    pub params: PlantParams<f64>,
    pub disturbance_mass_kg: f64,
    /// Sign of the disturbance torque about the roll axis.
    pub disturbance_sign: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            params: PlantParams::default(),
            disturbance_mass_kg: DISTURBANCE_MASS_KG,
            disturbance_sign: -1.0,
        }
    }
}

impl PlantConfig {
    pub fn disturbance_torque(&self) -> f64 {
        self.disturbance_sign
            * crate::plant::disturbance_torque(self.disturbance_mass_kg, self.params.arm_length)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub duration_s: f64,
    /// Trailing part of the run used for the metric.
    pub analysis_s: f64,
    /// Disk spin-up time from rest to the target speed.
    pub ramp_s: f64,
    pub max_shift_ms: usize,
    /// Range the delay correction must fall in for a run to count as valid.
    pub valid_shift_ms: [f64; 2],
    /// Roll rates beyond this mark a run as unstable.
    pub max_roll_rate: f64,
    pub speeds: Vec<f64>,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            analysis_s: 5.0,
            ramp_s: 2.0,
            max_shift_ms: 300,
            valid_shift_ms: [0.0, 300.0],
            max_roll_rate: 5000.0,
            speeds: vec![400.0, 800.0, 1200.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    pub targets: Vec<f64>,
    pub hold_s: f64,
    /// Duration of each manual turn.
    pub turn_s: f64,
    /// Band around the target counted as settled.
    pub settle_band_deg: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            targets: vec![40.0],
            hold_s: 3.0,
            turn_s: 0.15,
            settle_band_deg: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationRunConfig {
    pub setpoints: Vec<f64>,
    /// Initial hold at 0°.
    pub warmup_s: f64,
    pub hold_s: f64,
    /// Trailing part of each hold averaged for the steady-state error.
    pub steady_s: f64,
}

impl Default for AdaptationRunConfig {
    fn default() -> Self {
        Self {
            setpoints: vec![20.0, -20.0, 30.0, -30.0, 40.0, -40.0],
            warmup_s: 5.0,
            hold_s: 10.0,
            steady_s: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Synthetic stream used when no file is given.
    pub synth_speed: f64,
    pub synth_duration_ms: u64,
    /// Allowed fractional drop against the baseline.
    pub regression: f64,
    /// Timed passes; the fastest counts.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth_speed: 1200.0,
            synth_duration_ms: 500,
            regression: 0.2,
            repeats: 3,
        }
    }
}

/// Every tunable of every experiment. Serialised as TOML; missing keys take
/// their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub engine: EngineConfig,
    pub camera: CameraParams,
    pub grid: HoughGrid,
    pub snn_hough: HoughNetworkParams,
    pub cpu_hough: CpuHoughParams,
    pub smoothing: SmoothingConfig,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
    pub tracking: TrackingConfig,
    pub step: StepConfig,
    pub adaptation: AdaptationRunConfig,
    pub bench: BenchConfig,
}

impl Config {
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_text(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> Result<String, HarnessError> {
        Ok(hex::encode(Sha256::digest(self.to_text()?.as_bytes())))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.engine = EngineConfig { seed, ..self.engine };
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let t = &self.tracking;
        if !(t.analysis_s > 0.0 && t.analysis_s <= t.duration_s) {
            return Err(HarnessError::Config("analysis window must lie inside the run".into()));
        }
        if self.engine.timestep_us == 0 || 1000 % self.engine.timestep_us != 0 {
            return Err(HarnessError::Config("timestep must divide 1 ms".into()));
        }
        if self.smoothing.decimation as u32 * self.engine.timestep_us != 1000 {
            return Err(HarnessError::Config("smoothing must decimate to 1 kHz".into()));
        }
        if self.smoothing.rate_samples == 0 {
            return Err(HarnessError::Config("rate difference needs at least one sample".into()));
        }
        self.plant.params.validate()?;
        self.controller.adaptation.validate()?;
        self.grid.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_partial_files() {
        let c = Config::default();
        let text = c.to_text().unwrap();
        assert_eq!(Config::from_text(&text).unwrap(), c);
        let partial = Config::from_text("[tracking]\nspeeds = [100.0]\n").unwrap();
        assert_eq!(partial.tracking.speeds, vec![100.0]);
        assert_eq!(partial.plant, c.plant);
        assert!(Config::from_text("[tracking]\nspeeds = 3\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let b = Config::default().with_seed(9);
        assert_eq!(a.hash().unwrap(), Config::default().hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
        a.validate().unwrap();
    }
}
