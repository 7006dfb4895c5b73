//! Spiking-network line tracking: a fixed-timestep LIF engine, a DVS event
//! front-end, two Hough line estimators, PD controllers with a plastic
//! feed-forward pathway, and a closed-loop dual-copter simulator.

pub mod engine;
pub mod events;
pub mod hough;
pub mod control;
pub mod plant;
pub mod harness;
mod scalar;

pub use scalar::Scalar;

// `f64` instantiations of the generic building blocks.

/// Engine over `f64` membrane potentials.
pub type Engine = engine::Engine<f64>;
pub type Network = engine::Network<f64>;
pub type SnnHough = hough::SnnHoughEstimator<f64>;
pub type SlidingAverage = hough::SlidingAverage<f64>;
pub type PdGains = control::PdGains<f64>;
pub type CpuPd = control::CpuPd<f64>;
pub type SnnPd = control::SnnPd<f64>;
pub type SnnPdParams = control::SnnPdParams<f64>;
pub type OutputDecode = control::OutputDecode<f64>;
pub type ThrustMap = control::ThrustMap<f64>;
pub type PlantParams = plant::PlantParams<f64>;
pub type PlantState = plant::PlantState<f64>;
pub type Plant = plant::Plant<f64>;
pub type Encoder = plant::Encoder<f64>;

/// Connectivity generators known to the crate's network descriptions.
pub fn standard_generators() -> engine::Generators {
    let mut g = engine::Generators::new();
    hough::register_generators(&mut g);
    control::register_generators(&mut g);
    g
}
