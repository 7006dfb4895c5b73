//! Experiment harness: configuration, the closed-loop simulator, scenario
//! runners, metrics and run outputs.

pub mod bench;
pub mod config;
pub mod experiments;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sim;

pub use config::Config;
pub use sim::{simulate, Backend, ControllerKind, LoopSpec, Traces};

use thiserror::Error;

use crate::control::ControlError;
use crate::engine::EngineError;
use crate::events::EventError;
use crate::plant::PlantError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("configuration: {0}")]
    Config(String),
}
