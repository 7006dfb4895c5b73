//! DVS event model, file formats and the spatial downsampling front-end.

mod io;
pub mod synth;

pub use io::{load_events, read_events_binary, read_events_csv, write_events_binary, write_events_csv, OrderingPolicy};
pub use synth::{synthesize_events, AngleTrajectory, CameraParams, EventCamera, SyntheticSceneConfig};

use thiserror::Error;

/// DAVIS 240C resolution.
pub const SENSOR_WIDTH: u16 = 240;
pub const SENSOR_HEIGHT: u16 = 180;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

/// One asynchronous pixel event; `t` is microseconds since stream start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DvsEvent {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl DvsEvent {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self {
            width: SENSOR_WIDTH,
            height: SENSOR_HEIGHT,
        }
    }
}

impl SensorGeometry {
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    pub fn downsampled(&self, factor: u16) -> SensorGeometry {
        SensorGeometry {
            width: self.width / factor,
            height: self.height / factor,
        }
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("event at {location} has t={t} after t={previous}")]
    Ordering { location: String, previous: u64, t: u64 },
    #[error("downsampling factor {0} is not a power of two")]
    Factor(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps an event into the frame reduced by `factor` (a power of two) with a shift.
pub fn downsample(e: DvsEvent, factor: u16) -> Result<DvsEvent, EventError> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(EventError::Factor(factor));
    }
    let shift = factor.trailing_zeros();
    Ok(DvsEvent {
        x: e.x >> shift,
        y: e.y >> shift,
        ..e
    })
}

pub fn downsample_all(events: &[DvsEvent], factor: u16) -> Result<Vec<DvsEvent>, EventError> {
    events.iter().map(|&e| downsample(e, factor)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn downsample_corners() {
        let e = |x, y| DvsEvent::new(17, x, y, Polarity::On);
        let d = downsample(e(239, 179), 4).unwrap();
        assert_eq!((d.x, d.y), (59, 44));
        assert_eq!(downsample(e(0, 0), 4).unwrap(), e(0, 0));
        let d = downsample(e(120, 90), 4).unwrap();
        assert_eq!((d.x, d.y, d.t), (30, 22, 17));
        assert!(matches!(downsample(e(1, 1), 3), Err(EventError::Factor(3))));
    }

    proptest! {
        #[test]
        fn downsample_is_floor_division(x in 0u16..240, y in 0u16..180, t in any::<u32>(), on in any::<bool>()) {
            let p = if on { Polarity::On } else { Polarity::Off };
            let d = downsample(DvsEvent::new(t as u64, x, y, p), 4).unwrap();
            prop_assert_eq!(d.x, x / 4);
            prop_assert_eq!(d.y, y / 4);
            prop_assert_eq!(d.t, t as u64);
            prop_assert_eq!(d.polarity, p);
            prop_assert!(SensorGeometry::default().downsampled(4).contains(d.x, d.y));
        }
    }
}
