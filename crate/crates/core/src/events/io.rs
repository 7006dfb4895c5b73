//! Event files.
//!
//! CSV: one `t_us,x,y,polarity` record per line, polarity in `{0,1}`, an
//! optional `t_us,...` header line.
//!
//! Packed binary: 7-byte little-endian records `u32 t, u8 x, u8 y, u8 flags`
//! where bit 0 of `flags` is the polarity.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DvsEvent, EventError, Polarity, SensorGeometry};

const RECORD_BYTES: usize = 7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OrderingPolicy {
    /// Non-monotonic timestamps are an error.
    #[default]
    Reject,
    /// Non-monotonic streams are stable-sorted by timestamp.
    StableSort,
}

/// Loads a `.csv` or packed-binary (any other extension) event file.
pub fn load_events(
    path: impl AsRef<Path>,
    sensor: SensorGeometry,
    ordering: OrderingPolicy,
) -> Result<Vec<DvsEvent>, EventError> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_events_csv(file, sensor, ordering)
    } else {
        read_events_binary(file, sensor, ordering)
    }
}

pub fn read_events_csv<R: Read>(
    reader: R,
    sensor: SensorGeometry,
    ordering: OrderingPolicy,
) -> Result<Vec<DvsEvent>, EventError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut events = Vec::new();
    let mut locations = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 1;
        let location = format!("line {line}");
        let rec = rec.map_err(|e| EventError::Parse {
            location: location.clone(),
            message: e.to_string(),
        })?;
        if k == 0 && rec.get(0).is_some_and(|f| f.starts_with('t')) {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 4 {
            return Err(EventError::Parse {
                location,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<u64, EventError> {
            rec[i].parse::<u64>().map_err(|_| EventError::Parse {
                location: location.clone(),
                message: format!("bad {name} `{}`", &rec[i]),
            })
        };
        let t = field(0, "t_us")?;
        let x = field(1, "x")?;
        let y = field(2, "y")?;
        let p = field(3, "polarity")?;
        let event = checked_event(t, x, y, p, sensor, &location)?;
        events.push(event);
        locations.push(location);
    }
    order(events, ordering, |i| locations[i].clone())
}

pub fn read_events_binary<R: Read>(
    mut reader: R,
    sensor: SensorGeometry,
    ordering: OrderingPolicy,
) -> Result<Vec<DvsEvent>, EventError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(EventError::Parse {
            location: format!("offset {}", bytes.len() - bytes.len() % RECORD_BYTES),
            message: "truncated record".into(),
        });
    }
    let mut events = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for (k, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let location = format!("offset {}", k * RECORD_BYTES);
        let t = u32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]) as u64;
        let flags = rec[6];
        if flags & !1 != 0 {
            return Err(EventError::Parse {
                location,
                message: format!("unknown flag bits {flags:#04x}"),
            });
        }
        events.push(checked_event(t, rec[4] as u64, rec[5] as u64, (flags & 1) as u64, sensor, &location)?);
    }
    order(events, ordering, |i| format!("offset {}", i * RECORD_BYTES))
}

pub fn write_events_csv<W: Write>(writer: W, events: &[DvsEvent]) -> Result<(), EventError> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "t_us,x,y,polarity")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity.bit())?;
    }
    w.flush()?;
    Ok(())
}

/// Fails on timestamps above `u32::MAX` or coordinates above 255.
pub fn write_events_binary<W: Write>(writer: W, events: &[DvsEvent]) -> Result<(), EventError> {
    let mut w = BufWriter::new(writer);
    for (k, e) in events.iter().enumerate() {
        let t = u32::try_from(e.t).map_err(|_| EventError::Parse {
            location: format!("event {k}"),
            message: format!("t={} does not fit in u32", e.t),
        })?;
        let (x, y) = match (u8::try_from(e.x), u8::try_from(e.y)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => {
                return Err(EventError::Parse {
                    location: format!("event {k}"),
                    message: "coordinate does not fit in u8".into(),
                })
            }
        };
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&[x, y, e.polarity.bit()])?;
    }
    w.flush()?;
    Ok(())
}

fn checked_event(
    t: u64,
    x: u64,
    y: u64,
    p: u64,
    sensor: SensorGeometry,
    location: &str,
) -> Result<DvsEvent, EventError> {
    let bad = |message: String| EventError::Parse {
        location: location.to_string(),
        message,
    };
    if x >= sensor.width as u64 {
        return Err(bad(format!("x={x} outside sensor width {}", sensor.width)));
    }
    if y >= sensor.height as u64 {
        return Err(bad(format!("y={y} outside sensor height {}", sensor.height)));
    }
    let polarity = u8::try_from(p)
        .ok()
        .and_then(Polarity::from_bit)
        .ok_or_else(|| bad(format!("polarity {p} not in {{0,1}}")))?;
    Ok(DvsEvent::new(t, x as u16, y as u16, polarity))
}

fn order(
    mut events: Vec<DvsEvent>,
    ordering: OrderingPolicy,
    location: impl Fn(usize) -> String,
) -> Result<Vec<DvsEvent>, EventError> {
    if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
        match ordering {
            OrderingPolicy::Reject => {
                return Err(EventError::Ordering {
                    location: location(i + 1),
                    previous: events[i].t,
                    t: events[i + 1].t,
                })
            }
            OrderingPolicy::StableSort => events.sort_by_key(|e| e.t),
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv(text: &str) -> Result<Vec<DvsEvent>, EventError> {
        read_events_csv(text.as_bytes(), SensorGeometry::default(), OrderingPolicy::Reject)
    }

    #[test]
    fn parses_one_line() {
        let ev = csv("1000,120,90,1\n").unwrap();
        assert_eq!(ev, vec![DvsEvent::new(1000, 120, 90, Polarity::On)]);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        assert!(csv("").unwrap().is_empty());
        assert!(read_events_binary(&[][..], SensorGeometry::default(), OrderingPolicy::Reject)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_out_of_range_x() {
        match csv("5,240,0,1\n") {
            Err(EventError::Parse { location, message }) => {
                assert_eq!(location, "line 1");
                assert!(message.contains("x=240"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = csv("t_us,x,y,polarity\n1,2,3,0\n2,abc,3,1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = csv("1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("expected 4 fields"));
        let err = csv("1,2,3,2\n").unwrap_err();
        assert!(err.to_string().contains("polarity"));
    }

    #[test]
    fn ordering_policy() {
        let text = "10,1,1,1\n5,2,2,0\n5,3,3,1\n";
        assert!(matches!(csv(text), Err(EventError::Ordering { previous: 10, t: 5, .. })));
        let sorted = read_events_csv(text.as_bytes(), SensorGeometry::default(), OrderingPolicy::StableSort).unwrap();
        assert_eq!(sorted.iter().map(|e| (e.t, e.x)).collect::<Vec<_>>(), vec![(5, 2), (5, 3), (10, 1)]);
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let err = read_events_binary(&[0u8; 10][..], SensorGeometry::default(), OrderingPolicy::Reject)
            .unwrap_err();
        assert!(err.to_string().contains("offset 7"), "{err}");
    }

    #[test]
    fn load_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let ev = vec![DvsEvent::new(3, 4, 5, Polarity::Off), DvsEvent::new(9, 239, 179, Polarity::On)];
        let c = dir.path().join("a.csv");
        write_events_csv(File::create(&c).unwrap(), &ev).unwrap();
        let b = dir.path().join("a.bin");
        write_events_binary(File::create(&b).unwrap(), &ev).unwrap();
        for p in [c, b] {
            assert_eq!(load_events(&p, SensorGeometry::default(), OrderingPolicy::Reject).unwrap(), ev);
        }
    }

    fn arb_stream() -> impl Strategy<Value = Vec<DvsEvent>> {
        prop::collection::vec((0u64..1000, 0u16..240, 0u16..180, any::<bool>()), 0..64).prop_map(|v| {
            let mut t = 0;
            v.into_iter()
                .map(|(dt, x, y, on)| {
                    t += dt;
                    DvsEvent::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn csv_and_binary_round_trip(ev in arb_stream()) {
            let mut c = Vec::new();
            write_events_csv(&mut c, &ev).unwrap();
            prop_assert_eq!(&read_events_csv(&c[..], SensorGeometry::default(), OrderingPolicy::Reject).unwrap(), &ev);
            let mut b = Vec::new();
            write_events_binary(&mut b, &ev).unwrap();
            prop_assert_eq!(&read_events_binary(&b[..], SensorGeometry::default(), OrderingPolicy::Reject).unwrap(), &ev);
        }
    }
}
