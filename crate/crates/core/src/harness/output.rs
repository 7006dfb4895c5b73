//! Run directories: CSV traces, `metrics.csv`, `manifest.txt` and a plot stub.
//!
//! Everything except `timing.txt` is a pure function of the manifest, so two
//! runs with the same manifest produce byte-identical files.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::Config;
use super::sim::Traces;
use super::HarnessError;

pub const MANIFEST: &str = "manifest.txt";
pub const METRICS: &str = "metrics.csv";
pub const TIMING: &str = "timing.txt";
pub const CONFIG: &str = "config.toml";
pub const PLOT: &str = "plot.py";

const PLOT_STUB: &str = r#"# Plots a run directory written by snntrack. Needs pandas + matplotlib.
import glob, os, sys
import pandas as pd
import matplotlib.pyplot as plt

run = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))
for gt in sorted(glob.glob(os.path.join(run, "*ground_truth.csv"))):
    df = pd.read_csv(gt)
    t = df.time_us * 1e-6
    fig, ax = plt.subplots(2, 1, sharex=True)
    ax[0].plot(t, df.disk_deg, label="disk")
    ax[0].plot(t, df.roll_deg, label="drone")
    ax[0].set_ylabel("deg"); ax[0].legend()
    ax[1].plot(t, df.thrust_l, label="left")
    ax[1].plot(t, df.thrust_r, label="right")
    ax[1].set_xlabel("s"); ax[1].legend()
    fig.savefig(gt.replace(".csv", ".png"), dpi=120)
"#;

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub run: String,
    pub metric: String,
    pub value: String,
}

impl MetricRow {
    pub fn new(run: impl Into<String>, metric: impl Into<String>, value: impl Display) -> Self {
        Self {
            run: run.into(),
            metric: metric.into(),
            value: value.to_string(),
        }
    }
}

pub struct RunWriter {
    dir: PathBuf,
    written: Vec<String>,
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl RunWriter {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>, HarnessError> {
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let mut f = self.file(name)?;
        f.write_all(bytes)?;
        f.flush()?;
        Ok(())
    }

    /// `<prefix>ground_truth.csv`, `<prefix>estimates.csv`, `<prefix>controller.csv`
    /// and, when recorded, `<prefix>spikes.csv`.
    pub fn write_traces(&mut self, prefix: &str, tr: &Traces) -> Result<(), HarnessError> {
        let mut f = self.file(&format!("{prefix}ground_truth.csv"))?;
        writeln!(f, "time_us,roll_deg,roll_rate,disk_deg,thrust_l,thrust_r")?;
        for g in &tr.ground_truth {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                g.time_us, g.roll_deg, g.roll_rate, g.disk_deg, g.thrust_l, g.thrust_r
            )?;
        }
        f.flush()?;

        if !tr.estimates.is_empty() {
            let mut f = self.file(&format!("{prefix}estimates.csv"))?;
            writeln!(f, "time_us,theta_deg,valid,backend")?;
            for e in &tr.estimates {
                writeln!(f, "{},{},{},{}", e.time_us, opt(e.theta_deg), e.valid as u8, tr.backend)?;
            }
            f.flush()?;
        }

        let mut f = self.file(&format!("{prefix}controller.csv"))?;
        writeln!(f, "time_ms,theta,theta_dot,u,thrust_l,thrust_r,ff_term")?;
        for c in &tr.control {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                c.time_ms, c.theta, c.theta_dot, c.u, c.thrust_l, c.thrust_r, c.ff_term
            )?;
        }
        f.flush()?;

        if let Some(spikes) = &tr.spikes_csv {
            self.write_bytes(&format!("{prefix}spikes.csv"), spikes)?;
        }
        Ok(())
    }

    pub fn write_metrics(&mut self, rows: &[MetricRow]) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(self.file(METRICS)?);
        w.write_record(["run", "metric", "value"])?;
        for r in rows {
            w.write_record([&r.run, &r.metric, &r.value])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Wall-clock figures; deliberately left out of the manifest hashes.
    pub fn write_timing(&self, lines: &[String]) -> Result<(), HarnessError> {
        let mut f = BufWriter::new(File::create(self.dir.join(TIMING))?);
        for l in lines {
            writeln!(f, "{l}")?;
        }
        f.flush()?;
        Ok(())
    }

    /// Writes the effective config, the plot stub and the manifest listing every
    /// file with its SHA-256.
    pub fn finish(mut self, cfg: &Config, command: &[String]) -> Result<PathBuf, HarnessError> {
        let text = cfg.to_text()?;
        self.write_bytes(CONFIG, text.as_bytes())?;
        self.write_bytes(PLOT, PLOT_STUB.as_bytes())?;
        let mut m = String::new();
        m.push_str(&format!("package = snn-track {}\n", env!("CARGO_PKG_VERSION")));
        m.push_str(&format!("command = {}\n", command.join(" ")));
        m.push_str(&format!("seed = {}\n", cfg.engine.seed));
        m.push_str(&format!("config_sha256 = {}\n", cfg.hash()?));
        let mut names = self.written.clone();
        names.sort();
        for name in names {
            let digest = Sha256::digest(fs::read(self.dir.join(&name))?);
            m.push_str(&format!("file {} sha256 = {}\n", name, hex::encode(digest)));
        }
        let path = self.dir.join(MANIFEST);
        fs::write(&path, m)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sim::{ControlRow, EstimateRow, GroundTruthRow};

    #[test]
    fn writes_schemas_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path()).unwrap();
        let tr = Traces {
            backend: "cpu".into(),
            ground_truth: vec![GroundTruthRow {
                time_us: 0,
                roll_deg: 0.5,
                roll_rate: 0.0,
                disk_deg: 1.0,
                thrust_l: 3050.0,
                thrust_r: 2710.0,
            }],
            estimates: vec![EstimateRow {
                time_us: 1000,
                theta_deg: None,
                valid: false,
            }],
            control: vec![ControlRow {
                time_ms: 1,
                theta: 0.0,
                theta_dot: 0.0,
                u: 0.0,
                thrust_l: 3050.0,
                thrust_r: 2710.0,
                ff_term: 0.0,
            }],
            ..Default::default()
        };
        w.write_traces("", &tr).unwrap();
        w.write_metrics(&[MetricRow::new("a", "rmse", 1.5)]).unwrap();
        let m = w.finish(&Config::default(), &["track".into()]).unwrap();
        let read = |n: &str| fs::read_to_string(dir.path().join(n)).unwrap();
        assert_eq!(
            read("ground_truth.csv"),
            "time_us,roll_deg,roll_rate,disk_deg,thrust_l,thrust_r\n0,0.5,0,1,3050,2710\n"
        );
        assert_eq!(read("estimates.csv"), "time_us,theta_deg,valid,backend\n1000,,0,cpu\n");
        assert!(read("controller.csv").starts_with("time_ms,theta,theta_dot,u,thrust_l,thrust_r,ff_term\n1,0,"));
        assert_eq!(read(METRICS), "run,metric,value\na,rmse,1.5\n");
        let manifest = fs::read_to_string(m).unwrap();
        for name in ["config.toml", "controller.csv", "estimates.csv", "ground_truth.csv", "metrics.csv", "plot.py"] {
            assert!(manifest.contains(&format!("file {name} sha256 = ")), "{manifest}");
        }
        assert!(manifest.contains("seed = 0"));
    }
}
