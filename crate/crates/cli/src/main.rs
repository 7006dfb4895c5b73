use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use snn_track::harness::bench::EventSource;
use snn_track::harness::{scenario, Backend, Config, ControllerKind};

/// Closed-loop experiments for the spiking line tracker.
#[derive(Parser, Debug)]
#[command(name = "snntrack", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `engine.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (default: runs/<subcommand>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VisionBackend {
    Snn,
    Cpu,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StepBackend {
    Snn,
    Cpu,
    EncoderDirect,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AdaptController {
    /// Conventional PD on the CPU.
    Pd,
    /// Spiking PD without plasticity.
    Snn,
    /// Spiking PD with the plastic feed-forward pathway.
    Adaptive,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StepController {
    CpuPd,
    SnnPd,
    SnnPdAdaptive,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Constant-speed disk tracking; without --speed, sweeps `tracking.speeds`.
    Track {
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long, value_enum, default_value = "snn")]
        backend: VisionBackend,
        /// Also write every SNN spike.
        #[arg(long)]
        spikes: bool,
    },
    /// Disk (or set-point) steps.
    Step {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        targets: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "cpu")]
        backend: StepBackend,
        #[arg(long, value_enum, default_value = "cpu-pd")]
        controller: StepController,
        #[arg(long)]
        spikes: bool,
    },
    /// Set-point holds with or without the 125 g disturbance.
    Adapt {
        #[arg(long, value_enum)]
        weight: OnOff,
        #[arg(long, value_enum)]
        controller: AdaptController,
    },
    /// Estimator throughput and latency on a recorded or synthetic stream.
    Bench {
        /// Event file (.csv or packed binary), or `synth`.
        #[arg(long, default_value = "synth")]
        events: String,
        /// Throughput baseline; the run fails below (1 - bench.regression) of it.
        #[arg(long, default_value = "bench/baseline.toml")]
        baseline: PathBuf,
        /// Skip the regression gate.
        #[arg(long)]
        no_gate: bool,
    },
    /// Print the full default configuration.
    Defaults,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Track { .. } => "track",
            Command::Step { .. } => "step",
            Command::Adapt { .. } => "adapt",
            Command::Bench { .. } => "bench",
            Command::Defaults => "defaults",
        }
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Command line as recorded in the manifest: the output directory does not
/// affect results, so it is left out.
fn recorded_args(args: impl Iterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a);
        }
    }
    out
}

fn run(cli: Cli) -> Result<bool> {
    if let Command::Defaults = cli.command {
        print!("{}", Config::default().to_text()?);
        return Ok(true);
    }
    let cfg = load_config(&cli.common)?;
    let out = cli
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let argv = recorded_args(std::env::args().skip(1));
    let mut ok = true;
    match cli.command {
        Command::Track { speed, backend, spikes } => {
            let backend = match backend {
                VisionBackend::Snn => Backend::Snn,
                VisionBackend::Cpu => Backend::Cpu,
            };
            let speeds = speed.map_or_else(|| cfg.tracking.speeds.clone(), |s| vec![s]);
            let o = scenario::track(&cfg, backend, &speeds, spikes, &out, &argv)?;
            for r in &o.result {
                println!(
                    "{} {:>6} deg/s  rmse {:.3} deg  delay {} ms  {}",
                    backend.name(),
                    r.speed,
                    r.rmse,
                    r.delay_ms,
                    match (&r.diagnostics, r.valid) {
                        (Some(d), _) => format!("UNSTABLE: {d}"),
                        (None, true) => "ok".into(),
                        (None, false) => "delay outside valid range".into(),
                    }
                );
                ok &= r.stable;
            }
            println!("manifest: {}", o.manifest.display());
        }
        Command::Step {
            targets,
            backend,
            controller,
            spikes,
        } => {
            let backend = match backend {
                StepBackend::Snn => Backend::Snn,
                StepBackend::Cpu => Backend::Cpu,
                StepBackend::EncoderDirect => Backend::EncoderDirect,
            };
            let controller = match controller {
                StepController::CpuPd => ControllerKind::CpuPd,
                StepController::SnnPd => ControllerKind::SnnPd,
                StepController::SnnPdAdaptive => ControllerKind::SnnPdAdaptive,
            };
            let targets = targets.unwrap_or_else(|| cfg.step.targets.clone());
            if targets.is_empty() {
                bail!("--targets needs at least one angle");
            }
            let o = scenario::step(&cfg, backend, controller, &targets, spikes, &out, &argv)?;
            for (t, m) in o.result.targets.iter().zip(&o.result.steps) {
                println!(
                    "step to {t:>6} deg: rise {:?} ms, overshoot {:.1} %, settled {:?} ms, final error {:.2} deg",
                    m.rise_time_ms, m.overshoot_pct, m.settling_ms, m.final_error
                );
            }
            ok &= o.result.stable;
            println!("manifest: {}", o.manifest.display());
        }
        Command::Adapt { weight, controller } => {
            let kind = match controller {
                AdaptController::Pd => ControllerKind::CpuPd,
                AdaptController::Snn => ControllerKind::SnnPd,
                AdaptController::Adaptive => ControllerKind::SnnPdAdaptive,
            };
            let o = scenario::adapt(&cfg, kind, matches!(weight, OnOff::On), &out, &argv)?;
            println!("{:>9} {:>9} {:>12} {:>8}", "setpoint", "rmse", "steady err", "ff");
            for r in &o.result {
                println!(
                    "{:>9} {:>9.3} {:>12.3} {:>8}",
                    r.setpoint, r.rmse, r.steady_error, r.final_ff
                );
                ok &= r.stable;
            }
            println!("manifest: {}", o.manifest.display());
        }
        Command::Bench {
            events,
            baseline,
            no_gate,
        } => {
            let source = EventSource::parse(&events);
            let gate = (!no_gate).then_some(baseline.as_path());
            if let Some(p) = gate {
                if !p.exists() {
                    bail!("baseline {} not found (pass --no-gate to skip)", p.display());
                }
            }
            let o = scenario::bench(&cfg, &source, gate, &out, &argv)?;
            let (f, t) = (&o.result.report.figures, &o.result.report.timing);
            println!("events           {}", f.events);
            println!("timesteps        {}", f.timesteps);
            println!("events/s (snn)   {:.0}", t.events_per_s);
            println!("timesteps/s      {:.0}", t.timesteps_per_s);
            println!("events/s (cpu)   {:.0}", t.cpu_events_per_s);
            println!("latency          {:?} steps", f.latency_steps);
            println!("snn:cpu rate     {}", f.rate_ratio());
            if let Some(c) = o.result.regression {
                println!(
                    "regression gate  {} (floor {:.0}, baseline {:.0})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.floor,
                    c.baseline
                );
                ok &= c.pass;
            }
            println!("manifest: {}", o.manifest.display());
        }
        Command::Defaults => unreachable!(),
    }
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
