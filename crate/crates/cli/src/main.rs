use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clm_core::config::ExperimentConfig;
use clm_core::pgnn::io::load_full_model;
use clm_core::pipeline::{self, Artifacts, DataSelection, StrategyKind};
use clm_core::{Error, ErrorKind, Result};

/// Commutation identification and evaluation on a simulated linear motor.
#[derive(Debug, Parser)]
#[command(name = "clm-lab", version)]
struct Cli {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record single-coil data sets Z_<i>_<l>.csv in closed loop.
    GenData {
        /// Only this coil set (1-based).
        #[arg(long)]
        coil: Option<usize>,
        /// Only data set i, recorded with phase offset (-1)^i delta.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        delta_sign: Option<u8>,
    },
    /// Calibrate motor constants and phase offsets from recorded data.
    Calibrate {
        /// Directory holding the Z files (defaults to --out).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train one model per coil set from recorded data.
    Identify {
        /// Directory holding the Z files (defaults to --out).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Closed-loop run with one commutation strategy.
    Evaluate {
        #[arg(long)]
        strategy: StrategyKind,
        /// Model file, required for the pgnn strategy.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Calibration report, required for the classical strategy.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Evaluate all strategies and tabulate their errors.
    Compare {
        /// Directory holding calibration.json and pgnn_model.json
        /// (defaults to --out).
        #[arg(long)]
        inputs: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 1,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn show(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    let dir_or_out = |d: &Option<PathBuf>| d.clone().unwrap_or_else(|| out.to_path_buf());
    match &cli.command {
        Command::GenData { coil, delta_sign } => {
            let coil = match coil {
                Some(0) => return Err(Error::invalid("coil sets are numbered from 1")),
                c => c.map(|c| c - 1),
            };
            let sel = DataSelection {
                coil,
                i: *delta_sign,
            };
            show(&pipeline::gen_data(&cfg, out, sel)?);
        }
        Command::Calibrate { data } => {
            let r = pipeline::calibrate(&cfg, &dir_or_out(data), out)?;
            print!("{}", r.table_csv());
            show(&[
                out.join(pipeline::CALIBRATION_FILE),
                out.join("calibration.csv"),
            ]);
        }
        Command::Identify { data } => {
            let r = pipeline::identify(&cfg, &dir_or_out(data), out)?;
            for c in &r.coils {
                println!(
                    "coil {}: final cost {:.6e} (anchor {:.6e}, after least squares {:.6e}), {} samples",
                    c.coil, c.final_cost, c.anchor_cost, c.initial_cost, c.samples
                );
            }
            show(&[out.join(pipeline::MODEL_FILE), out.join("identify.json")]);
        }
        Command::Evaluate {
            strategy,
            model,
            calibration,
        } => {
            let artifacts = Artifacts {
                calibrated: calibration
                    .as_deref()
                    .map(pipeline::load_calibration)
                    .transpose()?,
                model: model.as_deref().map(load_full_model).transpose()?,
            };
            let r = pipeline::evaluate(&cfg, *strategy, &artifacts, out)?;
            let m = &r.mse;
            println!(
                "{}: filtered {:?}, unfiltered {:?}, tracking {:.4e} m^2",
                r.strategy, m.commutation_filtered, m.commutation_unfiltered, m.tracking
            );
            for q in m.filtered_above_unfiltered() {
                println!("note: filtering raised the error on axis {q}");
            }
        }
        Command::Compare { inputs } => {
            let r = pipeline::compare(&cfg, &dir_or_out(inputs), out)?;
            print!("{}", r.table_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Diverged { log, .. } = &e {
                eprintln!("partial log with {} samples kept", log.len());
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
