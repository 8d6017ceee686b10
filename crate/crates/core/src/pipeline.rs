//! Experiment steps behind the command-line tool. Every step reads and
//! writes plain files in a working directory.
//!
//! | step      | reads                         | writes                                             |
//! |-----------|-------------------------------|----------------------------------------------------|
//! | gen-data  |                               | `Z_<i>_<l>.csv`                                    |
//! | calibrate | `Z_*`                         | `calibration.json`, `calibration.csv`              |
//! | identify  | `Z_*`                         | `pgnn_coil_<l>.json`, `pgnn_model.json`, `training_<l>.csv`, `identify.json` |
//! | evaluate  | model / calibration if needed | `log_<strategy>.csv`, `mse_<strategy>.json`        |
//! | compare   | `calibration.json`, `pgnn_model.json` | `compare.json`, `compare.csv`, `compare.txt` |
//!
//! Coil sets are numbered from 1 in file names.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classical::{calibrate_from_datasets, CalibrationRecord, CommutationParams};
use crate::config::ExperimentConfig;
use crate::dataset::DataSetZ;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pgnn::io::{load_full_model, save_coil_model, save_full_model};
use crate::pgnn::{combine_coilsets, train_from_datasets, PgnnFullModel, TrainingReport};
use crate::sim::{
    generate_dataset, identify_feedforward_params, mse_report, run_closed_loop, ExperimentLog,
    FeedforwardParams, MseReport, Strategy,
};

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const MODEL_FILE: &str = "pgnn_model.json";

/// Label attached to reports for choices the simulation had to make.
pub const SIMULATION_NOTE: &str =
    "simulated plant; PID feedback, 10 kHz default sample rate and mechanics are simulation choices";

pub fn dataset_path(dir: &Path, i: u8, coil: usize) -> PathBuf {
    dir.join(format!("Z_{i}_{}.csv", coil + 1))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Which single-coil data sets to record; `None` means all of them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DataSelection {
    pub coil: Option<usize>,
    pub i: Option<u8>,
}

/// Records the identification data sets `Z_i^l` in closed loop with the
/// initial commutation estimates.
pub fn gen_data(cfg: &ExperimentConfig, dir: &Path, sel: DataSelection) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let n = cfg.motor.coil_sets();
    if let Some(c) = sel.coil {
        if c >= n {
            return Err(Error::invalid(format!("coil {} does not exist", c + 1)));
        }
    }
    if let Some(i) = sel.i {
        if !(1..=2).contains(&i) {
            return Err(Error::invalid(format!(
                "data set index must be 1 or 2, got {i}"
            )));
        }
    }
    create_dir(dir)?;
    let reference = cfg.reference_signal()?;
    let loop_cfg = cfg.loop_config();
    let jobs: Vec<(usize, u8)> = (0..n)
        .filter(|l| sel.coil.is_none_or(|c| c == *l))
        .flat_map(|l| [(l, 1u8), (l, 2u8)])
        .filter(|(_, i)| sel.i.is_none_or(|s| s == *i))
        .collect();
    let sets = Execution::Parallel.map(&jobs, |&(l, i)| {
        generate_dataset(
            l,
            i,
            cfg.delta,
            &reference,
            &cfg.motor,
            &cfg.initial,
            &loop_cfg,
            cfg.derive_seed(&format!("data/{i}/{l}")),
        )
    });
    let mut paths = Vec::with_capacity(jobs.len());
    for ((l, i), z) in jobs.into_iter().zip(sets) {
        let path = dataset_path(dir, i, l);
        z?.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

fn load_pairs(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<(DataSetZ, DataSetZ)>> {
    (0..cfg.motor.coil_sets())
        .map(|l| {
            let z1 = DataSetZ::load(&dataset_path(dir, 1, l), l)?;
            let z2 = DataSetZ::load(&dataset_path(dir, 2, l), l)?;
            Ok((z1, z2))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config_hash: String,
    pub initial: CommutationParams,
    pub calibrated: CommutationParams,
    pub records: Vec<CalibrationRecord>,
}

impl CalibrationReport {
    /// One row per coil set: initial and calibrated estimates side by side.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("coil,k_hat_initial,k_hat_calibrated,zeta_hat_initial,zeta_hat_calibrated,delta,c1,c2\n");
        for (l, r) in self.records.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                l + 1,
                self.initial.k_hat[l],
                self.calibrated.k_hat[l],
                self.initial.zeta_hat[l],
                self.calibrated.zeta_hat[l],
                r.delta,
                r.c1,
                r.c2
            );
        }
        s
    }
}

/// One calibration pass on recorded data sets.
pub fn calibrate(cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> Result<CalibrationReport> {
    cfg.validate()?;
    let pairs = load_pairs(cfg, data_dir)?;
    for (z1, z2) in &pairs {
        let delta = z2.delta;
        if !(delta > 0.0 && delta <= std::f64::consts::FRAC_PI_4) || z1.delta != -delta {
            return Err(Error::invalid(format!(
                "coil {}: data offsets ({}, {}) must be (-delta, +delta) with delta in (0, pi/4]",
                z1.coil + 1,
                z1.delta,
                z2.delta
            )));
        }
    }
    let (calibrated, records) = calibrate_from_datasets(&cfg.initial, &pairs)?;
    let report = CalibrationReport {
        config_hash: cfg.hash(),
        initial: cfg.initial.clone(),
        calibrated,
        records,
    };
    create_dir(out)?;
    write_json(&out.join(CALIBRATION_FILE), &report)?;
    write_text(&out.join("calibration.csv"), &report.table_csv())?;
    Ok(report)
}

pub fn load_calibration(path: &Path) -> Result<CommutationParams> {
    Ok(read_json::<CalibrationReport>(path)?.calibrated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilTrainingSummary {
    pub coil: usize,
    pub samples: usize,
    pub anchor_cost: f64,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub final_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub config_hash: String,
    pub coils: Vec<CoilTrainingSummary>,
}

fn write_curve(path: &Path, report: &TrainingReport) -> Result<()> {
    let mut s = String::from("epoch,cost\n");
    for p in &report.curve {
        let _ = writeln!(s, "{},{}", p.epoch, p.cost);
    }
    write_text(path, &s)
}

/// Trains one coil model per coil set and stores the combined model.
pub fn identify(cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> Result<IdentifyReport> {
    cfg.validate()?;
    let pairs = load_pairs(cfg, data_dir)?;
    create_dir(out)?;
    let d_m = cfg.motor.geometry.pole_pitch;
    let mut models = Vec::new();
    let mut anchors = Vec::new();
    let mut coils = Vec::new();
    for (l, (z1, z2)) in pairs.iter().enumerate() {
        let hp = crate::pgnn::Hyperparams {
            seed: cfg.derive_seed(&format!("train/{l}")),
            ..cfg.pgnn.clone()
        };
        let trained = train_from_datasets(z1, z2, &cfg.initial.fixed(l, d_m), &hp)?;
        save_coil_model(
            &out.join(format!("pgnn_coil_{}.json", l + 1)),
            &trained.model,
            l,
            Some(&trained.regularization),
        )?;
        write_curve(
            &out.join(format!("training_{}.csv", l + 1)),
            &trained.report,
        )?;
        let r = &trained.report;
        coils.push(CoilTrainingSummary {
            coil: l + 1,
            samples: z1.decimated(hp.record_stride).len() + z2.decimated(hp.record_stride).len(),
            anchor_cost: r.anchor_cost,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            final_mse: r.final_mse,
        });
        models.push(trained.model);
        anchors.push(trained.regularization);
    }
    let full = combine_coilsets(models)?;
    save_full_model(&out.join(MODEL_FILE), &full, &anchors)?;
    let report = IdentifyReport {
        config_hash: cfg.hash(),
        coils,
    };
    write_json(&out.join("identify.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Original,
    Classical,
    Pgnn,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Original,
        StrategyKind::Classical,
        StrategyKind::Pgnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Original => "original",
            StrategyKind::Classical => "classical",
            StrategyKind::Pgnn => "pgnn",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(StrategyKind::Original),
            "classical" => Ok(StrategyKind::Classical),
            "pgnn" => Ok(StrategyKind::Pgnn),
            _ => Err(Error::invalid(format!(
                "unknown strategy {s:?} (expected original, classical or pgnn)"
            ))),
        }
    }
}

/// Inputs a strategy may need besides the configuration.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub calibrated: Option<CommutationParams>,
    pub model: Option<PgnnFullModel>,
}

impl Artifacts {
    pub fn strategy(&self, cfg: &ExperimentConfig, kind: StrategyKind) -> Result<Strategy> {
        Ok(match kind {
            StrategyKind::Original => Strategy::Classical {
                label: kind.name().into(),
                params: cfg.initial.clone(),
            },
            StrategyKind::Classical => Strategy::Classical {
                label: kind.name().into(),
                params: self
                    .calibrated
                    .clone()
                    .ok_or_else(|| Error::invalid("strategy classical needs a calibration file"))?,
            },
            StrategyKind::Pgnn => Strategy::Pgnn {
                model: self
                    .model
                    .clone()
                    .ok_or_else(|| Error::invalid("strategy pgnn needs a model file"))?,
                fixed: cfg.initial.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub seed: u64,
    pub strategy: String,
    /// Feedforward identified from the first run and used in the second.
    pub feedforward: FeedforwardParams,
    pub mse: MseReport,
    pub note: String,
}

/// Identifies the feedforward from a closed-loop run with the nominal
/// parameters, then repeats the run with it and scores the second run.
pub fn evaluate_strategy(
    cfg: &ExperimentConfig,
    kind: StrategyKind,
    artifacts: &Artifacts,
) -> Result<(EvaluationReport, ExperimentLog)> {
    cfg.validate()?;
    let strategy = artifacts.strategy(cfg, kind)?;
    let reference = cfg.reference_signal()?;
    let loop_cfg = cfg.loop_config();
    let name = kind.name();
    let first = run_closed_loop(
        &strategy,
        &reference,
        &cfg.motor,
        &loop_cfg,
        &cfg.feedforward,
        cfg.derive_seed(&format!("eval/{name}/ff")),
    )?;
    let ff = identify_feedforward_params(&first)?;
    drop(first);
    let seed = cfg.derive_seed(&format!("eval/{name}"));
    let log = run_closed_loop(&strategy, &reference, &cfg.motor, &loop_cfg, &ff, seed)?;
    let mse = mse_report(&log, cfg.report.error_cutoff)?;
    Ok((
        EvaluationReport {
            config_hash: cfg.hash(),
            seed,
            strategy: name.into(),
            feedforward: ff,
            mse,
            note: SIMULATION_NOTE.into(),
        },
        log,
    ))
}

fn save_log(path: &Path, log: &ExperimentLog, stride: usize) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    log.write_csv(&mut w, stride)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs one strategy and writes its log and metrics. A diverged run still
/// leaves its partial log behind.
pub fn evaluate(
    cfg: &ExperimentConfig,
    kind: StrategyKind,
    artifacts: &Artifacts,
    out: &Path,
) -> Result<EvaluationReport> {
    create_dir(out)?;
    let log_path = out.join(format!("log_{}.csv", kind.name()));
    match evaluate_strategy(cfg, kind, artifacts) {
        Ok((report, log)) => {
            save_log(&log_path, &log, cfg.report.log_stride)?;
            write_json(&out.join(format!("mse_{}.json", kind.name())), &report)?;
            Ok(report)
        }
        Err(Error::Diverged {
            time,
            position,
            log,
        }) => {
            save_log(&log_path, &log, cfg.report.log_stride)?;
            Err(Error::Diverged {
                time,
                position,
                log,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_hash: String,
    pub seed: u64,
    pub note: String,
    pub strategies: Vec<EvaluationReport>,
}

impl CompareReport {
    pub fn get(&self, kind: StrategyKind) -> Option<&EvaluationReport> {
        self.strategies.iter().find(|r| r.strategy == kind.name())
    }

    /// Strategy rows with filtered and unfiltered MSE per axis.
    pub fn table_csv(&self) -> String {
        let mut s =
            String::from("strategy,F_y_filtered,F_x_filtered,T_z_filtered,F_y,F_x,T_z,tracking\n");
        for r in &self.strategies {
            let (f, u) = (&r.mse.commutation_filtered, &r.mse.commutation_unfiltered);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.strategy, f[0], f[1], f[2], u[0], u[1], u[2], r.mse.tracking
            );
        }
        s
    }

    /// Human-readable table, in N^2 (N^2 m^2 for torque) and um^2.
    pub fn table_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "MSE of the filtered (unfiltered) commutation error");
        let _ = writeln!(
            s,
            "{:<10} {:>22} {:>22} {:>26} {:>14}",
            "strategy", "F_y [N^2]", "F_x [N^2]", "T_z [N^2 m^2]", "e [um^2]"
        );
        for r in &self.strategies {
            let (f, u) = (&r.mse.commutation_filtered, &r.mse.commutation_unfiltered);
            let cell = |q: usize| format!("{:.4e} ({:.4e})", f[q], u[q]);
            let _ = writeln!(
                s,
                "{:<10} {:>22} {:>22} {:>26} {:>14.6}",
                r.strategy,
                cell(0),
                cell(1),
                cell(2),
                r.mse.tracking * 1e12
            );
        }
        let _ = writeln!(s, "config {}", self.config_hash);
        let _ = writeln!(s, "{}", self.note);
        s
    }
}

/// Evaluates all three strategies, using `calibration.json` and
/// `pgnn_model.json` from `inputs`.
pub fn compare(cfg: &ExperimentConfig, inputs: &Path, out: &Path) -> Result<CompareReport> {
    cfg.validate()?;
    let artifacts = Artifacts {
        calibrated: Some(load_calibration(&inputs.join(CALIBRATION_FILE))?),
        model: Some(load_full_model(&inputs.join(MODEL_FILE))?),
    };
    let results = Execution::Parallel.map(&StrategyKind::ALL, |k| {
        evaluate_strategy(cfg, *k, &artifacts).map(|(r, _)| r)
    });
    let strategies = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = CompareReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        note: SIMULATION_NOTE.into(),
        strategies,
    };
    create_dir(out)?;
    write_json(&out.join("compare.json"), &report)?;
    write_text(&out.join("compare.csv"), &report.table_csv())?;
    write_text(&out.join("compare.txt"), &report.table_text())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("fancy".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn missing_artifacts_are_validation_errors() {
        let cfg = ExperimentConfig::default();
        let a = Artifacts::default();
        assert!(a.strategy(&cfg, StrategyKind::Original).is_ok());
        for k in [StrategyKind::Classical, StrategyKind::Pgnn] {
            let e = a.strategy(&cfg, k).unwrap_err();
            assert_eq!(e.kind(), crate::error::ErrorKind::Validation);
        }
    }

    #[test]
    fn selection_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let sel = DataSelection {
            coil: Some(5),
            i: None,
        };
        assert!(gen_data(&cfg, dir.path(), sel).is_err());
        let sel = DataSelection {
            coil: None,
            i: Some(3),
        };
        assert!(gen_data(&cfg, dir.path(), sel).is_err());
    }
}
