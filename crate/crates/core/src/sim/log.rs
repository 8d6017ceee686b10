//! Recorded closed-loop signals and the error metrics derived from them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{CurrentTriple, ForceVector};
use crate::sim::filter::lowpass_filter;
use crate::transform::MagnitudePhaseCommand;

/// Default cut-off of the commutation-error filter (Hz).
pub const DEFAULT_ERROR_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub strategy: String,
    pub seed: u64,
    pub sample_rate: f64,
    pub coil_sets: usize,
}

/// One row per control sample. Currents and commands are stored flat,
/// `coil_sets` entries per sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentLog {
    pub meta: LogMeta,
    pub t: Vec<f64>,
    pub y_ref: Vec<f64>,
    pub v_ref: Vec<f64>,
    pub a_ref: Vec<f64>,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub u_ff: Vec<f64>,
    pub u_fb: Vec<f64>,
    pub f_star: Vec<ForceVector>,
    /// Measured force, including sensor noise.
    pub force: Vec<ForceVector>,
    pub currents: Vec<CurrentTriple>,
    pub commands: Vec<MagnitudePhaseCommand>,
}

impl ExperimentLog {
    pub fn new(meta: LogMeta, capacity: usize) -> Self {
        let c = capacity;
        let l = meta.coil_sets;
        Self {
            meta,
            t: Vec::with_capacity(c),
            y_ref: Vec::with_capacity(c),
            v_ref: Vec::with_capacity(c),
            a_ref: Vec::with_capacity(c),
            y: Vec::with_capacity(c),
            e: Vec::with_capacity(c),
            u_ff: Vec::with_capacity(c),
            u_fb: Vec::with_capacity(c),
            f_star: Vec::with_capacity(c),
            force: Vec::with_capacity(c),
            currents: Vec::with_capacity(c * l),
            commands: Vec::with_capacity(c * l),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn currents_at(&self, k: usize) -> &[CurrentTriple] {
        let l = self.meta.coil_sets;
        &self.currents[k * l..(k + 1) * l]
    }

    pub fn commands_at(&self, k: usize) -> &[MagnitudePhaseCommand] {
        let l = self.meta.coil_sets;
        &self.commands[k * l..(k + 1) * l]
    }

    /// Checks the equal-length invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let l = self.meta.coil_sets;
        let lens = [
            self.y_ref.len(),
            self.v_ref.len(),
            self.a_ref.len(),
            self.y.len(),
            self.e.len(),
            self.u_ff.len(),
            self.u_fb.len(),
            self.f_star.len(),
            self.force.len(),
        ];
        if lens.iter().any(|v| *v != n)
            || self.currents.len() != n * l
            || self.commands.len() != n * l
        {
            return Err(Error::invalid(
                "experiment log columns have unequal lengths",
            ));
        }
        Ok(())
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "t", "y_ref", "y", "e", "u_ff", "u_fb", "F_y_star", "F_x_star", "T_z_star", "F_y",
            "F_x", "T_z",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for l in 1..=self.meta.coil_sets {
            h.extend(["a", "b", "c"].map(|p| format!("i_{p}_{l}")));
        }
        for l in 1..=self.meta.coil_sets {
            h.push(format!("cmd_F_{l}"));
            h.push(format!("cmd_delta_{l}"));
        }
        h
    }

    /// Writes every `stride`-th sample as CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> Result<()> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        let mut row: Vec<String> = Vec::new();
        for k in (0..self.len()).step_by(stride.max(1)) {
            row.clear();
            row.extend(
                [
                    self.t[k],
                    self.y_ref[k],
                    self.y[k],
                    self.e[k],
                    self.u_ff[k],
                    self.u_fb[k],
                ]
                .iter()
                .chain(&self.f_star[k].as_array())
                .chain(&self.force[k].as_array())
                .map(|v| v.to_string()),
            );
            for c in self.currents_at(k) {
                row.extend([c.a, c.b, c.c].map(|v| v.to_string()));
            }
            for c in self.commands_at(k) {
                row.push(c.magnitude.to_string());
                row.push(c.delta.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<log>", e))
    }
}

/// Error metrics of one run, per force axis `(F_y, F_x, T_z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub strategy: String,
    pub samples: usize,
    pub commutation_filtered: [f64; 3],
    pub commutation_unfiltered: [f64; 3],
    /// Position tracking error (m^2).
    pub tracking: f64,
}

impl MseReport {
    /// Axes on which filtering did not lower the error, which is unusual
    /// for broadband errors and worth a look.
    pub fn filtered_above_unfiltered(&self) -> Vec<usize> {
        (0..3)
            .filter(|&q| self.commutation_filtered[q] > self.commutation_unfiltered[q])
            .collect()
    }
}

fn mse(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Mean squared commutation error `F - F*` per axis, with and without the
/// low-pass filter, and mean squared tracking error.
pub fn mse_report(log: &ExperimentLog, cutoff: f64) -> Result<MseReport> {
    log.validate()?;
    if log.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty log"));
    }
    let mut filtered = [0.0; 3];
    let mut unfiltered = [0.0; 3];
    for q in 0..3 {
        let err: Vec<f64> = log
            .force
            .iter()
            .zip(&log.f_star)
            .map(|(f, s)| f.as_array()[q] - s.as_array()[q])
            .collect();
        unfiltered[q] = mse(&err);
        filtered[q] = mse(&lowpass_filter(&err, cutoff, log.meta.sample_rate)?);
    }
    Ok(MseReport {
        strategy: log.meta.strategy.clone(),
        samples: log.len(),
        commutation_filtered: filtered,
        commutation_unfiltered: unfiltered,
        tracking: mse(&log.e),
    })
}
