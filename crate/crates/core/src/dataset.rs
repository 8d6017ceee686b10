//! Single-coil identification records `(delta, y, F, F_y*)`.
//!
//! CSV layout, one record per row:
//!
//! ```text
//! delta,y,F_y,F_x,T_z,F_y_star
//! ```
//!
//! `delta` is the signed commutation phase offset applied while recording and
//! is constant within a file.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classical::{offset_currents, CommutationParams};
use crate::error::{Error, Result};
use crate::plant::{plant_force, CurrentTriple, ForceNoise, ForceVector, MotorTruth};

pub const CSV_HEADER: [&str; 6] = ["delta", "y", "F_y", "F_x", "T_z", "F_y_star"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZRecord {
    pub y: f64,
    pub force: ForceVector,
    pub fy_star: f64,
}

/// Data recorded with only coil set `coil` active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSetZ {
    pub coil: usize,
    pub delta: f64,
    pub records: Vec<ZRecord>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    delta: f64,
    y: f64,
    #[serde(rename = "F_y")]
    fy: f64,
    #[serde(rename = "F_x")]
    fx: f64,
    #[serde(rename = "T_z")]
    tz: f64,
    #[serde(rename = "F_y_star")]
    fy_star: f64,
}

impl DataSetZ {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every `stride`-th record, starting with the first.
    pub fn decimated(&self, stride: usize) -> DataSetZ {
        DataSetZ {
            coil: self.coil,
            delta: self.delta,
            records: self
                .records
                .iter()
                .step_by(stride.max(1))
                .copied()
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow {
                delta: self.delta,
                y: r.y,
                fy: r.force.fy,
                fx: r.force.fx,
                tz: r.force.tz,
                fy_star: r.fy_star,
            })?;
        }
        if self.records.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, coil: usize) -> Result<DataSetZ> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != CSV_HEADER {
            return Err(Error::invalid(format!(
                "unexpected data set header {header:?}, expected {CSV_HEADER:?}"
            )));
        }
        let mut delta = None;
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row?;
            match delta {
                None => delta = Some(row.delta),
                Some(d) if d != row.delta => {
                    return Err(Error::invalid(
                        "delta column is not constant within a data set",
                    ))
                }
                _ => {}
            }
            records.push(ZRecord {
                y: row.y,
                force: ForceVector::new(row.fy, row.fx, row.tz),
                fy_star: row.fy_star,
            });
        }
        let delta = delta.ok_or_else(|| Error::invalid("data set contains no records"))?;
        Ok(DataSetZ {
            coil,
            delta,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path, coil: usize) -> Result<DataSetZ> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), coil)
    }
}

/// Records a data set without closed-loop dynamics: at each `(y, F_y*)`
/// sample only coil `coil` is driven with the classical waveform shifted by
/// `offset`, carrying the full desired force.
pub fn open_loop_dataset(
    truth: &MotorTruth,
    params: &CommutationParams,
    coil: usize,
    offset: f64,
    samples: &[(f64, f64)],
    mut noise: Option<&mut ForceNoise>,
) -> DataSetZ {
    let d_m = truth.geometry.pole_pitch;
    let mut currents = vec![CurrentTriple::ZERO; truth.coil_sets()];
    let records = samples
        .iter()
        .map(|&(y, fy_star)| {
            currents[coil] = offset_currents(
                fy_star,
                offset,
                y,
                params.k_hat[coil],
                params.zeta_hat[coil],
                d_m,
            );
            let force = plant_force(&currents, y, truth, noise.as_deref_mut());
            ZRecord { y, force, fy_star }
        })
        .collect();
    DataSetZ {
        coil,
        delta: offset,
        records,
    }
}
