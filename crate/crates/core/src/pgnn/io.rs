//! Versioned JSON documents for identified models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Matrix3x2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgnn::lip::RegularizationSpec;
use crate::pgnn::mlp::{Layer, MlpParams};
use crate::pgnn::model::{InputScaling, PgnnCoilModel, PgnnFullModel};

pub const FORMAT: &str = "clm-pgnn";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    /// Row-major, `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetDoc {
    widths: Vec<usize>,
    layers: Vec<LayerDoc>,
}

impl From<&MlpParams> for NetDoc {
    fn from(n: &MlpParams) -> Self {
        Self {
            widths: n.widths(),
            layers: n
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
        }
    }
}

impl NetDoc {
    fn into_params(self) -> Result<MlpParams> {
        if self.widths.len() != self.layers.len() + 1 {
            return Err(Error::invalid(
                "network widths do not match its layer count",
            ));
        }
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| Layer {
                inputs: self.widths[i],
                outputs: self.widths[i + 1],
                weights: l.weights,
                biases: l.biases,
            })
            .collect();
        let p = MlpParams { layers };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoilDoc {
    pole_pitch: f64,
    scaling: InputScaling,
    /// Rows of the 3x2 matrices.
    a: [[f64; 2]; 3],
    b: [[f64; 2]; 3],
    net_col1: NetDoc,
    net_col2: NetDoc,
    net_cog: NetDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<RegularizationSpec>,
}

fn rows(m: &Matrix3x2<f64>) -> [[f64; 2]; 3] {
    std::array::from_fn(|r| [m[(r, 0)], m[(r, 1)]])
}

fn from_rows(r: &[[f64; 2]; 3]) -> Matrix3x2<f64> {
    Matrix3x2::from_fn(|i, j| r[i][j])
}

impl CoilDoc {
    fn new(m: &PgnnCoilModel, anchor: Option<&RegularizationSpec>) -> Self {
        Self {
            pole_pitch: m.pole_pitch,
            scaling: m.scaling,
            a: rows(&m.a),
            b: rows(&m.b),
            net_col1: (&m.net_col1).into(),
            net_col2: (&m.net_col2).into(),
            net_cog: (&m.net_cog).into(),
            anchor: anchor.copied(),
        }
    }

    fn into_model(self) -> Result<(PgnnCoilModel, Option<RegularizationSpec>)> {
        let m = PgnnCoilModel {
            a: from_rows(&self.a),
            b: from_rows(&self.b),
            net_col1: self.net_col1.into_params()?,
            net_col2: self.net_col2.into_params()?,
            net_cog: self.net_cog.into_params()?,
            pole_pitch: self.pole_pitch,
            scaling: self.scaling,
        };
        m.validate()?;
        Ok((m, self.anchor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoilFile {
    format: String,
    version: u32,
    coil: usize,
    model: CoilDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FullFile {
    format: String,
    version: u32,
    coil_models: Vec<CoilDoc>,
}

fn check_header(format: &str, version: u32) -> Result<()> {
    if format != FORMAT {
        return Err(Error::invalid(format!(
            "not a model file (format {format:?})"
        )));
    }
    if version != VERSION {
        return Err(Error::invalid(format!(
            "unsupported model version {version} (expected {VERSION})"
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn coil_model_to_json(
    model: &PgnnCoilModel,
    coil: usize,
    anchor: Option<&RegularizationSpec>,
) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CoilFile {
        format: FORMAT.into(),
        version: VERSION,
        coil,
        model: CoilDoc::new(model, anchor),
    })?)
}

pub fn save_coil_model(
    path: &Path,
    model: &PgnnCoilModel,
    coil: usize,
    anchor: Option<&RegularizationSpec>,
) -> Result<()> {
    write_json(
        path,
        &CoilFile {
            format: FORMAT.into(),
            version: VERSION,
            coil,
            model: CoilDoc::new(model, anchor),
        },
    )
}

/// Returns the model, its coil index and the stored anchor, if any.
pub fn load_coil_model(path: &Path) -> Result<(PgnnCoilModel, usize, Option<RegularizationSpec>)> {
    let f: CoilFile = read_json(path)?;
    check_header(&f.format, f.version)?;
    let (m, anchor) = f.model.into_model()?;
    Ok((m, f.coil, anchor))
}

pub fn full_model_to_json(model: &PgnnFullModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&full_file(model, &[]))?)
}

fn full_file(model: &PgnnFullModel, anchors: &[RegularizationSpec]) -> FullFile {
    FullFile {
        format: FORMAT.into(),
        version: VERSION,
        coil_models: model
            .coil_models
            .iter()
            .enumerate()
            .map(|(l, m)| CoilDoc::new(m, anchors.get(l)))
            .collect(),
    }
}

pub fn full_model_from_json(text: &str) -> Result<PgnnFullModel> {
    let f: FullFile = serde_json::from_str(text)?;
    full_from_file(f)
}

fn full_from_file(f: FullFile) -> Result<PgnnFullModel> {
    check_header(&f.format, f.version)?;
    let coil_models = f
        .coil_models
        .into_iter()
        .map(|d| d.into_model().map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    let full = PgnnFullModel { coil_models };
    full.validate()?;
    Ok(full)
}

pub fn save_full_model(
    path: &Path,
    model: &PgnnFullModel,
    anchors: &[RegularizationSpec],
) -> Result<()> {
    write_json(path, &full_file(model, anchors))
}

pub fn load_full_model(path: &Path) -> Result<PgnnFullModel> {
    full_from_file(read_json(path)?)
}
