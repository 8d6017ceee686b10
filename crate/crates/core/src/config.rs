//! Experiment configuration, read from TOML.
//!
//! Units: metres, seconds, newtons, amperes, radians, hertz. Every section
//! may be omitted and falls back to [`ExperimentConfig::default`].

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::CommutationParams;
use crate::error::{Error, Result};
use crate::pgnn::Hyperparams;
use crate::plant::{
    AxisHarmonics, CoilSetTruth, Harmonic, MotorGeometry, MotorTruth, ParasiticProfile,
};
use crate::sim::{
    back_and_forth, reference_set, FeedforwardParams, LoopConfig, MechConfig, PidGains, Reference,
    DEFAULT_ERROR_CUTOFF,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub mech: MechConfig,
    /// Explicit gains; when absent they are derived from the mass and
    /// `bandwidth`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pid: Option<PidGains>,
    /// Target position loop crossover (Hz).
    pub bandwidth: f64,
    /// Runs abort once `|y|` exceeds the stroke by this much (m).
    pub guard_margin: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            mech: MechConfig::default(),
            pid: None,
            bandwidth: 50.0,
            guard_margin: 0.05,
        }
    }
}

impl ControlConfig {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            mech: self.mech,
            pid: self
                .pid
                .unwrap_or_else(|| PidGains::for_mass(self.mech.mass, self.bandwidth)),
            guard_margin: self.guard_margin,
        }
    }
}

/// Back-and-forth moves between `lo` and `hi`, one pair per velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub lo: f64,
    pub hi: f64,
    pub velocities: Vec<f64>,
    pub a_max: f64,
    pub j_max: f64,
    /// Rest after every move (s).
    pub dwell: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            lo: -0.1,
            hi: 0.1,
            velocities: vec![0.025, 0.075, 0.15],
            a_max: 1.0,
            j_max: 1000.0,
            dwell: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Cut-off of the commutation-error filter (Hz).
    pub error_cutoff: f64,
    /// Write every n-th sample of experiment logs.
    pub log_stride: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            error_cutoff: DEFAULT_ERROR_CUTOFF,
            log_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every noise source and initialisation derives from it.
    pub seed: u64,
    /// Commutation phase excitation of the single-coil data sets (rad).
    pub delta: f64,
    pub motor: MotorTruth,
    /// Commutation estimates before calibration.
    pub initial: CommutationParams,
    pub control: ControlConfig,
    /// Feedforward used for the first run of each evaluation, before the
    /// strategy-specific parameters are identified.
    pub feedforward: FeedforwardParams,
    pub reference: ReferenceConfig,
    /// `pgnn.seed` is replaced by a value derived from `seed`.
    pub pgnn: Hyperparams,
    pub report: ReportConfig,
}

fn h(order: u32, amplitude: f64, phase: f64) -> Harmonic {
    Harmonic {
        order,
        amplitude,
        phase,
    }
}

/// Three coil sets with perturbed constants, 8 % third and 4 % fifth
/// harmonic gain ripple, about 2 N of cogging and force sensor noise.
pub fn default_motor() -> MotorTruth {
    let coils = [(63.18, -0.51), (60.11, -0.56), (60.73, -0.53)]
        .map(|(k, zeta)| CoilSetTruth { k, zeta })
        .to_vec();
    let gain_harmonics = (0..3)
        .map(|l| {
            let p = 0.4 * l as f64;
            AxisHarmonics {
                fy: vec![h(3, 0.08, p), h(5, 0.04, 1.0 + p)],
                fx: vec![h(3, 0.08, 0.5 + p), h(5, 0.04, 0.1 + p)],
                tz: vec![h(3, 0.08, 0.7 + p), h(5, 0.04, 0.4 + p)],
            }
        })
        .collect();
    MotorTruth {
        geometry: MotorGeometry::default(),
        coils,
        parasitics: ParasiticProfile {
            gain_harmonics,
            cogging: AxisHarmonics {
                fy: vec![h(1, 1.6, 0.4), h(2, 0.6, 1.3)],
                fx: vec![h(1, 0.3, 0.2)],
                tz: vec![h(1, 0.02, 0.9)],
            },
            noise_std: [0.3, 0.1, 0.005],
        },
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            delta: FRAC_PI_4,
            motor: default_motor(),
            initial: CommutationParams::uniform(3, 67.0, -0.52),
            control: ControlConfig::default(),
            feedforward: FeedforwardParams {
                mass: 4.0,
                viscous: 10.0,
                coulomb: 2.0,
            },
            reference: ReferenceConfig::default(),
            pgnn: Hyperparams::default(),
            report: ReportConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.motor.validate()?;
        self.initial.validate(self.motor.coil_sets())?;
        if !(self.delta > 0.0 && self.delta <= FRAC_PI_4) {
            return Err(Error::invalid(format!(
                "delta = {} must lie in (0, pi/4]",
                self.delta
            )));
        }
        self.control.loop_config().validate()?;
        if !(self.control.bandwidth.is_finite() && self.control.bandwidth > 0.0) {
            return Err(Error::invalid("control bandwidth must be positive"));
        }
        if !self.feedforward.is_finite() {
            return Err(Error::invalid("feedforward parameters must be finite"));
        }
        let r = &self.reference;
        if r.velocities.is_empty() {
            return Err(Error::invalid("reference needs at least one velocity"));
        }
        if !(r.lo < r.hi) {
            return Err(Error::invalid("reference needs lo < hi"));
        }
        for spec in back_and_forth(r.lo, r.hi, &r.velocities, r.a_max, r.j_max, r.dwell) {
            spec.validate()?;
        }
        self.pgnn.validate()?;
        let fs = self.control.mech.sample_rate;
        if !(self.report.error_cutoff > 0.0 && self.report.error_cutoff < fs / 2.0) {
            return Err(Error::invalid(
                "error cut-off must lie below half the sample rate",
            ));
        }
        if self.report.log_stride == 0 {
            return Err(Error::invalid("log_stride must be >= 1"));
        }
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        self.control.loop_config()
    }

    pub fn reference_signal(&self) -> Result<Reference> {
        let r = &self.reference;
        reference_set(
            &back_and_forth(r.lo, r.hi, &r.velocities, r.a_max, r.j_max, r.dwell),
            self.control.mech.sample_rate,
        )
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Independent seed for the named random stream.
    pub fn derive_seed(&self, stream: &str) -> u64 {
        let digest = Sha256::digest(format!("{}/{stream}", self.seed).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}
