//! Classical sinusoidal commutation and its data-based calibration.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::dataset::DataSetZ;
use crate::error::{Error, Result};
use crate::linalg::ThinSvd;
use crate::plant::{
    expand_star, ideal_gain_matrix, star_power_factor_inverse, star_reduce_gain, CoilSetTruth,
    CurrentPair, CurrentTriple, ForceVector, MotorGeometry, PHASE_SHIFT,
};
use crate::transform::{FixedCommutation, MagnitudePhaseCommand};

/// Relative singular value below which a gain matrix counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Estimated motor constants `k_hat` (N/A) and phase offsets `zeta_hat` (rad).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationParams {
    pub k_hat: Vec<f64>,
    pub zeta_hat: Vec<f64>,
}

impl CommutationParams {
    pub fn uniform(coil_sets: usize, k_hat: f64, zeta_hat: f64) -> Self {
        Self {
            k_hat: vec![k_hat; coil_sets],
            zeta_hat: vec![zeta_hat; coil_sets],
        }
    }

    pub fn coil_sets(&self) -> usize {
        self.k_hat.len()
    }

    pub fn validate(&self, coil_sets: usize) -> Result<()> {
        if self.k_hat.len() != coil_sets || self.zeta_hat.len() != coil_sets {
            return Err(Error::invalid(format!(
                "commutation parameters must list {coil_sets} coil sets"
            )));
        }
        if self.k_hat.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::invalid("estimated motor constants must be positive"));
        }
        if self.zeta_hat.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("estimated phase offsets must be finite"));
        }
        Ok(())
    }

    pub fn fixed(&self, coil: usize, pole_pitch: f64) -> FixedCommutation {
        FixedCommutation {
            k_hat: self.k_hat[coil],
            zeta_hat: self.zeta_hat[coil],
            pole_pitch,
        }
    }

    fn as_truth(&self, coil: usize) -> CoilSetTruth {
        CoilSetTruth {
            k: self.k_hat[coil],
            zeta: self.zeta_hat[coil],
        }
    }
}

/// Splits a driving force over the coil sets in proportion to `k_hat^2`.
pub fn force_shares(fy_star: f64, params: &CommutationParams) -> Vec<f64> {
    let total: f64 = params.k_hat.iter().map(|k| k * k).sum();
    params
        .k_hat
        .iter()
        .map(|k| k * k / total * fy_star)
        .collect()
}

/// Sinusoidal phase currents for coil force `fy` with the commutation phase
/// shifted by `offset`.
pub fn offset_currents(
    fy: f64,
    offset: f64,
    y: f64,
    k_hat: f64,
    zeta_hat: f64,
    pole_pitch: f64,
) -> CurrentTriple {
    let eta = std::f64::consts::TAU * y / pole_pitch + zeta_hat + offset;
    let s = fy / k_hat;
    let a = eta.sin() * s;
    let b = (eta + PHASE_SHIFT).sin() * s;
    let c = (eta - PHASE_SHIFT).sin() * s;
    CurrentTriple::new(a, b, c)
}

fn require_driving_only(f_star: ForceVector) -> Result<()> {
    if f_star.fx != 0.0 || f_star.tz != 0.0 {
        return Err(Error::invalid(
            "classical commutation only realises driving forces; use the pseudoinverse law for F_x/T_z",
        ));
    }
    if !f_star.fy.is_finite() {
        return Err(Error::NonFinite("desired driving force".into()));
    }
    Ok(())
}

/// Classical commutation for a purely driving desired force.
pub fn classical_currents(
    f_star: ForceVector,
    y: f64,
    params: &CommutationParams,
    geom: &MotorGeometry,
) -> Result<Vec<CurrentTriple>> {
    require_driving_only(f_star)?;
    Ok(force_shares(f_star.fy, params)
        .into_iter()
        .enumerate()
        .map(|(l, fl)| {
            offset_currents(
                fl,
                0.0,
                y,
                params.k_hat[l],
                params.zeta_hat[l],
                geom.pole_pitch,
            )
        })
        .collect())
}

/// Per-coil commands `(F_y^l*, 0)` equivalent to [`classical_currents`].
pub fn classical_commands(
    f_star: ForceVector,
    params: &CommutationParams,
) -> Result<Vec<MagnitudePhaseCommand>> {
    require_driving_only(f_star)?;
    Ok(force_shares(f_star.fy, params)
        .into_iter()
        .map(|f| MagnitudePhaseCommand::new(f, 0.0))
        .collect())
}

/// Minimum-power currents realising `f_star` on the ideal model built from
/// the estimates in `params`.
///
/// The dissipated power `sum |i^l|^2` over all three phases is minimised.
/// In star-reduced coordinates that is a weighted norm, so the pseudoinverse
/// is taken of `K R^-1` (SVD) and mapped back through `R^-1`.
pub fn pseudoinverse_commutation(
    f_star: ForceVector,
    y: f64,
    params: &CommutationParams,
    geom: &MotorGeometry,
) -> Result<Vec<CurrentTriple>> {
    let n = params.coil_sets();
    let r_inv = star_power_factor_inverse();
    let mut kw = DMatrix::<f64>::zeros(3, 2 * n);
    for l in 0..n {
        let k = star_reduce_gain(&ideal_gain_matrix(y, l, geom, &params.as_truth(l))) * r_inv;
        kw.view_mut((0, 2 * l), (3, 2)).copy_from(&k);
    }
    let svd = ThinSvd::new(&kw)?;
    if svd.s.len() < 3 || !(svd.ratio() > RANK_TOLERANCE) {
        return Err(Error::RankDeficient {
            y,
            ratio: svd.ratio(),
        });
    }
    let w = svd.pseudo_solve(&DVector::from_column_slice(&f_star.as_array()));
    Ok((0..n)
        .map(|l| {
            let i = r_inv * Vector2::new(w[2 * l], w[2 * l + 1]);
            expand_star(CurrentPair::new(i[0], i[1]))
        })
        .collect())
}

/// Phase excitation and fitted coefficients of one calibrated coil set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Least-squares gain `c` of `F_y ~ c F_y*`.
pub fn fit_calibration_coefficient(z: &DataSetZ) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::invalid("calibration data set is empty"));
    }
    let (num, den) = z.records.iter().fold((0.0, 0.0), |(n, d), r| {
        (n + r.force.fy * r.fy_star, d + r.fy_star * r.fy_star)
    });
    if !(den > 0.0) {
        return Err(Error::invalid(
            "calibration data has no desired driving force (sum of F_y*^2 is zero)",
        ));
    }
    Ok(num / den)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.abs() <= FRAC_PI_4 + 1e-12) {
        return Err(Error::invalid(format!(
            "phase excitation |delta| = {:.4} exceeds pi/4",
            delta.abs()
        )));
    }
    if (2.0 * delta).sin().abs() < 1e-12 {
        return Err(Error::invalid(
            "phase excitation delta must satisfy sin(2 delta) != 0",
        ));
    }
    Ok(())
}

/// Closed-form parameter update from the coefficients fitted with
/// `zeta_1 = zeta_hat - delta` and `zeta_2 = zeta_hat + delta`.
///
/// Returns the new `(k_hat, zeta_hat)`. Requires `c1 > 0`, i.e. the true
/// offset lies within `pi/2` of `zeta_1`.
pub fn calibration_update(
    k_hat: f64,
    zeta_hat: f64,
    delta: f64,
    c1: f64,
    c2: f64,
) -> Result<(f64, f64)> {
    check_delta(delta)?;
    if !(c1 > 0.0) {
        return Err(Error::invalid(format!(
            "calibration coefficient c1 = {c1:.4e} must be positive (phase error beyond pi/2)"
        )));
    }
    let zeta_1 = zeta_hat - delta;
    let two = 2.0 * delta;
    let correction = ((c2 / c1 - two.cos()) / two.sin()).atan();
    debug_assert!(correction.abs() < FRAC_PI_2);
    let zeta_new = zeta_1 + correction;
    let k_new = c1 * k_hat / correction.cos();
    Ok((k_new, zeta_new))
}

/// Supplies single-coil data recorded with the phase offset `offset` added to
/// `params.zeta_hat[coil]`.
pub trait CalibrationSource {
    fn dataset(&mut self, coil: usize, params: &CommutationParams, offset: f64)
        -> Result<DataSetZ>;
}

impl<F> CalibrationSource for F
where
    F: FnMut(usize, &CommutationParams, f64) -> Result<DataSetZ>,
{
    fn dataset(
        &mut self,
        coil: usize,
        params: &CommutationParams,
        offset: f64,
    ) -> Result<DataSetZ> {
        self(coil, params, offset)
    }
}

/// One calibration pass over all coil sets.
pub fn calibrate<S: CalibrationSource>(
    initial: &CommutationParams,
    delta: f64,
    source: &mut S,
) -> Result<(CommutationParams, Vec<CalibrationRecord>)> {
    check_delta(delta)?;
    let mut params = initial.clone();
    let mut records = Vec::with_capacity(initial.coil_sets());
    for l in 0..initial.coil_sets() {
        let z1 = source.dataset(l, &params, -delta)?;
        let z2 = source.dataset(l, &params, delta)?;
        let c1 = fit_calibration_coefficient(&z1)?;
        let c2 = fit_calibration_coefficient(&z2)?;
        let (k, zeta) = calibration_update(params.k_hat[l], params.zeta_hat[l], delta, c1, c2)?;
        params.k_hat[l] = k;
        params.zeta_hat[l] = zeta;
        records.push(CalibrationRecord { delta, c1, c2 });
    }
    Ok((params, records))
}

/// Calibration from recorded pairs `(Z_1^l, Z_2^l)`, recorded with offsets
/// `-delta` and `+delta` around `initial`.
pub fn calibrate_from_datasets(
    initial: &CommutationParams,
    pairs: &[(DataSetZ, DataSetZ)],
) -> Result<(CommutationParams, Vec<CalibrationRecord>)> {
    if pairs.len() != initial.coil_sets() {
        return Err(Error::invalid(format!(
            "need data for {} coil sets, got {}",
            initial.coil_sets(),
            pairs.len()
        )));
    }
    let delta = pairs[0].1.delta;
    for (z1, z2) in pairs {
        if z1.delta != -z2.delta || z2.delta != delta {
            return Err(Error::invalid(
                "data sets must use phase offsets -delta and +delta with a common delta",
            ));
        }
    }
    let mut source = |coil: usize, _: &CommutationParams, offset: f64| {
        let (z1, z2) = &pairs[coil];
        Ok(if offset < 0.0 { z1.clone() } else { z2.clone() })
    };
    calibrate(initial, delta, &mut source)
}
