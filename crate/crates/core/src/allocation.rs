//! Minimum-power inversion of an identified model: the currents of all coil
//! sets that make the predicted force equal a desired force.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::classical::{CommutationParams, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::ThinSvd;
use crate::pgnn::PgnnFullModel;
use crate::plant::{
    expand_star, star_power_factor_inverse, CurrentPair, CurrentTriple, ForceVector,
};
use crate::transform::MagnitudePhaseCommand;

/// Below this singular value ratio the right inverse is replaced by the
/// SVD pseudoinverse.
const RIGHT_INVERSE_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationSolution {
    pub currents: Vec<CurrentTriple>,
    /// Empty unless requested through [`pgnn_commutate_commands`].
    pub commands: Vec<MagnitudePhaseCommand>,
    /// Model prediction for `currents`.
    pub predicted_force: ForceVector,
    /// Euclidean norm of all phase currents (A).
    pub norm: f64,
}

/// Stacked `[K^1 R^-1, ..., K^L R^-1]`, with `R` the star power factor.
fn weighted_gain(model: &PgnnFullModel, y: f64) -> DMatrix<f64> {
    let r_inv = star_power_factor_inverse();
    let n = model.coil_sets();
    let mut kw = DMatrix::zeros(3, 2 * n);
    for (l, m) in model.coil_models.iter().enumerate() {
        kw.view_mut((0, 2 * l), (3, 2))
            .copy_from(&(m.gain(y) * r_inv));
    }
    kw
}

/// Currents minimising the dissipated power `sum_l |i^l|^2` subject to
/// `F_hat(i, y) = f_star`.
pub fn pgnn_commutate(
    f_star: ForceVector,
    y: f64,
    model: &PgnnFullModel,
) -> Result<CommutationSolution> {
    if !f_star.is_finite() || !y.is_finite() {
        return Err(Error::invalid("desired force and position must be finite"));
    }
    let kw = weighted_gain(model, y);
    let svd = ThinSvd::new(&kw)?;
    let ratio = svd.ratio();
    if svd.s.len() < 3 || !(ratio > RANK_TOLERANCE) {
        return Err(Error::RankDeficient { y, ratio });
    }
    let target = (f_star - model.mean_cogging(y)).to_vector();
    let w = if ratio > RIGHT_INVERSE_RATIO {
        // w = Kw^T (Kw Kw^T)^-1 target
        let g: Matrix3<f64> = Matrix3::from_fn(|r, c| kw.row(r).dot(&kw.row(c)));
        let chol = g.cholesky().ok_or(Error::RankDeficient { y, ratio })?;
        let z: Vector3<f64> = chol.solve(&target);
        kw.tr_mul(&DVector::from_column_slice(z.as_slice()))
    } else {
        svd.pseudo_solve(&DVector::from_column_slice(target.as_slice()))
    };
    let r_inv = star_power_factor_inverse();
    let pairs: Vec<CurrentPair> = (0..model.coil_sets())
        .map(|l| {
            let i = r_inv * Vector2::new(w[2 * l], w[2 * l + 1]);
            CurrentPair::new(i[0], i[1])
        })
        .collect();
    let predicted_force = model.predict(&pairs, y)?;
    let currents: Vec<CurrentTriple> = pairs.into_iter().map(expand_star).collect();
    let norm = currents
        .iter()
        .map(|c| c.norm_squared())
        .sum::<f64>()
        .sqrt();
    Ok(CommutationSolution {
        currents,
        commands: Vec::new(),
        predicted_force,
        norm,
    })
}

/// As [`pgnn_commutate`], with each coil's currents also expressed as the
/// `(F, delta)` command of its fixed commutation.
pub fn pgnn_commutate_commands(
    f_star: ForceVector,
    y: f64,
    model: &PgnnFullModel,
    fixed_params: &CommutationParams,
) -> Result<CommutationSolution> {
    fixed_params.validate(model.coil_sets())?;
    let mut sol = pgnn_commutate(f_star, y, model)?;
    let d_m = model.pole_pitch();
    sol.commands = sol
        .currents
        .iter()
        .enumerate()
        .map(|(l, c)| {
            fixed_params
                .fixed(l, d_m)
                .to_command(CurrentPair::new(c.a, c.b), y)
        })
        .collect();
    Ok(sol)
}
