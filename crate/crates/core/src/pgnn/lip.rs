//! Linear-in-parameters view of a coil model and the regularised
//! least-squares solve for the output-layer and physical parameters.
//!
//! For axis `q` the prediction is `theta_L,q . M`, where the regressor
//!
//! ```text
//! M = [cos i_a, cos i_b, sin i_a, sin i_b, h_1 i_a, i_a, h_2 i_b, i_b, h_cog, 1]
//! ```
//!
//! does not depend on `q`, and `theta_L,q` collects row `q` of `A` and `B`
//! together with row `q` of each network's output layer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::ThinSvd;
use crate::pgnn::mlp::MlpCache;
use crate::pgnn::model::{PgnnCoilModel, PHYSICAL_PARAMS};
use crate::pgnn::samples::{Sample, TrainingSet};

/// Normal matrices with a larger eigenvalue spread are reported singular.
pub const MAX_CONDITION: f64 = 1e13;

/// Number of physical slots per axis (`A_q1, A_q2, B_q1, B_q2`).
pub const PHYSICAL_SLOTS: usize = 4;

/// Penalty `||Lambda (theta_phy - theta_phy*)||^2` with diagonal `Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSpec {
    pub lambda: [f64; PHYSICAL_PARAMS],
    pub theta_phy_star: [f64; PHYSICAL_PARAMS],
}

impl RegularizationSpec {
    pub fn uniform(lambda: f64, theta_phy_star: [f64; PHYSICAL_PARAMS]) -> Self {
        Self {
            lambda: [lambda; PHYSICAL_PARAMS],
            theta_phy_star,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid(
                "regularisation weights must be finite and >= 0",
            ));
        }
        if self.theta_phy_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("anchor parameter".into()));
        }
        Ok(())
    }

    pub fn penalty(&self, theta_phy: &[f64; PHYSICAL_PARAMS]) -> f64 {
        (0..PHYSICAL_PARAMS)
            .map(|j| (self.lambda[j] * (theta_phy[j] - self.theta_phy_star[j])).powi(2))
            .sum()
    }

    /// Indices into `theta_phy` of the physical slots of axis `q`.
    pub fn axis_slots(q: usize) -> [usize; PHYSICAL_SLOTS] {
        [q, 3 + q, 6 + q, 9 + q]
    }
}

/// Sizes of the per-axis linear parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearLayout {
    pub gain_hidden: usize,
    pub cog_hidden: usize,
}

impl LinearLayout {
    pub fn of(model: &PgnnCoilModel) -> Self {
        Self {
            gain_hidden: model.net_col1.last_hidden_width(),
            cog_hidden: model.net_cog.last_hidden_width(),
        }
    }

    pub fn dim(&self) -> usize {
        PHYSICAL_SLOTS + 2 * (self.gain_hidden + 1) + self.cog_hidden + 1
    }

    pub fn col1(&self) -> usize {
        PHYSICAL_SLOTS
    }

    pub fn col2(&self) -> usize {
        self.col1() + self.gain_hidden + 1
    }

    pub fn cog(&self) -> usize {
        self.col2() + self.gain_hidden + 1
    }
}

pub(crate) struct RegressorScratch {
    c1: MlpCache,
    c2: MlpCache,
    cog: MlpCache,
}

impl RegressorScratch {
    pub(crate) fn new() -> Self {
        Self {
            c1: MlpCache::default(),
            c2: MlpCache::default(),
            cog: MlpCache::default(),
        }
    }
}

pub(crate) fn fill_regressor(
    model: &PgnnCoilModel,
    layout: &LinearLayout,
    s: &Sample,
    scratch: &mut RegressorScratch,
    m: &mut [f64],
) {
    let b = model.basis(s.y);
    let (ia, ib) = (s.i.a, s.i.b);
    m[0] = b.cos * ia;
    m[1] = b.cos * ib;
    m[2] = b.sin * ia;
    m[3] = b.sin * ib;
    model.net_col1.forward_cached(b.x, &mut scratch.c1);
    model.net_col2.forward_cached(b.x, &mut scratch.c2);
    model.net_cog.forward_cached(b.x, &mut scratch.cog);
    let n = layout.gain_hidden;
    let (o1, o2, o3) = (layout.col1(), layout.col2(), layout.cog());
    for (j, h) in scratch.c1.last_hidden().iter().enumerate() {
        m[o1 + j] = h * ia;
    }
    m[o1 + n] = ia;
    for (j, h) in scratch.c2.last_hidden().iter().enumerate() {
        m[o2 + j] = h * ib;
    }
    m[o2 + n] = ib;
    let nc = layout.cog_hidden;
    m[o3..o3 + nc].copy_from_slice(scratch.cog.last_hidden());
    m[o3 + nc] = 1.0;
}

/// Regressor of one sample. It is shared by all three axes.
pub fn build_regressor(model: &PgnnCoilModel, sample: &Sample) -> DVector<f64> {
    let layout = LinearLayout::of(model);
    let mut m = vec![0.0; layout.dim()];
    fill_regressor(model, &layout, sample, &mut RegressorScratch::new(), &mut m);
    DVector::from_vec(m)
}

/// `theta_L,q` of axis `q`.
pub fn linear_params(model: &PgnnCoilModel, q: usize) -> DVector<f64> {
    let layout = LinearLayout::of(model);
    let mut t = vec![0.0; layout.dim()];
    t[0] = model.a[(q, 0)];
    t[1] = model.a[(q, 1)];
    t[2] = model.b[(q, 0)];
    t[3] = model.b[(q, 1)];
    let blocks = [
        (&model.net_col1, layout.col1()),
        (&model.net_col2, layout.col2()),
        (&model.net_cog, layout.cog()),
    ];
    for (net, off) in blocks {
        let l = net.output_layer();
        t[off..off + l.inputs].copy_from_slice(&l.weights[q * l.inputs..(q + 1) * l.inputs]);
        t[off + l.inputs] = l.biases[q];
    }
    DVector::from_vec(t)
}

pub fn set_linear_params(model: &mut PgnnCoilModel, q: usize, t: &DVector<f64>) {
    let layout = LinearLayout::of(model);
    assert_eq!(t.len(), layout.dim(), "linear parameter length");
    model.a[(q, 0)] = t[0];
    model.a[(q, 1)] = t[1];
    model.b[(q, 0)] = t[2];
    model.b[(q, 1)] = t[3];
    let offsets = [layout.col1(), layout.col2(), layout.cog()];
    let nets = [&mut model.net_col1, &mut model.net_col2, &mut model.net_cog];
    for (net, off) in nets.into_iter().zip(offsets) {
        let l = net.output_layer_mut();
        let n = l.inputs;
        l.weights[q * n..(q + 1) * n].copy_from_slice(&t.as_slice()[off..off + n]);
        l.biases[q] = t[off + n];
    }
}

/// `sum M M^T` (upper triangle filled) and `sum F_q M` for every axis.
pub(crate) struct NormalSums {
    pub gram: DMatrix<f64>,
    pub rhs: [DVector<f64>; 3],
}

pub(crate) fn normal_sums(
    model: &PgnnCoilModel,
    data: &TrainingSet,
    dim_used: usize,
    exec: Execution,
) -> NormalSums {
    let layout = LinearLayout::of(model);
    let dim = layout.dim();
    let zero = || NormalSums {
        gram: DMatrix::zeros(dim_used, dim_used),
        rhs: std::array::from_fn(|_| DVector::zeros(dim_used)),
    };
    exec.chunked_reduce(
        &data.samples,
        |chunk| {
            let mut acc = zero();
            let mut scratch = RegressorScratch::new();
            let mut m = vec![0.0; dim];
            for s in chunk {
                fill_regressor(model, &layout, s, &mut scratch, &mut m);
                let m = &m[..dim_used];
                for r in 0..dim_used {
                    let mr = m[r];
                    if mr == 0.0 {
                        continue;
                    }
                    for c in r..dim_used {
                        acc.gram[(r, c)] += mr * m[c];
                    }
                }
                let f = s.force.as_array();
                for q in 0..3 {
                    for (r, mr) in m.iter().enumerate() {
                        acc.rhs[q][r] += f[q] * mr;
                    }
                }
            }
            acc
        },
        |mut a, b| {
            a.gram += b.gram;
            for q in 0..3 {
                a.rhs[q] += &b.rhs[q];
            }
            a
        },
    )
    .unwrap_or_else(zero)
}

fn symmetrize_upper(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for r in 0..n {
        for c in 0..r {
            g[(r, c)] = g[(c, r)];
        }
    }
}

/// Solves `G x = b` for symmetric positive semidefinite `G` through its
/// singular value decomposition, with one step of iterative refinement.
fn solve_symmetric(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = ThinSvd::new(g)?;
    let (max, min) = (svd.max(), svd.min());
    if !(max > 0.0) || !(min > max / MAX_CONDITION) {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularNormalMatrix { condition });
    }
    let mut x = svd.pseudo_solve(b);
    let r = b - g * &x;
    x += svd.pseudo_solve(&r);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares solution".into()));
    }
    Ok(x)
}

/// Replaces the linear parameters of every axis by the minimiser of the
/// cost with the hidden layers held fixed.
pub fn least_squares_linear(
    model: &mut PgnnCoilModel,
    data: &TrainingSet,
    reg: &RegularizationSpec,
    exec: Execution,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    reg.validate()?;
    let dim = LinearLayout::of(model).dim();
    let mut sums = normal_sums(model, data, dim, exec);
    let inv_n = 1.0 / data.len() as f64;
    symmetrize_upper(&mut sums.gram);
    sums.gram *= inv_n;
    for q in 0..3 {
        let mut g = sums.gram.clone();
        let mut rhs = &sums.rhs[q] * inv_n;
        for (slot, j) in RegularizationSpec::axis_slots(q).into_iter().enumerate() {
            let l2 = reg.lambda[j] * reg.lambda[j];
            g[(slot, slot)] += l2;
            rhs[slot] += l2 * reg.theta_phy_star[j];
        }
        let theta = solve_symmetric(&g, &rhs)?;
        set_linear_params(model, q, &theta);
    }
    Ok(())
}

/// Least-squares fit of `A` and `B` with the networks left out, giving the
/// anchor `theta_phy*`.
pub fn fit_physical_anchor(
    model: &PgnnCoilModel,
    data: &TrainingSet,
    exec: Execution,
) -> Result<[f64; PHYSICAL_PARAMS]> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let mut sums = normal_sums(model, data, PHYSICAL_SLOTS, exec);
    symmetrize_upper(&mut sums.gram);
    let mut theta = [0.0; PHYSICAL_PARAMS];
    for q in 0..3 {
        let t = solve_symmetric(&sums.gram, &sums.rhs[q])?;
        for (slot, j) in RegularizationSpec::axis_slots(q).into_iter().enumerate() {
            theta[j] = t[slot];
        }
    }
    Ok(theta)
}

/// Copy of `model` with `theta_phy = theta_phy*` and zero output layers:
/// the physics-only model against which the least-squares step is compared.
pub fn anchor_model(model: &PgnnCoilModel, reg: &RegularizationSpec) -> PgnnCoilModel {
    let mut m = model.clone();
    m.set_theta_phy(&reg.theta_phy_star);
    for net in [&mut m.net_col1, &mut m.net_col2, &mut m.net_cog] {
        let l = net.output_layer_mut();
        l.weights.iter_mut().for_each(|w| *w = 0.0);
        l.biases.iter_mut().for_each(|b| *b = 0.0);
    }
    m
}

/// Largest entry of `(1/N) sum M (F_q - M^T [theta*_q; 0])` over all axes.
///
/// The least-squares step lowers the cost below the anchor's exactly when
/// this correlation between regressors and anchor residuals is nonzero.
pub fn residual_correlation(
    model: &PgnnCoilModel,
    data: &TrainingSet,
    reg: &RegularizationSpec,
    exec: Execution,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let layout = LinearLayout::of(model);
    let dim = layout.dim();
    let anchor: [DVector<f64>; 3] = {
        let a = anchor_model(model, reg);
        std::array::from_fn(|q| linear_params(&a, q))
    };
    let sums = exec
        .chunked_reduce(
            &data.samples,
            |chunk| {
                let mut acc = vec![0.0; 3 * dim];
                let mut scratch = RegressorScratch::new();
                let mut m = vec![0.0; dim];
                for s in chunk {
                    fill_regressor(model, &layout, s, &mut scratch, &mut m);
                    let f = s.force.as_array();
                    for q in 0..3 {
                        let pred: f64 = m.iter().zip(anchor[q].iter()).map(|(a, b)| a * b).sum();
                        let r = f[q] - pred;
                        for (k, mk) in m.iter().enumerate() {
                            acc[q * dim + k] += mk * r;
                        }
                    }
                }
                acc
            },
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
        .unwrap_or_default();
    let inv_n = 1.0 / data.len() as f64;
    Ok(sums.iter().fold(0.0f64, |m, v| m.max((v * inv_n).abs())))
}
