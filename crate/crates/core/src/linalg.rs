//! Dense factorizations on nalgebra matrices, computed with faer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin singular value decomposition `M = U diag(s) V^T`, `s` descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
        let svd = fm
            .thin_svd()
            .map_err(|e| Error::NonFinite(format!("SVD did not converge: {e:?}")))?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let k = s.nrows();
        Ok(Self {
            u: DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, j)]),
            s: DVector::from_fn(k, |i, _| s[i]),
            v: DMatrix::from_fn(v.nrows(), k, |i, j| v[(i, j)]),
        })
    }

    pub fn max(&self) -> f64 {
        self.s.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn min(&self) -> f64 {
        self.s.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// `s_min / s_max`, zero for the zero matrix.
    pub fn ratio(&self) -> f64 {
        let max = self.max();
        if max > 0.0 {
            self.min() / max
        } else {
            0.0
        }
    }

    /// `M^+ b` using every singular value.
    pub fn pseudo_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut c = self.u.tr_mul(b);
        for (ci, si) in c.iter_mut().zip(self.s.iter()) {
            *ci /= si;
        }
        &self.v * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs_a_wide_structured_matrix() {
        // rows repeat across column pairs, which once tripped an SVD routine
        let rows = [
            [-41.365612400998735, 26.246639988584057],
            [2.6246639988584053, 4.136561240099874],
        ];
        let m = DMatrix::from_fn(3, 6, |i, j| match i {
            2 => {
                [-0.1574798399315043, -0.24819367440599244][j % 2] * (j as f64 / 2.0 - 1.0).floor()
            }
            _ => rows[i][j % 2],
        });
        let svd = ThinSvd::new(&m).unwrap();
        let back = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((back - &m).amax() < 1e-12);
        assert!(svd.s[0] >= svd.s[1] && svd.s[1] >= svd.s[2]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = svd.pseudo_solve(&b);
        assert!((&m * x - b).amax() < 1e-12);
    }

    #[test]
    fn zero_matrix_has_zero_ratio() {
        let svd = ThinSvd::new(&DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(svd.ratio(), 0.0);
        assert!(ThinSvd::new(&DMatrix::from_element(2, 2, f64::NAN)).is_err());
    }
}
