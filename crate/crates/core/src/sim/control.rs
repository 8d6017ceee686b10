//! Feedback and feedforward position control.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ThinSvd;
use crate::sim::log::ExperimentLog;

/// Scaled regressor columns below this singular value ratio count as
/// linearly dependent.
const FF_RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    /// N/m
    pub kp: f64,
    /// N/(m s)
    pub ki: f64,
    /// N s/m
    pub kd: f64,
    /// First-order roll-off of the derivative term (Hz).
    pub derivative_cutoff: f64,
    /// Bound on the integral contribution (N).
    pub integrator_clamp: f64,
}

impl PidGains {
    /// Gains giving a crossover near `bandwidth_hz` on a pure mass with
    /// 60 degrees of phase margin before the integrator and derivative filter.
    pub fn for_mass(mass: f64, bandwidth_hz: f64) -> Self {
        let w = std::f64::consts::TAU * bandwidth_hz;
        let kp = mass * w * w / 2.0;
        Self {
            kp,
            ki: kp * w / 10.0,
            kd: 3.0f64.sqrt() * mass * w / 2.0,
            derivative_cutoff: 20.0 * bandwidth_hz,
            integrator_clamp: 50.0,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.kp) && ok(self.ki) && ok(self.kd) && ok(self.integrator_clamp)) {
            return Err(Error::invalid("controller gains must be >= 0"));
        }
        if !(self.derivative_cutoff > 0.0 && self.derivative_cutoff < sample_rate / 2.0) {
            return Err(Error::invalid(
                "derivative cut-off must lie below half the sample rate",
            ));
        }
        Ok(())
    }
}

impl Default for PidGains {
    fn default() -> Self {
        Self::for_mass(4.0, 50.0)
    }
}

/// Discrete PID with a filtered derivative and a clamped integrator.
#[derive(Debug, Clone)]
pub struct Pid {
    gains: PidGains,
    dt: f64,
    alpha: f64,
    integral: f64,
    derivative: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains, sample_rate: f64) -> Self {
        Self {
            gains,
            dt: 1.0 / sample_rate,
            alpha: (-std::f64::consts::TAU * gains.derivative_cutoff / sample_rate).exp(),
            integral: 0.0,
            derivative: 0.0,
            prev_error: None,
        }
    }

    pub fn update(&mut self, error: f64) -> f64 {
        let g = &self.gains;
        // the first sample has no history, so the derivative starts at rest
        let raw = match self.prev_error {
            Some(p) => (error - p) / self.dt,
            None => 0.0,
        };
        self.prev_error = Some(error);
        self.derivative = self.alpha * self.derivative + (1.0 - self.alpha) * raw;
        self.integral += g.ki * error * self.dt;
        self.integral = self.integral.clamp(-g.integrator_clamp, g.integrator_clamp);
        g.kp * error + self.integral + g.kd * self.derivative
    }
}

/// Mass and friction used by the feedforward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedforwardParams {
    pub mass: f64,
    pub viscous: f64,
    pub coulomb: f64,
}

impl FeedforwardParams {
    pub const ZERO: FeedforwardParams = FeedforwardParams {
        mass: 0.0,
        viscous: 0.0,
        coulomb: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        self.mass.is_finite() && self.viscous.is_finite() && self.coulomb.is_finite()
    }
}

fn sign(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// Averages each sample with the next one; the last sample is held.
fn half_sample_average(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| 0.5 * (x[k] + x[(k + 1).min(x.len() - 1)]))
        .collect()
}

/// `[delta a*, delta v*, delta sign(v*)]` per sample.
fn ff_regressors(acceleration: &[f64], velocity: &[f64]) -> [Vec<f64>; 3] {
    let signs: Vec<f64> = velocity.iter().map(|v| sign(*v)).collect();
    [
        half_sample_average(acceleration),
        half_sample_average(velocity),
        half_sample_average(&signs),
    ]
}

/// Feedforward force `m da* + f_v dv* + f_c dsign(v*)`, with `d` the
/// half-sample average `(x[k] + x[k+1]) / 2` compensating the hold delay.
pub fn feedforward(acceleration: &[f64], velocity: &[f64], p: &FeedforwardParams) -> Vec<f64> {
    debug_assert_eq!(acceleration.len(), velocity.len());
    if acceleration.is_empty() {
        return Vec::new();
    }
    let [a, v, s] = ff_regressors(acceleration, velocity);
    (0..a.len())
        .map(|k| p.mass * a[k] + p.viscous * v[k] + p.coulomb * s[k])
        .collect()
}

/// Least-squares fit of the commanded driving force against the feedforward
/// regressors of the logged reference.
pub fn identify_feedforward_params(log: &ExperimentLog) -> Result<FeedforwardParams> {
    let target: Vec<f64> = log.f_star.iter().map(|f| f.fy).collect();
    fit_feedforward(&log.a_ref, &log.v_ref, &target)
}

pub fn fit_feedforward(
    acceleration: &[f64],
    velocity: &[f64],
    force: &[f64],
) -> Result<FeedforwardParams> {
    let n = force.len();
    if n == 0 || acceleration.len() != n || velocity.len() != n {
        return Err(Error::invalid(
            "feedforward fit needs equally long, non-empty signals",
        ));
    }
    let cols = ff_regressors(acceleration, velocity);
    // scale columns to unit norm so the rank test is unit-free
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularNormalMatrix {
            condition: f64::INFINITY,
        });
    }
    let g = DMatrix::from_fn(3, 3, |i, j| {
        (0..n).map(|k| cols[i][k] * cols[j][k]).sum::<f64>() / (norms[i] * norms[j])
    });
    let rhs = DVector::from_fn(3, |i, _| {
        (0..n).map(|k| cols[i][k] * force[k]).sum::<f64>() / norms[i]
    });
    let svd = ThinSvd::new(&g)?;
    // singular values of the Gram matrix are squares of the regressor's
    if !(svd.ratio() > FF_RANK_TOLERANCE * FF_RANK_TOLERANCE) {
        return Err(Error::SingularNormalMatrix {
            condition: 1.0 / svd.ratio(),
        });
    }
    let x = svd.pseudo_solve(&rhs);
    Ok(FeedforwardParams {
        mass: x[0] / norms[0],
        viscous: x[1] / norms[1],
        coulomb: x[2] / norms[2],
    })
}
