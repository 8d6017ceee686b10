//! Change of inputs between phase currents and the (magnitude, phase offset)
//! commands accepted by drives with a fixed sinusoidal commutation.
//!
//! A fixed commutation turns a command `(F, delta)` into
//! `i = (F / k) [sin(eta + delta), sin(eta + delta + 2pi/3)]`, which factors as
//! `Gamma(y) T(F, delta)`. `Gamma` has the constant determinant
//! `-sqrt(3) / (2 k^2)`, so every current pair has a unique command.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::plant::{CurrentPair, PHASE_SHIFT};

/// Commutation magnitude `F_y^l*` (N) and phase offset `delta^l` (rad).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MagnitudePhaseCommand {
    pub magnitude: f64,
    pub delta: f64,
}

impl MagnitudePhaseCommand {
    pub const fn new(magnitude: f64, delta: f64) -> Self {
        Self { magnitude, delta }
    }
}

/// Intermediate forces `(F_1, F_2) = (cos delta F, sin delta F)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntermediateForcePair {
    pub f1: f64,
    pub f2: f64,
}

/// The motor constant and phase offset baked into a fixed commutation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCommutation {
    pub k_hat: f64,
    pub zeta_hat: f64,
    pub pole_pitch: f64,
}

impl FixedCommutation {
    pub fn phase(&self, y: f64) -> f64 {
        2.0 * PI * y / self.pole_pitch + self.zeta_hat
    }

    pub fn gamma(&self, y: f64) -> Matrix2<f64> {
        gamma(y, self.k_hat, self.zeta_hat, self.pole_pitch)
    }

    pub fn to_currents(&self, cmd: MagnitudePhaseCommand, y: f64) -> CurrentPair {
        command_to_currents(cmd, y, self.k_hat, self.zeta_hat, self.pole_pitch)
    }

    pub fn to_command(&self, i: CurrentPair, y: f64) -> MagnitudePhaseCommand {
        currents_to_command(i, y, self.k_hat, self.zeta_hat, self.pole_pitch)
    }
}

/// `Gamma(y) = (1/k) [[sin eta, cos eta], [sin(eta + 2pi/3), cos(eta + 2pi/3)]]`.
pub fn gamma(y: f64, k_hat: f64, zeta_hat: f64, pole_pitch: f64) -> Matrix2<f64> {
    let eta = 2.0 * PI * y / pole_pitch + zeta_hat;
    let (s, c) = eta.sin_cos();
    let (s2, c2) = (eta + PHASE_SHIFT).sin_cos();
    Matrix2::new(s, c, s2, c2) / k_hat
}

fn gamma_inverse(y: f64, k_hat: f64, zeta_hat: f64, pole_pitch: f64) -> Matrix2<f64> {
    let eta = 2.0 * PI * y / pole_pitch + zeta_hat;
    let (s, c) = eta.sin_cos();
    let (s2, c2) = (eta + PHASE_SHIFT).sin_cos();
    // det(k Gamma) = sin(eta) cos(eta + 2pi/3) - cos(eta) sin(eta + 2pi/3) = -sin(2pi/3)
    let det = s * c2 - c * s2;
    Matrix2::new(c2, -c, -s2, s) * (k_hat / det)
}

pub fn forward_t(cmd: MagnitudePhaseCommand) -> IntermediateForcePair {
    let (s, c) = cmd.delta.sin_cos();
    IntermediateForcePair {
        f1: c * cmd.magnitude,
        f2: s * cmd.magnitude,
    }
}

/// Inverse of [`forward_t`] with canonical range `F >= 0`, `delta in (-pi, pi]`.
///
/// Uses the two-argument arctangent so commands with `F_1 <= 0` are
/// represented; `(0, 0)` maps to the zero command.
pub fn inverse_t(pair: IntermediateForcePair) -> MagnitudePhaseCommand {
    let magnitude = pair.f1.hypot(pair.f2);
    if magnitude == 0.0 {
        return MagnitudePhaseCommand::default();
    }
    let mut delta = pair.f2.atan2(pair.f1);
    if delta <= -PI {
        delta = PI;
    }
    MagnitudePhaseCommand { magnitude, delta }
}

pub fn command_to_currents(
    cmd: MagnitudePhaseCommand,
    y: f64,
    k_hat: f64,
    zeta_hat: f64,
    pole_pitch: f64,
) -> CurrentPair {
    let t = forward_t(cmd);
    let i = gamma(y, k_hat, zeta_hat, pole_pitch) * Vector2::new(t.f1, t.f2);
    CurrentPair::new(i[0], i[1])
}

pub fn currents_to_command(
    i: CurrentPair,
    y: f64,
    k_hat: f64,
    zeta_hat: f64,
    pole_pitch: f64,
) -> MagnitudePhaseCommand {
    let f = gamma_inverse(y, k_hat, zeta_hat, pole_pitch) * Vector2::new(i.a, i.b);
    inverse_t(IntermediateForcePair { f1: f[0], f2: f[1] })
}
