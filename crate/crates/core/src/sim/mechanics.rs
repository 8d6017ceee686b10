//! Rigid mover with viscous and Coulomb friction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this speed (m/s) the mover is treated as resting.
pub const VELOCITY_DEADBAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechConfig {
    /// Moving mass (kg).
    pub mass: f64,
    /// Viscous friction (N s/m).
    pub viscous: f64,
    /// Coulomb friction level (N).
    pub coulomb: f64,
    /// Control and integration rate (Hz).
    pub sample_rate: f64,
}

impl Default for MechConfig {
    fn default() -> Self {
        Self {
            mass: 4.0,
            viscous: 10.0,
            coulomb: 2.0,
            sample_rate: 10_000.0,
        }
    }
}

impl MechConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid("mass must be positive"));
        }
        if !(ok(self.viscous) && ok(self.coulomb)) {
            return Err(Error::invalid("friction coefficients must be >= 0"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MechState {
    pub position: f64,
    pub velocity: f64,
}

/// Advances the mover by one sample under a constant driving force.
///
/// The friction direction is frozen over the step. A resting mover stays put
/// while `|fy|` does not exceed the Coulomb level, and friction never
/// reverses the direction of motion within a step.
pub fn step_mechanics(state: MechState, fy: f64, cfg: &MechConfig) -> Result<MechState> {
    if !fy.is_finite() {
        return Err(Error::NonFinite("driving force".into()));
    }
    let dt = 1.0 / cfg.sample_rate;
    let dir = if state.velocity.abs() < VELOCITY_DEADBAND {
        if fy.abs() <= cfg.coulomb {
            return Ok(MechState {
                position: state.position,
                velocity: 0.0,
            });
        }
        fy.signum()
    } else {
        state.velocity.signum()
    };
    let acc = |v: f64| (fy - cfg.viscous * v - cfg.coulomb * dir) / cfg.mass;
    let v0 = state.velocity;
    let (k1y, k1v) = (v0, acc(v0));
    let (k2y, k2v) = (v0 + 0.5 * dt * k1v, acc(v0 + 0.5 * dt * k1v));
    let (k3y, k3v) = (v0 + 0.5 * dt * k2v, acc(v0 + 0.5 * dt * k2v));
    let (k4y, k4v) = (v0 + dt * k3v, acc(v0 + dt * k3v));
    let mut next = MechState {
        position: state.position + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        velocity: v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    };
    if next.velocity * dir < 0.0 {
        next.velocity = 0.0;
    }
    if !(next.position.is_finite() && next.velocity.is_finite()) {
        return Err(Error::NonFinite("mover state".into()));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MechConfig {
        MechConfig::default()
    }

    #[test]
    fn rest_is_kept_without_force() {
        let s = MechState {
            position: 0.03,
            velocity: 0.0,
        };
        assert_eq!(step_mechanics(s, 0.0, &cfg()).unwrap(), s);
        assert_eq!(step_mechanics(s, 1.9, &cfg()).unwrap(), s);
        assert!(step_mechanics(s, 2.5, &cfg()).unwrap().velocity > 0.0);
    }

    #[test]
    fn pure_mass_accelerates_exactly() {
        let c = MechConfig {
            viscous: 0.0,
            coulomb: 0.0,
            ..cfg()
        };
        let mut s = MechState::default();
        for _ in 0..10_000 {
            s = step_mechanics(s, 8.0, &c).unwrap();
        }
        // a = 2 m/s^2 for one second
        assert!((s.velocity - 2.0).abs() < 1e-9);
        assert!((s.position - 1.0).abs() < 1e-6);
    }

    #[test]
    fn viscous_decay_matches_exponential() {
        let c = MechConfig {
            coulomb: 0.0,
            ..cfg()
        };
        let mut s = MechState {
            position: 0.0,
            velocity: 0.1,
        };
        for _ in 0..1000 {
            s = step_mechanics(s, 0.0, &c).unwrap();
        }
        let exact = 0.1 * (-10.0f64 / 4.0 * 0.1).exp();
        assert!((s.velocity - exact).abs() < 1e-10);
    }

    #[test]
    fn coulomb_friction_stops_without_reversal() {
        let mut s = MechState {
            position: 0.0,
            velocity: 0.01,
        };
        for _ in 0..1000 {
            s = step_mechanics(s, 0.0, &cfg()).unwrap();
            assert!(s.velocity >= 0.0);
        }
        assert_eq!(s.velocity, 0.0);
        assert!(step_mechanics(s, f64::NAN, &cfg()).is_err());
    }
}
