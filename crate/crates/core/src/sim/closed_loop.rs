//! Position loop around the commutated motor.

use serde::{Deserialize, Serialize};

use crate::allocation::pgnn_commutate_commands;
use crate::classical::{
    classical_commands, classical_currents, offset_currents, CommutationParams,
};
use crate::dataset::{DataSetZ, ZRecord};
use crate::error::{Error, Result};
use crate::pgnn::PgnnFullModel;
use crate::plant::{expand_star, CurrentTriple, ForceNoise, ForceVector, MotorTruth};
use crate::sim::control::{feedforward, FeedforwardParams, Pid, PidGains};
use crate::sim::log::{ExperimentLog, LogMeta};
use crate::sim::mechanics::{step_mechanics, MechConfig, MechState};
use crate::sim::trajectory::Reference;
use crate::transform::MagnitudePhaseCommand;

/// How the desired driving force is turned into phase currents.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Sinusoidal commutation with the given estimates.
    Classical {
        label: String,
        params: CommutationParams,
    },
    /// Minimum-power inversion of an identified model. Currents are sent as
    /// `(F, delta)` commands through the fixed commutation `fixed`.
    Pgnn {
        model: PgnnFullModel,
        fixed: CommutationParams,
    },
    /// Only coil set `coil` is driven, carrying the full force, with the
    /// commutation phase shifted by `offset`.
    SingleCoil {
        coil: usize,
        offset: f64,
        params: CommutationParams,
    },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Classical { label, .. } => label.clone(),
            Strategy::Pgnn { .. } => "pgnn".into(),
            Strategy::SingleCoil { coil, offset, .. } => format!("coil{}_offset{offset}", coil + 1),
        }
    }

    fn validate(&self, truth: &MotorTruth) -> Result<()> {
        let n = truth.coil_sets();
        match self {
            Strategy::Classical { params, .. } => params.validate(n),
            Strategy::Pgnn { model, fixed } => {
                model.validate()?;
                if model.coil_sets() != n {
                    return Err(Error::invalid(format!(
                        "model has {} coil sets, motor has {n}",
                        model.coil_sets()
                    )));
                }
                if model.pole_pitch() != truth.geometry.pole_pitch {
                    return Err(Error::invalid("model pole pitch differs from the motor's"));
                }
                fixed.validate(n)
            }
            Strategy::SingleCoil {
                coil,
                offset,
                params,
            } => {
                params.validate(n)?;
                if *coil >= n {
                    return Err(Error::invalid(format!("coil index {coil} out of range")));
                }
                if !offset.is_finite() {
                    return Err(Error::invalid("phase offset must be finite"));
                }
                Ok(())
            }
        }
    }

    fn commutate(
        &self,
        fy: f64,
        y: f64,
        truth: &MotorTruth,
        currents: &mut [CurrentTriple],
        commands: &mut [MagnitudePhaseCommand],
    ) -> Result<()> {
        let f_star = ForceVector::driving(fy);
        let d_m = truth.geometry.pole_pitch;
        match self {
            Strategy::Classical { params, .. } => {
                currents.copy_from_slice(&classical_currents(f_star, y, params, &truth.geometry)?);
                commands.copy_from_slice(&classical_commands(f_star, params)?);
            }
            Strategy::Pgnn { model, fixed } => {
                let sol = pgnn_commutate_commands(f_star, y, model, fixed)?;
                for (l, cmd) in sol.commands.iter().enumerate() {
                    commands[l] = *cmd;
                    currents[l] = expand_star(fixed.fixed(l, d_m).to_currents(*cmd, y));
                }
            }
            Strategy::SingleCoil {
                coil,
                offset,
                params,
            } => {
                currents.fill(CurrentTriple::ZERO);
                commands.fill(MagnitudePhaseCommand::new(0.0, 0.0));
                currents[*coil] = offset_currents(
                    fy,
                    *offset,
                    y,
                    params.k_hat[*coil],
                    params.zeta_hat[*coil],
                    d_m,
                );
                commands[*coil] = MagnitudePhaseCommand::new(fy, *offset);
            }
        }
        Ok(())
    }
}

/// Mechanics and controller shared by every run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub mech: MechConfig,
    pub pid: PidGains,
    /// Runs abort once `|y|` exceeds the reference stroke by this much (m).
    pub guard_margin: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            mech: MechConfig::default(),
            pid: PidGains::default(),
            guard_margin: 0.05,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.mech.validate()?;
        self.pid.validate(self.mech.sample_rate)?;
        if !(self.guard_margin.is_finite() && self.guard_margin > 0.0) {
            return Err(Error::invalid("guard margin must be positive"));
        }
        Ok(())
    }
}

/// Tracks `reference` with feedforward plus PID feedback, commutating the
/// requested force with `strategy`.
///
/// The mechanics are driven by the noise-free force; the log records the
/// measured one. Measurement noise is seeded with `seed`.
pub fn run_closed_loop(
    strategy: &Strategy,
    reference: &Reference,
    truth: &MotorTruth,
    cfg: &LoopConfig,
    ff: &FeedforwardParams,
    seed: u64,
) -> Result<ExperimentLog> {
    truth.validate()?;
    cfg.validate()?;
    strategy.validate(truth)?;
    if reference.is_empty() {
        return Err(Error::invalid("reference is empty"));
    }
    if reference.sample_rate != cfg.mech.sample_rate {
        return Err(Error::invalid(format!(
            "reference sampled at {} Hz, loop runs at {} Hz",
            reference.sample_rate, cfg.mech.sample_rate
        )));
    }
    if !ff.is_finite() {
        return Err(Error::NonFinite("feedforward parameters".into()));
    }
    let n = reference.len();
    let coils = truth.coil_sets();
    let fs = cfg.mech.sample_rate;
    let limit = reference.max_abs_position() + cfg.guard_margin;
    let u_ff = feedforward(&reference.acceleration, &reference.velocity, ff);
    let mut noise = ForceNoise::new(truth.parasitics.noise_std, seed);
    let mut pid = Pid::new(cfg.pid, fs);
    let mut state = MechState {
        position: reference.position[0],
        velocity: 0.0,
    };
    let mut currents = vec![CurrentTriple::ZERO; coils];
    let mut commands = vec![MagnitudePhaseCommand::new(0.0, 0.0); coils];
    let mut log = ExperimentLog::new(
        LogMeta {
            strategy: strategy.label(),
            seed,
            sample_rate: fs,
            coil_sets: coils,
        },
        n,
    );
    for k in 0..n {
        let y = state.position;
        let e = reference.position[k] - y;
        let u_fb = pid.update(e);
        let fy = u_ff[k] + u_fb;
        strategy.commutate(fy, y, truth, &mut currents, &mut commands)?;
        let clean = truth.force(&currents, y);
        let measured = clean + noise.sample();

        log.t.push(k as f64 / fs);
        log.y_ref.push(reference.position[k]);
        log.v_ref.push(reference.velocity[k]);
        log.a_ref.push(reference.acceleration[k]);
        log.y.push(y);
        log.e.push(e);
        log.u_ff.push(u_ff[k]);
        log.u_fb.push(u_fb);
        log.f_star.push(ForceVector::driving(fy));
        log.force.push(measured);
        log.currents.extend_from_slice(&currents);
        log.commands.extend_from_slice(&commands);

        state = step_mechanics(state, clean.fy, &cfg.mech)?;
        if state.position.abs() > limit {
            return Err(Error::Diverged {
                time: (k + 1) as f64 / fs,
                position: state.position.abs(),
                log: Box::new(log),
            });
        }
    }
    Ok(log)
}

/// Closed-loop identification run with only coil set `coil` active and its
/// commutation phase shifted by `(-1)^i delta`. No feedforward is applied.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    coil: usize,
    i: u8,
    delta: f64,
    reference: &Reference,
    truth: &MotorTruth,
    params: &CommutationParams,
    cfg: &LoopConfig,
    seed: u64,
) -> Result<DataSetZ> {
    if !(delta.is_finite() && delta.abs() <= std::f64::consts::FRAC_PI_4) {
        return Err(Error::invalid(format!("|delta| = {delta} exceeds pi/4")));
    }
    let offset = match i {
        1 => -delta,
        2 => delta,
        _ => {
            return Err(Error::invalid(format!(
                "data set index must be 1 or 2, got {i}"
            )))
        }
    };
    let strategy = Strategy::SingleCoil {
        coil,
        offset,
        params: params.clone(),
    };
    let log = run_closed_loop(
        &strategy,
        reference,
        truth,
        cfg,
        &FeedforwardParams::ZERO,
        seed,
    )?;
    Ok(dataset_from_log(&log, coil, offset))
}

pub fn dataset_from_log(log: &ExperimentLog, coil: usize, offset: f64) -> DataSetZ {
    DataSetZ {
        coil,
        delta: offset,
        records: (0..log.len())
            .map(|k| ZRecord {
                y: log.y[k],
                force: log.force[k],
                fy_star: log.f_star[k].fy,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{plant_force, MotorGeometry};
    use crate::sim::trajectory::{back_and_forth, reference_set, TrajectorySpec};

    fn truth() -> MotorTruth {
        MotorTruth::ideal(MotorGeometry::default(), 61.0, -0.5)
    }

    fn exact() -> Strategy {
        Strategy::Classical {
            label: "exact".into(),
            params: CommutationParams::uniform(3, 61.0, -0.5),
        }
    }

    fn ff() -> FeedforwardParams {
        let m = MechConfig::default();
        FeedforwardParams {
            mass: m.mass,
            viscous: m.viscous,
            coulomb: m.coulomb,
        }
    }

    fn reference() -> Reference {
        let moves = back_and_forth(-0.1, 0.1, &[0.15], 1.0, 1000.0, 0.1);
        reference_set(&moves, 10_000.0).unwrap()
    }

    #[test]
    fn perfect_model_tracks_constant_velocity_exactly() {
        let r = reference();
        let log =
            run_closed_loop(&exact(), &r, &truth(), &LoopConfig::default(), &ff(), 1).unwrap();
        let mut cruise = 0;
        for k in 0..log.len() {
            let moving = r.velocity[k].abs() > 0.1499;
            let settled = k > 2000 && (k - 2000..k).all(|j| r.acceleration[j] == 0.0);
            if moving && settled && r.acceleration[k] == 0.0 {
                cruise += 1;
                assert!(log.e[k].abs() <= 1e-9, "e = {} at {k}", log.e[k]);
                assert!(log.u_fb[k].abs() <= 1e-6, "u_fb = {} at {k}", log.u_fb[k]);
            }
        }
        assert!(cruise > 1000);
    }

    #[test]
    fn logged_force_matches_plant_and_runs_are_reproducible() {
        let r = reference();
        let mut t = truth();
        t.parasitics.cogging.fy.push(crate::plant::Harmonic {
            order: 1,
            amplitude: 2.0,
            phase: 0.3,
        });
        let cfg = LoopConfig::default();
        let a = run_closed_loop(&exact(), &r, &t, &cfg, &ff(), 3).unwrap();
        for k in (0..a.len()).step_by(97) {
            assert_eq!(a.force[k], plant_force(a.currents_at(k), a.y[k], &t, None));
        }
        t.parasitics.noise_std = [0.5, 0.1, 0.01];
        let b = run_closed_loop(&exact(), &r, &t, &cfg, &ff(), 3).unwrap();
        let c = run_closed_loop(&exact(), &r, &t, &cfg, &ff(), 3).unwrap();
        assert_eq!(b, c);
        let d = run_closed_loop(&exact(), &r, &t, &cfg, &ff(), 4).unwrap();
        assert_ne!(b.force, d.force);
        assert_eq!(b.y, a.y);
    }

    #[test]
    fn single_coil_runs() {
        let r = reference();
        let params = CommutationParams::uniform(3, 61.0, -0.5);
        let cfg = LoopConfig::default();
        let z1 = generate_dataset(
            1,
            1,
            std::f64::consts::FRAC_PI_4,
            &r,
            &truth(),
            &params,
            &cfg,
            1,
        )
        .unwrap();
        let z2 = generate_dataset(
            1,
            2,
            std::f64::consts::FRAC_PI_4,
            &r,
            &truth(),
            &params,
            &cfg,
            1,
        )
        .unwrap();
        assert_eq!(z1.delta, -z2.delta);
        assert_eq!(z1.len(), r.len());
        assert!(z1.records.iter().any(|rec| rec.force.fx.abs() > 0.01));
        for z in [&z1, &z2] {
            let ymax = z.records.iter().fold(0.0f64, |m, rec| m.max(rec.y.abs()));
            assert!((ymax - 0.1).abs() < 0.005);
        }
        let strategy = Strategy::SingleCoil {
            coil: 1,
            offset: 0.5,
            params: params.clone(),
        };
        let log =
            run_closed_loop(&strategy, &r, &truth(), &cfg, &FeedforwardParams::ZERO, 0).unwrap();
        for k in 0..log.len() {
            let c = log.currents_at(k);
            assert_eq!(c[0], CurrentTriple::ZERO);
            assert_eq!(c[2], CurrentTriple::ZERO);
        }
        assert!(generate_dataset(0, 1, 1.0, &r, &truth(), &params, &cfg, 1).is_err());
        assert!(generate_dataset(0, 3, 0.5, &r, &truth(), &params, &cfg, 1).is_err());
    }

    #[test]
    fn divergence_returns_partial_log() {
        let r = reference_set(
            &[TrajectorySpec {
                start: 0.0,
                end: 0.0,
                v_max: 1.0,
                a_max: 1.0,
                j_max: 1.0,
                dwell: 0.5,
            }],
            10_000.0,
        )
        .unwrap();
        // commutation phase off by pi turns feedback into positive feedback
        let flipped = Strategy::Classical {
            label: "flipped".into(),
            params: CommutationParams::uniform(3, 61.0, -0.5 + std::f64::consts::PI),
        };
        let ff = FeedforwardParams {
            coulomb: 5.0,
            ..FeedforwardParams::ZERO
        };
        let mut t = truth();
        t.parasitics.cogging.fy.push(crate::plant::Harmonic {
            order: 1,
            amplitude: 5.0,
            phase: 1.0,
        });
        match run_closed_loop(&flipped, &r, &t, &LoopConfig::default(), &ff, 0) {
            Err(Error::Diverged { log, position, .. }) => {
                assert!(position > 0.05);
                assert!(!log.is_empty() && log.len() < r.len());
                log.validate().unwrap();
            }
            other => panic!("expected divergence, got {:?}", other.map(|l| l.len())),
        }
    }

    #[test]
    fn mismatched_rates_are_rejected() {
        let r = reference_set(
            &back_and_forth(-0.1, 0.1, &[0.15], 1.0, 1000.0, 0.0),
            5000.0,
        )
        .unwrap();
        assert!(run_closed_loop(&exact(), &r, &truth(), &LoopConfig::default(), &ff(), 0).is_err());
    }
}
