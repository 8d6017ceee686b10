use std::f64::consts::PI;

use nalgebra::{Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgnn::mlp::MlpParams;
use crate::plant::{
    ideal_gain_matrix, star_reduce_gain, CoilSetTruth, CurrentPair, ForceVector, MotorGeometry,
};
use crate::transform::{FixedCommutation, MagnitudePhaseCommand};

/// Number of physical parameters per coil set, `vec(A) || vec(B)`.
pub const PHYSICAL_PARAMS: usize = 12;

/// Affine map from the position `y` to the network input in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub centre: f64,
    pub half_range: f64,
}

impl InputScaling {
    pub fn over(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("invalid input range [{lo}, {hi}]")));
        }
        Ok(Self {
            centre: 0.5 * (lo + hi),
            half_range: 0.5 * (hi - lo),
        })
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.centre) / self.half_range
    }
}

/// Gain and cogging model of one coil set, acting on star-reduced currents.
#[derive(Debug, Clone, PartialEq)]
pub struct PgnnCoilModel {
    pub a: Matrix3x2<f64>,
    pub b: Matrix3x2<f64>,
    pub net_col1: MlpParams,
    pub net_col2: MlpParams,
    pub net_cog: MlpParams,
    pub pole_pitch: f64,
    pub scaling: InputScaling,
}

/// Per-sample quantities shared by the prediction, regressor and gradient.
pub(crate) struct Basis {
    pub cos: f64,
    pub sin: f64,
    pub x: f64,
}

impl PgnnCoilModel {
    /// Zero physical part and networks with zero output layers.
    pub fn zeros(
        gain_hidden: &[usize],
        cog_hidden: &[usize],
        pole_pitch: f64,
        scaling: InputScaling,
    ) -> Result<Self> {
        let m = Self {
            a: Matrix3x2::zeros(),
            b: Matrix3x2::zeros(),
            net_col1: MlpParams::zeros(gain_hidden)?,
            net_col2: MlpParams::zeros(gain_hidden)?,
            net_cog: MlpParams::zeros(cog_hidden)?,
            pole_pitch,
            scaling,
        };
        m.validate()?;
        Ok(m)
    }

    /// Classical gain of coil set `coil` in the form `A cos + B sin` with
    /// networks that output zero.
    pub fn from_classical(
        truth: CoilSetTruth,
        coil: usize,
        geometry: &MotorGeometry,
        gain_hidden: &[usize],
        cog_hidden: &[usize],
        scaling: InputScaling,
    ) -> Result<Self> {
        let mut m = Self::zeros(gain_hidden, cog_hidden, geometry.pole_pitch, scaling)?;
        let quarter = geometry.pole_pitch / 4.0;
        m.a = star_reduce_gain(&ideal_gain_matrix(0.0, coil, geometry, &truth));
        m.b = star_reduce_gain(&ideal_gain_matrix(quarter, coil, geometry, &truth));
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pole_pitch.is_finite() && self.pole_pitch > 0.0) {
            return Err(Error::invalid("pole pitch must be positive"));
        }
        if !(self.scaling.half_range.is_finite()
            && self.scaling.half_range > 0.0
            && self.scaling.centre.is_finite())
        {
            return Err(Error::invalid("invalid network input scaling"));
        }
        if self.a.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("physical parameter".into()));
        }
        self.net_col1.validate()?;
        self.net_col2.validate()?;
        self.net_cog.validate()?;
        if self.net_col1.hidden_widths() != self.net_col2.hidden_widths() {
            return Err(Error::invalid("both gain networks must share a shape"));
        }
        Ok(())
    }

    pub(crate) fn basis(&self, y: f64) -> Basis {
        let (sin, cos) = (2.0 * PI * y / self.pole_pitch).sin_cos();
        Basis {
            cos,
            sin,
            x: self.scaling.apply(y),
        }
    }

    /// `theta_phy = vec(A) || vec(B)`, column-major.
    pub fn theta_phy(&self) -> [f64; PHYSICAL_PARAMS] {
        let mut t = [0.0; PHYSICAL_PARAMS];
        t[..6].copy_from_slice(self.a.as_slice());
        t[6..].copy_from_slice(self.b.as_slice());
        t
    }

    pub fn set_theta_phy(&mut self, t: &[f64; PHYSICAL_PARAMS]) {
        self.a.as_mut_slice().copy_from_slice(&t[..6]);
        self.b.as_mut_slice().copy_from_slice(&t[6..]);
    }

    pub fn param_count(&self) -> usize {
        PHYSICAL_PARAMS
            + self.net_col1.param_count()
            + self.net_col2.param_count()
            + self.net_cog.param_count()
    }

    /// Offsets of the three networks in the flat parameter vector.
    pub(crate) fn net_offsets(&self) -> [usize; 3] {
        let o1 = PHYSICAL_PARAMS;
        let o2 = o1 + self.net_col1.param_count();
        let o3 = o2 + self.net_col2.param_count();
        [o1, o2, o3]
    }

    /// All parameters: `theta_phy`, then each network's layers in order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        p[..PHYSICAL_PARAMS].copy_from_slice(&self.theta_phy());
        let [o1, o2, o3] = self.net_offsets();
        self.net_col1.write_params(&mut p[o1..o2]);
        self.net_col2.write_params(&mut p[o2..o3]);
        self.net_cog.write_params(&mut p[o3..]);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let mut phy = [0.0; PHYSICAL_PARAMS];
        phy.copy_from_slice(&p[..PHYSICAL_PARAMS]);
        self.set_theta_phy(&phy);
        let [o1, o2, o3] = self.net_offsets();
        self.net_col1.read_params(&p[o1..o2]);
        self.net_col2.read_params(&p[o2..o3]);
        self.net_cog.read_params(&p[o3..]);
    }

    pub fn physical_gain(&self, y: f64) -> Matrix3x2<f64> {
        let b = self.basis(y);
        self.a * b.cos + self.b * b.sin
    }

    /// `K(y) = A cos(2 pi y / d_m) + B sin(2 pi y / d_m) + [f_1(y), f_2(y)]`.
    pub fn gain(&self, y: f64) -> Matrix3x2<f64> {
        let b = self.basis(y);
        let c1 = self.net_col1.forward(b.x);
        let c2 = self.net_col2.forward(b.x);
        let mut k = self.a * b.cos + self.b * b.sin;
        for q in 0..3 {
            k[(q, 0)] += c1[q];
            k[(q, 1)] += c2[q];
        }
        k
    }

    pub fn cogging(&self, y: f64) -> ForceVector {
        let [fy, fx, tz] = self.net_cog.forward(self.scaling.apply(y));
        ForceVector::new(fy, fx, tz)
    }

    pub fn lorentz(&self, i: CurrentPair, y: f64) -> ForceVector {
        ForceVector::from_vector(&(self.gain(y) * Vector2::new(i.a, i.b)))
    }

    /// `F = K(y) i + F_cog(y)`.
    pub fn predict(&self, i: CurrentPair, y: f64) -> ForceVector {
        self.lorentz(i, y) + self.cogging(y)
    }

    /// Prediction for a command executed by the fixed commutation.
    pub fn predict_command(
        &self,
        cmd: MagnitudePhaseCommand,
        y: f64,
        fixed: &FixedCommutation,
    ) -> ForceVector {
        self.predict(fixed.to_currents(cmd, y), y)
    }
}

/// Either kind of per-coil input accepted by [`pgnn_predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoilInput {
    Currents(CurrentPair),
    Command(MagnitudePhaseCommand),
}

pub fn pgnn_gain(model: &PgnnCoilModel, y: f64) -> Matrix3x2<f64> {
    model.gain(y)
}

/// `fixed` is required for [`CoilInput::Command`].
pub fn pgnn_predict(
    model: &PgnnCoilModel,
    input: CoilInput,
    y: f64,
    fixed: Option<&FixedCommutation>,
) -> Result<ForceVector> {
    match input {
        CoilInput::Currents(i) => Ok(model.predict(i, y)),
        CoilInput::Command(cmd) => {
            let fixed = fixed.ok_or_else(|| {
                Error::invalid("a command input needs the fixed commutation parameters")
            })?;
            Ok(model.predict_command(cmd, y, fixed))
        }
    }
}

/// Models of all coil sets acting on one translator.
#[derive(Debug, Clone, PartialEq)]
pub struct PgnnFullModel {
    pub coil_models: Vec<PgnnCoilModel>,
}

impl PgnnFullModel {
    pub fn coil_sets(&self) -> usize {
        self.coil_models.len()
    }

    pub fn pole_pitch(&self) -> f64 {
        self.coil_models[0].pole_pitch
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .coil_models
            .first()
            .ok_or_else(|| Error::invalid("model has no coil sets"))?;
        for m in &self.coil_models {
            m.validate()?;
            if m.pole_pitch != first.pole_pitch {
                return Err(Error::invalid("coil models disagree on the pole pitch"));
            }
        }
        Ok(())
    }

    /// Mean of the per-coil cogging predictions.
    pub fn mean_cogging(&self, y: f64) -> ForceVector {
        let mut f = ForceVector::ZERO;
        for m in &self.coil_models {
            f += m.cogging(y);
        }
        f * (1.0 / self.coil_models.len() as f64)
    }

    /// `F = sum_l K^l(y) i^l + mean_l F_cog^l(y)`.
    pub fn predict(&self, currents: &[CurrentPair], y: f64) -> Result<ForceVector> {
        if currents.len() != self.coil_models.len() {
            return Err(Error::invalid(format!(
                "expected {} current pairs, got {}",
                self.coil_models.len(),
                currents.len()
            )));
        }
        let mut f = self.mean_cogging(y);
        for (m, i) in self.coil_models.iter().zip(currents) {
            f += m.lorentz(*i, y);
        }
        Ok(f)
    }
}

pub fn combine_coilsets(models: Vec<PgnnCoilModel>) -> Result<PgnnFullModel> {
    let full = PgnnFullModel {
        coil_models: models,
    };
    full.validate()?;
    Ok(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_currents, CommutationParams};
    use crate::plant::{expand_star, reduce_star, MotorTruth};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scaling() -> InputScaling {
        InputScaling::over(-0.1, 0.1).unwrap()
    }

    fn random_model(seed: u64) -> PgnnCoilModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = PgnnCoilModel::zeros(&[2], &[5], 0.024, scaling()).unwrap();
        let p: Vec<f64> = (0..m.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        m.set_params(&p);
        m
    }

    #[test]
    fn zero_networks_give_a_and_b() {
        let mut m = random_model(1);
        for net in [&mut m.net_col1, &mut m.net_col2, &mut m.net_cog] {
            let o = net.output_layer_mut();
            o.weights.iter_mut().for_each(|w| *w = 0.0);
            o.biases.iter_mut().for_each(|w| *w = 0.0);
        }
        let k0 = m.gain(0.0);
        let kq = m.gain(0.006);
        for (u, v) in k0.iter().zip(m.a.iter()) {
            assert_abs_diff_eq!(*u, *v, epsilon = 1e-15);
        }
        for (u, v) in kq.iter().zip(m.b.iter()) {
            assert_abs_diff_eq!(*u, *v, epsilon = 1e-15);
        }
    }

    #[test]
    fn physical_part_is_periodic() {
        let m = random_model(2);
        let p = m.physical_gain(0.013) - m.physical_gain(0.013 + 0.024);
        assert!(p.norm() < 1e-13);
        let net_block = m.gain(0.013) - m.physical_gain(0.013);
        assert!(net_block.norm() > 0.0);
    }

    #[test]
    fn zero_currents_predict_cogging() {
        let m = random_model(3);
        let f = m.predict(CurrentPair::ZERO, 0.031);
        assert_eq!(f, m.cogging(0.031));
    }

    #[test]
    fn params_round_trip() {
        let m = random_model(4);
        let p = m.params();
        assert_eq!(p.len(), 12 + 13 + 13 + (5 + 5 + 15 + 3));
        let mut other = PgnnCoilModel::zeros(&[2], &[5], 0.024, scaling()).unwrap();
        other.set_params(&p);
        assert_eq!(other, m);
        assert_eq!(m.theta_phy()[..6], *m.a.as_slice());
    }

    #[test]
    fn classical_representation_matches_ideal_plant() {
        let geom = MotorGeometry::default();
        let truth = CoilSetTruth {
            k: 61.34,
            zeta: -0.54,
        };
        let plant = MotorTruth::ideal(geom.clone(), truth.k, truth.zeta);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for coil in 0..3 {
            let m =
                PgnnCoilModel::from_classical(truth, coil, &geom, &[2], &[16], scaling()).unwrap();
            for _ in 0..200 {
                let y = rng.random_range(-0.1..0.1);
                let i = CurrentPair::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let mut currents = vec![crate::plant::CurrentTriple::ZERO; 3];
                currents[coil] = expand_star(i);
                let want = plant.force(&currents, y);
                let got = m.predict(i, y);
                assert!((want - got).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn command_path_with_zero_offset_is_classical() {
        let geom = MotorGeometry::default();
        let params = CommutationParams::uniform(3, 67.0, -0.52);
        let m = random_model(5);
        for y in [-0.08, -0.01, 0.0, 0.02, 0.09] {
            let fy = 7.5;
            let currents = classical_currents(ForceVector::driving(fy), y, &params, &geom).unwrap();
            let i = reduce_star(currents[1]).unwrap();
            let fixed = params.fixed(1, geom.pole_pitch);
            let via_cmd = pgnn_predict(
                &m,
                CoilInput::Command(MagnitudePhaseCommand::new(fy * force_share(&params), 0.0)),
                y,
                Some(&fixed),
            )
            .unwrap();
            let via_i = pgnn_predict(&m, CoilInput::Currents(i), y, None).unwrap();
            assert!((via_cmd - via_i).norm() <= 1e-12);
        }
        assert!(pgnn_predict(&m, CoilInput::Command(Default::default()), 0.0, None).is_err());
    }

    fn force_share(params: &CommutationParams) -> f64 {
        crate::classical::force_shares(1.0, params)[1]
    }

    #[test]
    fn combined_prediction_identities() {
        let a = random_model(6);
        let b = random_model(7);
        let c = random_model(8);
        let full = combine_coilsets(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let y = 0.017;
        assert!(
            (full.predict(&[CurrentPair::ZERO; 3], y).unwrap() - full.mean_cogging(y)).norm()
                < 1e-15
        );

        let i = [
            CurrentPair::new(0.3, -0.2),
            CurrentPair::new(-1.0, 0.4),
            CurrentPair::new(0.7, 0.9),
        ];
        let sum = a.predict(i[0], y) + b.predict(i[1], y) + c.predict(i[2], y);
        let want = sum - full.mean_cogging(y) * 2.0;
        assert!((full.predict(&i, y).unwrap() - want).norm() < 1e-12);

        let same = combine_coilsets(vec![a.clone(), a.clone(), a.clone()]).unwrap();
        let j = [i[0]; 3];
        let want = a.lorentz(i[0], y) * 3.0 + a.cogging(y);
        assert!((same.predict(&j, y).unwrap() - want).norm() < 1e-12);
        assert!(full.predict(&i[..2], y).is_err());
    }

    #[test]
    fn rejects_mismatched_pole_pitch() {
        let a = random_model(1);
        let mut b = random_model(2);
        b.pole_pitch = 0.03;
        assert!(combine_coilsets(vec![a, b]).is_err());
        assert!(combine_coilsets(vec![]).is_err());
    }
}
