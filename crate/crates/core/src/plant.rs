//! Ground-truth electromagnetic plant of a three-phase coreless linear motor.
//!
//! Each coil set produces `K(y) i` where `K` is the sinusoidal gain matrix of
//! an ideal motor, optionally distorted by multiplicative position harmonics.
//! A Fourier cogging force and white measurement noise complete the model.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical phase spacing between the three windings.
pub const PHASE_SHIFT: f64 = 2.0 * PI / 3.0;

/// Tolerance accepted by [`reduce_star`] on `i_a + i_b + i_c`.
pub const STAR_TOLERANCE: f64 = 1e-9;

/// Force and torque acting on the translator: driving force `F_y`,
/// out-of-plane force `F_x` and torque `T_z`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceVector {
    pub fy: f64,
    pub fx: f64,
    pub tz: f64,
}

impl ForceVector {
    pub const ZERO: ForceVector = ForceVector {
        fy: 0.0,
        fx: 0.0,
        tz: 0.0,
    };

    pub const fn new(fy: f64, fx: f64, tz: f64) -> Self {
        Self { fy, fx, tz }
    }

    pub const fn driving(fy: f64) -> Self {
        Self {
            fy,
            fx: 0.0,
            tz: 0.0,
        }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.fy, self.fx, self.tz)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.fy, self.fx, self.tz]
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(self) -> bool {
        self.fy.is_finite() && self.fx.is_finite() && self.tz.is_finite()
    }
}

impl Add for ForceVector {
    type Output = ForceVector;
    fn add(self, o: ForceVector) -> ForceVector {
        ForceVector::new(self.fy + o.fy, self.fx + o.fx, self.tz + o.tz)
    }
}

impl AddAssign for ForceVector {
    fn add_assign(&mut self, o: ForceVector) {
        *self = *self + o;
    }
}

impl Sub for ForceVector {
    type Output = ForceVector;
    fn sub(self, o: ForceVector) -> ForceVector {
        ForceVector::new(self.fy - o.fy, self.fx - o.fx, self.tz - o.tz)
    }
}

impl SubAssign for ForceVector {
    fn sub_assign(&mut self, o: ForceVector) {
        *self = *self - o;
    }
}

impl Mul<f64> for ForceVector {
    type Output = ForceVector;
    fn mul(self, s: f64) -> ForceVector {
        ForceVector::new(self.fy * s, self.fx * s, self.tz * s)
    }
}

impl Neg for ForceVector {
    type Output = ForceVector;
    fn neg(self) -> ForceVector {
        self * -1.0
    }
}

/// Phase currents of one coil set (A).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurrentTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CurrentTriple {
    pub const ZERO: CurrentTriple = CurrentTriple {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn star_sum(self) -> f64 {
        self.a + self.b + self.c
    }

    pub fn norm_squared(self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c
    }
}

/// The two independent currents of a star-connected coil set (A).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurrentPair {
    pub a: f64,
    pub b: f64,
}

impl CurrentPair {
    pub const ZERO: CurrentPair = CurrentPair { a: 0.0, b: 0.0 };

    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

/// Completes a current pair with `i_c = -i_a - i_b`.
pub fn expand_star(pair: CurrentPair) -> CurrentTriple {
    CurrentTriple::new(pair.a, pair.b, -pair.a - pair.b)
}

/// Drops `i_c` from a star-consistent triple.
pub fn reduce_star(triple: CurrentTriple) -> Result<CurrentPair> {
    let sum = triple.star_sum();
    if !(sum.abs() <= STAR_TOLERANCE) {
        return Err(Error::invalid(format!(
            "phase currents violate the star constraint (sum {sum:.3e} A)"
        )));
    }
    Ok(CurrentPair::new(triple.a, triple.b))
}

/// Star-reduces a 3x3 phase gain matrix to the 3x2 map acting on `(i_a, i_b)`.
pub fn star_reduce_gain(k: &Matrix3<f64>) -> Matrix3x2<f64> {
    Matrix3x2::from_fn(|r, c| k[(r, c)] - k[(r, 2)])
}

/// Upper-triangular `R` with `|R (i_a, i_b)|^2 = i_a^2 + i_b^2 + i_c^2` for star
/// currents, i.e. the Cholesky factor of `[[2, 1], [1, 2]]`.
pub fn star_power_factor() -> Matrix2<f64> {
    let a = std::f64::consts::SQRT_2;
    Matrix2::new(a, 1.0 / a, 0.0, (1.5f64).sqrt())
}

/// Inverse of [`star_power_factor`].
pub fn star_power_factor_inverse() -> Matrix2<f64> {
    let a = std::f64::consts::SQRT_2;
    let c = (1.5f64).sqrt();
    Matrix2::new(1.0 / a, -1.0 / (a * a * c), 0.0, 1.0 / c)
}

/// Mechanical layout shared by all coil sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorGeometry {
    /// Number of coil sets `L`.
    pub coil_sets: usize,
    /// Magnetic pole pitch `d_m` (m), the length of two magnets.
    pub pole_pitch: f64,
    /// Lever arm `d^l` of each coil set to the centre of mass (m).
    pub lever_arms: Vec<f64>,
    /// Ratio of the motor constant acting in the orthogonal direction.
    pub mu: f64,
}

impl Default for MotorGeometry {
    fn default() -> Self {
        Self {
            coil_sets: 3,
            pole_pitch: 0.024,
            lever_arms: vec![-0.06, 0.0, 0.06],
            mu: 0.1,
        }
    }
}

impl MotorGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.coil_sets == 0 {
            return Err(Error::invalid("motor needs at least one coil set"));
        }
        if !(self.pole_pitch > 0.0 && self.pole_pitch.is_finite()) {
            return Err(Error::invalid("pole pitch must be positive"));
        }
        if self.lever_arms.len() != self.coil_sets {
            return Err(Error::invalid(format!(
                "expected {} lever arms, got {}",
                self.coil_sets,
                self.lever_arms.len()
            )));
        }
        if !self.mu.is_finite() || self.lever_arms.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("geometry contains non-finite values"));
        }
        Ok(())
    }

    /// Electrical angle `2 pi y / d_m` without phase offset.
    pub fn electrical_angle(&self, y: f64) -> f64 {
        TAU * y / self.pole_pitch
    }
}

/// True motor constant and commutation phase offset of one coil set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilSetTruth {
    /// Motor constant `k` (N/A).
    pub k: f64,
    /// Commutation phase offset `zeta` (rad).
    pub zeta: f64,
}

/// One term `amplitude * sin(2 pi n y / d_m + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn eval(&self, y: f64, pole_pitch: f64) -> f64 {
        self.amplitude * (TAU * f64::from(self.order) * y / pole_pitch + self.phase).sin()
    }
}

/// Harmonic series per force axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisHarmonics {
    pub fy: Vec<Harmonic>,
    pub fx: Vec<Harmonic>,
    pub tz: Vec<Harmonic>,
}

impl AxisHarmonics {
    pub fn axis(&self, axis: usize) -> &[Harmonic] {
        match axis {
            0 => &self.fy,
            1 => &self.fx,
            _ => &self.tz,
        }
    }

    fn sum(&self, axis: usize, y: f64, pole_pitch: f64) -> f64 {
        self.axis(axis).iter().map(|h| h.eval(y, pole_pitch)).sum()
    }

    fn all(&self) -> impl Iterator<Item = &Harmonic> {
        self.fy.iter().chain(&self.fx).chain(&self.tz)
    }

    pub fn is_empty(&self) -> bool {
        self.all().next().is_none()
    }
}

/// Deviations of the simulated motor from the ideal sinusoidal model.
///
/// Gain harmonics multiply every entry of row `q` of coil set `l` by
/// `1 + sum_n a_n sin(2 pi n y / d_m + phi_n)`; amplitudes are fractions.
/// Cogging amplitudes are in N (N m for the torque axis).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParasiticProfile {
    pub gain_harmonics: Vec<AxisHarmonics>,
    pub cogging: AxisHarmonics,
    /// Standard deviation of the force measurement noise per axis.
    pub noise_std: [f64; 3],
}

impl ParasiticProfile {
    pub fn validate(&self, coil_sets: usize) -> Result<()> {
        if !self.gain_harmonics.is_empty() && self.gain_harmonics.len() != coil_sets {
            return Err(Error::invalid(format!(
                "gain harmonics given for {} coil sets, motor has {coil_sets}",
                self.gain_harmonics.len()
            )));
        }
        for h in self.gain_harmonics.iter().flat_map(|g| g.all()) {
            if h.order < 1 || !(h.amplitude >= 0.0) || !h.phase.is_finite() {
                return Err(Error::invalid(
                    "gain harmonics need order >= 1 and non-negative amplitude",
                ));
            }
        }
        for h in self.cogging.all() {
            if h.order < 1 || !h.amplitude.is_finite() || !h.phase.is_finite() {
                return Err(Error::invalid("cogging terms need order >= 1"));
            }
        }
        if self.noise_std.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        Ok(())
    }

    /// Multiplicative gain factor of row `axis` for coil set `coil`.
    pub fn gain_factor(&self, coil: usize, axis: usize, y: f64, pole_pitch: f64) -> f64 {
        match self.gain_harmonics.get(coil) {
            Some(h) => 1.0 + h.sum(axis, y, pole_pitch),
            None => 1.0,
        }
    }
}

/// Complete description of the simulated electromagnetic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorTruth {
    pub geometry: MotorGeometry,
    pub coils: Vec<CoilSetTruth>,
    #[serde(default)]
    pub parasitics: ParasiticProfile,
}

impl MotorTruth {
    /// Ideal motor with identical coil sets and no parasitic effects.
    pub fn ideal(geometry: MotorGeometry, k: f64, zeta: f64) -> Self {
        let coils = vec![CoilSetTruth { k, zeta }; geometry.coil_sets];
        Self {
            geometry,
            coils,
            parasitics: ParasiticProfile::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.coils.len() != self.geometry.coil_sets {
            return Err(Error::invalid(format!(
                "expected {} coil truths, got {}",
                self.geometry.coil_sets,
                self.coils.len()
            )));
        }
        if self
            .coils
            .iter()
            .any(|c| !(c.k > 0.0 && c.k.is_finite()) || !c.zeta.is_finite())
        {
            return Err(Error::invalid(
                "motor constants must be positive and finite",
            ));
        }
        self.parasitics.validate(self.geometry.coil_sets)
    }

    pub fn coil_sets(&self) -> usize {
        self.geometry.coil_sets
    }

    /// Phase gain matrix of coil set `coil` including parasitic gain ripple.
    pub fn gain_matrix(&self, y: f64, coil: usize) -> Matrix3<f64> {
        let mut k = ideal_gain_matrix(y, coil, &self.geometry, &self.coils[coil]);
        let d_m = self.geometry.pole_pitch;
        for axis in 0..3 {
            let f = self.parasitics.gain_factor(coil, axis, y, d_m);
            k.row_mut(axis).scale_mut(f);
        }
        k
    }

    /// Noise-free force for the given per-coil currents.
    pub fn force(&self, currents: &[CurrentTriple], y: f64) -> ForceVector {
        debug_assert_eq!(currents.len(), self.coil_sets());
        let mut f = cogging_truth(y, &self.parasitics, self.geometry.pole_pitch).to_vector();
        for (l, i) in currents.iter().enumerate() {
            f += self.gain_matrix(y, l) * i.to_vector();
        }
        ForceVector::from_vector(&f)
    }
}

/// Ideal gain matrix `K^l(y)` of a sinusoidally commutated coil set.
///
/// Row one maps currents to driving force, row two to the out-of-plane force
/// (scaled by `mu`) and row three to torque (additionally scaled by `d^l`).
pub fn ideal_gain_matrix(
    y: f64,
    coil: usize,
    geom: &MotorGeometry,
    truth: &CoilSetTruth,
) -> Matrix3<f64> {
    let eta = geom.electrical_angle(y) + truth.zeta;
    let scale = 2.0 / 3.0 * truth.k;
    let phases = [eta, eta + PHASE_SHIFT, eta - PHASE_SHIFT];
    let d = geom.lever_arms[coil];
    Matrix3::from_fn(|r, c| {
        let p = phases[c];
        match r {
            0 => scale * p.sin(),
            1 => scale * geom.mu * p.cos(),
            _ => scale * d * geom.mu * p.cos(),
        }
    })
}

/// Ground-truth cogging force at `y`.
pub fn cogging_truth(y: f64, profile: &ParasiticProfile, pole_pitch: f64) -> ForceVector {
    let c = &profile.cogging;
    ForceVector::new(
        c.sum(0, y, pole_pitch),
        c.sum(1, y, pole_pitch),
        c.sum(2, y, pole_pitch),
    )
}

/// Seeded additive white Gaussian force measurement noise.
#[derive(Debug, Clone)]
pub struct ForceNoise {
    rng: ChaCha8Rng,
    std: [f64; 3],
}

impl ForceNoise {
    pub fn new(std: [f64; 3], seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std,
        }
    }

    pub fn sample(&mut self) -> ForceVector {
        let mut out = [0.0; 3];
        for (o, s) in out.iter_mut().zip(self.std) {
            if s > 0.0 {
                // std is validated non-negative and finite
                *o = Normal::new(0.0, s)
                    .expect("valid std")
                    .sample(&mut self.rng);
            }
        }
        ForceVector::new(out[0], out[1], out[2])
    }
}

/// Measured force: plant output plus measurement noise when a noise source is
/// supplied.
pub fn plant_force(
    currents: &[CurrentTriple],
    y: f64,
    truth: &MotorTruth,
    noise: Option<&mut ForceNoise>,
) -> ForceVector {
    let f = truth.force(currents, y);
    match noise {
        Some(n) => f + n.sample(),
        None => f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn geom() -> MotorGeometry {
        MotorGeometry {
            lever_arms: vec![0.2, 0.0, -0.2],
            ..MotorGeometry::default()
        }
    }

    fn parasitic_truth() -> MotorTruth {
        let mut t = MotorTruth::ideal(MotorGeometry::default(), 60.0, -0.5);
        let ripple = AxisHarmonics {
            fy: vec![Harmonic {
                order: 3,
                amplitude: 0.1,
                phase: 0.4,
            }],
            fx: vec![Harmonic {
                order: 2,
                amplitude: 0.05,
                phase: -1.0,
            }],
            tz: vec![],
        };
        t.parasitics.gain_harmonics = vec![ripple; 3];
        t.parasitics.cogging.fy = vec![Harmonic {
            order: 1,
            amplitude: 2.0,
            phase: 0.3,
        }];
        t
    }

    #[test]
    fn ideal_gain_at_zero_phase() {
        // eta = 0 when y = 0 and zeta = 0
        let truth = CoilSetTruth { k: 60.0, zeta: 0.0 };
        let k = ideal_gain_matrix(0.0, 0, &geom(), &truth);
        assert_abs_diff_eq!(k[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k[(0, 1)], 34.641_016_151_377_55, epsilon = 1e-9);
        assert_abs_diff_eq!(k[(0, 2)], -34.641_016_151_377_55, epsilon = 1e-9);
    }

    #[test]
    fn ideal_gain_row_structure() {
        let g = geom();
        let truth = CoilSetTruth { k: 61.0, zeta: 0.3 };
        for y in [-0.07, 0.0, 0.013, 0.09] {
            let k = ideal_gain_matrix(y, 0, &g, &truth);
            let eta = g.electrical_angle(y) + truth.zeta;
            for c in 0..3 {
                let p = eta + [0.0, PHASE_SHIFT, -PHASE_SHIFT][c];
                assert_abs_diff_eq!(
                    k[(1, c)],
                    2.0 / 3.0 * 61.0 * g.mu * p.cos(),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(k[(2, c)], 0.2 * k[(1, c)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ideal_gain_is_pole_pitch_periodic() {
        let g = geom();
        let truth = CoilSetTruth {
            k: 61.0,
            zeta: -0.54,
        };
        for y in [-0.05, 0.001, 0.031] {
            let a = ideal_gain_matrix(y, 2, &g, &truth);
            let b = ideal_gain_matrix(y + g.pole_pitch, 2, &g, &truth);
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn star_expansion() {
        assert_eq!(
            expand_star(CurrentPair::new(0.05, -0.025)),
            CurrentTriple::new(0.05, -0.025, -0.025)
        );
        assert_eq!(expand_star(CurrentPair::ZERO), CurrentTriple::ZERO);
        assert!(reduce_star(CurrentTriple::new(1.0, 1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn star_round_trip(a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let p = CurrentPair::new(a, b);
            prop_assert_eq!(reduce_star(expand_star(p)).unwrap(), p);
        }

        #[test]
        fn lorentz_linearity(alpha in -5.0f64..5.0, y in -0.1f64..0.1,
                             ia in -2.0f64..2.0, ib in -2.0f64..2.0) {
            let t = parasitic_truth();
            let i = vec![expand_star(CurrentPair::new(ia, ib)); 3];
            let scaled: Vec<_> = i.iter().map(|c| CurrentTriple::new(c.a * alpha, c.b * alpha, c.c * alpha)).collect();
            let cog = cogging_truth(y, &t.parasitics, t.geometry.pole_pitch);
            let lhs = t.force(&scaled, y) - cog;
            let rhs = (t.force(&i, y) - cog) * alpha;
            prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        }

        #[test]
        fn coil_sets_decouple(y in -0.1f64..0.1, a0 in -2.0f64..2.0, b0 in -2.0f64..2.0,
                              a1 in -2.0f64..2.0, b1 in -2.0f64..2.0) {
            let t = parasitic_truth();
            let c0 = expand_star(CurrentPair::new(a0, b0));
            let c1 = expand_star(CurrentPair::new(a1, b1));
            let z = CurrentTriple::ZERO;
            let both = t.force(&[c0, c1, z], y);
            let only0 = t.force(&[c0, z, z], y);
            let only1 = t.force(&[z, c1, z], y);
            let cog = t.force(&[z, z, z], y);
            prop_assert!((both - (only0 + only1 - cog)).norm() <= 1e-10);
        }
    }

    #[test]
    fn zero_currents_without_parasitics_give_zero_force() {
        let t = MotorTruth::ideal(MotorGeometry::default(), 60.0, 0.1);
        let f = plant_force(&[CurrentTriple::ZERO; 3], 0.03, &t, None);
        assert_eq!(f, ForceVector::ZERO);
    }

    #[test]
    fn cogging_series_evaluation() {
        let mut p = ParasiticProfile::default();
        let d_m = 0.024;
        assert_eq!(cogging_truth(0.01, &p, d_m), ForceVector::ZERO);
        p.cogging.fy.push(Harmonic {
            order: 1,
            amplitude: 2.0,
            phase: 0.0,
        });
        assert_abs_diff_eq!(cogging_truth(d_m / 4.0, &p, d_m).fy, 2.0, epsilon = 1e-12);
        let a = cogging_truth(0.0123, &p, d_m);
        let b = cogging_truth(0.0123 + d_m, &p, d_m);
        assert_abs_diff_eq!(a.fy, b.fy, epsilon = 1e-12);
    }

    #[test]
    fn noise_is_seeded() {
        let mut a = ForceNoise::new([0.5, 0.1, 0.05], 7);
        let mut b = ForceNoise::new([0.5, 0.1, 0.05], 7);
        for _ in 0..10 {
            assert_eq!(a.sample(), b.sample());
        }
        let mut silent = ForceNoise::new([0.0; 3], 1);
        assert_eq!(silent.sample(), ForceVector::ZERO);
    }

    #[test]
    fn validation_rejects_bad_profiles() {
        let mut t = parasitic_truth();
        assert!(t.validate().is_ok());
        t.parasitics.gain_harmonics[0].fy[0].order = 0;
        assert!(t.validate().is_err());
        let mut t = parasitic_truth();
        t.parasitics.noise_std = [-1.0, 0.0, 0.0];
        assert!(t.validate().is_err());
        let mut t = parasitic_truth();
        t.geometry.pole_pitch = 0.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn star_power_factor_measures_phase_power() {
        let r = star_power_factor();
        assert!((r * star_power_factor_inverse() - Matrix2::identity()).amax() < 1e-15);
        let p = CurrentPair::new(0.3, -1.1);
        let v = r * nalgebra::Vector2::new(p.a, p.b);
        assert!((v.norm_squared() - expand_star(p).norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn star_reduced_gain_matches_expanded_currents() {
        let t = parasitic_truth();
        let k = t.gain_matrix(0.017, 1);
        let kr = star_reduce_gain(&k);
        let p = CurrentPair::new(0.7, -0.2);
        let full = k * expand_star(p).to_vector();
        let red = kr * nalgebra::Vector2::new(p.a, p.b);
        assert!((full - red).amax() < 1e-12);
    }
}
