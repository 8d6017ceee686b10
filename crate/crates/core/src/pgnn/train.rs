//! Identification cost, its gradient, and the training schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSetZ;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pgnn::lip::{
    anchor_model, fit_physical_anchor, least_squares_linear, RegularizationSpec,
};
use crate::pgnn::mlp::{MlpCache, MlpParams};
use crate::pgnn::model::{InputScaling, PgnnCoilModel, PHYSICAL_PARAMS};
use crate::pgnn::samples::TrainingSet;
use crate::transform::FixedCommutation;

/// Mean squared data-fit error plus the physical-parameter penalty.
pub fn cost(
    model: &PgnnCoilModel,
    data: &TrainingSet,
    reg: &RegularizationSpec,
    exec: Execution,
) -> Result<f64> {
    Ok(data_mse(model, data, exec)? + reg.penalty(&model.theta_phy()))
}

/// `(1/N) sum ||F - F_hat||^2` over all samples.
pub fn data_mse(model: &PgnnCoilModel, data: &TrainingSet, exec: Execution) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let sum = exec
        .chunked_reduce(
            &data.samples,
            |chunk| {
                chunk
                    .iter()
                    .map(|s| {
                        let r = model.predict(s.i, s.y) - s.force;
                        r.fy * r.fy + r.fx * r.fx + r.tz * r.tz
                    })
                    .sum::<f64>()
            },
            |a, b| a + b,
        )
        .unwrap_or(0.0);
    Ok(sum / data.len() as f64)
}

/// Cost for the two data sets of one coil set.
pub fn cost_of_datasets(
    model: &PgnnCoilModel,
    z1: &DataSetZ,
    z2: &DataSetZ,
    fixed: &FixedCommutation,
    reg: &RegularizationSpec,
) -> Result<f64> {
    let data = TrainingSet::from_datasets(z1, z2, fixed)?;
    cost(model, &data, reg, Execution::default())
}

struct GradScratch {
    c1: MlpCache,
    c2: MlpCache,
    cog: MlpCache,
}

/// Cost and its gradient with respect to [`PgnnCoilModel::params`].
pub fn cost_gradient(
    model: &PgnnCoilModel,
    data: &TrainingSet,
    reg: &RegularizationSpec,
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let n_params = model.param_count();
    let [o1, o2, o3] = model.net_offsets();
    let inv_n = 1.0 / data.len() as f64;
    let (a, b) = (model.a, model.b);

    let (loss, mut grad) = exec
        .chunked_reduce(
            &data.samples,
            |chunk| {
                let mut grad = vec![0.0; n_params];
                let mut loss = 0.0;
                let mut sc = GradScratch {
                    c1: MlpCache::default(),
                    c2: MlpCache::default(),
                    cog: MlpCache::default(),
                };
                for s in chunk {
                    let basis = model.basis(s.y);
                    let (c, sn) = (basis.cos, basis.sin);
                    let (ia, ib) = (s.i.a, s.i.b);
                    model.net_col1.forward_cached(basis.x, &mut sc.c1);
                    model.net_col2.forward_cached(basis.x, &mut sc.c2);
                    model.net_cog.forward_cached(basis.x, &mut sc.cog);
                    let (f1, f2, fc) = (sc.c1.output(), sc.c2.output(), sc.cog.output());
                    let f = s.force.as_array();
                    let mut g = [0.0; 3];
                    for q in 0..3 {
                        let k1 = a[(q, 0)] * c + b[(q, 0)] * sn + f1[q];
                        let k2 = a[(q, 1)] * c + b[(q, 1)] * sn + f2[q];
                        let r = k1 * ia + k2 * ib + fc[q] - f[q];
                        loss += r * r;
                        g[q] = 2.0 * r * inv_n;
                        grad[q] += g[q] * c * ia;
                        grad[3 + q] += g[q] * c * ib;
                        grad[6 + q] += g[q] * sn * ia;
                        grad[9 + q] += g[q] * sn * ib;
                    }
                    model
                        .net_col1
                        .backward(&sc.c1, g.map(|v| v * ia), &mut grad[o1..o2]);
                    model
                        .net_col2
                        .backward(&sc.c2, g.map(|v| v * ib), &mut grad[o2..o3]);
                    model.net_cog.backward(&sc.cog, g, &mut grad[o3..]);
                }
                (loss, grad)
            },
            |(la, mut ga), (lb, gb)| {
                ga.iter_mut().zip(gb).for_each(|(x, y)| *x += y);
                (la + lb, ga)
            },
        )
        .expect("non-empty data");

    let theta = model.theta_phy();
    for j in 0..PHYSICAL_PARAMS {
        let l2 = reg.lambda[j] * reg.lambda[j];
        grad[j] += 2.0 * l2 * (theta[j] - reg.theta_phy_star[j]);
    }
    Ok((loss * inv_n + reg.penalty(&theta), grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Hidden widths of the two gain-correction networks.
    pub gain_hidden: Vec<usize>,
    pub cog_hidden: Vec<usize>,
    /// Diagonal entry of `Lambda`, applied to all physical parameters.
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Re-solve the linear parameters every this many epochs (0 disables).
    pub ls_every: usize,
    /// Keep every `record_stride`-th record of each data set.
    pub record_stride: usize,
    /// Position range mapped to `[-1, 1]`; defaults to the data's range.
    pub input_range: Option<(f64, f64)>,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gain_hidden: vec![2],
            cog_hidden: vec![16],
            lambda: 0.1,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 2000,
            ls_every: 100,
            record_stride: 10,
            input_range: None,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if !positive(self.learning_rate) || !positive(self.epsilon) {
            return Err(Error::invalid("learning rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam decay rates must lie in [0, 1)"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be >= 1"));
        }
        if self.gain_hidden.is_empty() || self.cog_hidden.is_empty() {
            return Err(Error::invalid("networks need at least one hidden layer"));
        }
        if let Some((lo, hi)) = self.input_range {
            InputScaling::over(lo, hi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochCost {
    pub epoch: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Cost of the physics-only model at the anchor.
    pub anchor_cost: f64,
    /// Cost right after the initial least-squares step.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub final_mse: f64,
    /// Cost before each gradient step, then after the terminal least-squares step.
    pub curve: Vec<EpochCost>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCoil {
    pub model: PgnnCoilModel,
    pub regularization: RegularizationSpec,
    pub report: TrainingReport,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], hp: &Hyperparams) {
        self.t += 1;
        let c1 = 1.0 - hp.beta1.powi(self.t);
        let c2 = 1.0 - hp.beta2.powi(self.t);
        for k in 0..p.len() {
            self.m[k] = hp.beta1 * self.m[k] + (1.0 - hp.beta1) * g[k];
            self.v[k] = hp.beta2 * self.v[k] + (1.0 - hp.beta2) * g[k] * g[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            p[k] -= hp.learning_rate * mh / (vh.sqrt() + hp.epsilon);
        }
    }
}

fn check_finite(cost: f64, epoch: usize) -> Result<()> {
    if cost.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("training cost at epoch {epoch}")))
    }
}

/// Identifies one coil set.
///
/// The anchor `theta_phy*` is the physics-only least-squares fit. Hidden
/// layers are initialised from `hp.seed`, the linear parameters are solved
/// in closed form, then Adam runs on all parameters with the closed-form
/// solve repeated every `hp.ls_every` epochs and once at the end. The
/// parameters with the lowest observed cost are returned.
pub fn train(data: &TrainingSet, pole_pitch: f64, hp: &Hyperparams) -> Result<TrainedCoil> {
    hp.validate()?;
    let exec = hp.execution;
    let (lo, hi) = match hp.input_range {
        Some(r) => r,
        None => data
            .position_range()
            .ok_or_else(|| Error::invalid("training data is empty"))?,
    };
    let scaling = InputScaling::over(lo, hi)?;
    let mut model = PgnnCoilModel::zeros(&hp.gain_hidden, &hp.cog_hidden, pole_pitch, scaling)?;
    let theta_star = fit_physical_anchor(&model, data, exec)?;
    let reg = RegularizationSpec::uniform(hp.lambda, theta_star);

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    model.net_col1 = MlpParams::spread_init(&hp.gain_hidden, &mut rng)?;
    model.net_col2 = MlpParams::spread_init(&hp.gain_hidden, &mut rng)?;
    model.net_cog = MlpParams::spread_init(&hp.cog_hidden, &mut rng)?;
    model.set_theta_phy(&theta_star);
    let anchor_cost = cost(&anchor_model(&model, &reg), data, &reg, exec)?;

    least_squares_linear(&mut model, data, &reg, exec)?;
    let mut params = model.params();
    let mut best = (f64::INFINITY, params.clone());
    let mut adam = Adam::new(params.len());
    let mut curve = Vec::with_capacity(hp.epochs + 1);
    let mut initial_cost = None;

    for epoch in 0..hp.epochs {
        if epoch > 0 && hp.ls_every > 0 && epoch % hp.ls_every == 0 {
            model.set_params(&params);
            least_squares_linear(&mut model, data, &reg, exec)?;
            params = model.params();
        }
        model.set_params(&params);
        let (c, g) = cost_gradient(&model, data, &reg, exec)?;
        check_finite(c, epoch)?;
        initial_cost.get_or_insert(c);
        curve.push(EpochCost { epoch, cost: c });
        if c < best.0 {
            best = (c, params.clone());
        }
        adam.step(&mut params, &g, hp);
    }

    model.set_params(&params);
    least_squares_linear(&mut model, data, &reg, exec)?;
    let c = cost(&model, data, &reg, exec)?;
    check_finite(c, hp.epochs)?;
    curve.push(EpochCost {
        epoch: hp.epochs,
        cost: c,
    });
    let initial_cost = *initial_cost.get_or_insert(c);
    if c < best.0 {
        best = (c, model.params());
    }
    model.set_params(&best.1);
    let final_mse = data_mse(&model, data, exec)?;
    Ok(TrainedCoil {
        model,
        regularization: reg,
        report: TrainingReport {
            anchor_cost,
            initial_cost,
            final_cost: best.0,
            final_mse,
            curve,
        },
    })
}

/// Trains one coil set from its two identification data sets.
pub fn train_from_datasets(
    z1: &DataSetZ,
    z2: &DataSetZ,
    fixed: &FixedCommutation,
    hp: &Hyperparams,
) -> Result<TrainedCoil> {
    hp.validate()?;
    let data = TrainingSet::from_datasets(
        &z1.decimated(hp.record_stride),
        &z2.decimated(hp.record_stride),
        fixed,
    )?;
    train(&data, fixed.pole_pitch, hp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgnn::samples::Sample;
    use crate::plant::{CurrentPair, ForceVector};
    use rand::Rng;

    fn scaling() -> InputScaling {
        InputScaling::over(-0.1, 0.1).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng) -> PgnnCoilModel {
        let mut m = PgnnCoilModel::zeros(&[2], &[3], 0.024, scaling()).unwrap();
        let p: Vec<f64> = (0..m.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        m.set_params(&p);
        m
    }

    fn data_from(model: &PgnnCoilModel, rng: &mut ChaCha8Rng, n: usize) -> TrainingSet {
        TrainingSet::from_samples(
            (0..n)
                .map(|_| {
                    let y = rng.random_range(-0.1..0.1);
                    let i =
                        CurrentPair::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    Sample {
                        y,
                        i,
                        force: model.predict(i, y),
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn perfect_model_costs_only_the_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng);
        let data = data_from(&m, &mut rng, 200);
        let at_anchor = RegularizationSpec::uniform(0.1, m.theta_phy());
        let c = cost(&m, &data, &at_anchor, Execution::Sequential).unwrap();
        assert!(c < 1e-28);

        let mut shifted = m.theta_phy();
        shifted[4] += 2.0;
        let reg = RegularizationSpec::uniform(0.1, shifted);
        let c = cost(&m, &data, &reg, Execution::Sequential).unwrap();
        assert!((c - 0.04).abs() < 1e-15);
        let reg2 = RegularizationSpec::uniform(0.2, shifted);
        let c2 = cost(&m, &data, &reg2, Execution::Sequential).unwrap();
        assert!((c2 - 4.0 * c).abs() < 1e-14);
        assert!(cost(&m, &TrainingSet::default(), &reg, Execution::Sequential).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = random_model(&mut rng);
        let data = data_from(&truth, &mut rng, 40);
        let m = random_model(&mut rng);
        let reg = RegularizationSpec::uniform(0.3, random_model(&mut rng).theta_phy());
        let (_, g) = cost_gradient(&m, &data, &reg, Execution::Sequential).unwrap();
        let p = m.params();
        let mut probe = m.clone();
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] += 1e-6;
            probe.set_params(&q);
            let up = cost(&probe, &data, &reg, Execution::Sequential).unwrap();
            q[k] -= 2e-6;
            probe.set_params(&q);
            let down = cost(&probe, &data, &reg, Execution::Sequential).unwrap();
            let fd = (up - down) / 2e-6;
            assert!(
                (fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn penalty_gradient_only_touches_physical_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng);
        let data = data_from(&m, &mut rng, 30);
        let reg0 = RegularizationSpec::uniform(0.0, [0.0; 12]);
        let reg1 = RegularizationSpec::uniform(0.7, [0.3; 12]);
        let (_, g0) = cost_gradient(&m, &data, &reg0, Execution::Sequential).unwrap();
        let (_, g1) = cost_gradient(&m, &data, &reg1, Execution::Sequential).unwrap();
        for k in 12..g0.len() {
            assert_eq!(g0[k], g1[k]);
        }
        assert!((0..12).any(|k| g0[k] != g1[k]));
    }

    #[test]
    fn gradient_vanishes_in_linear_slots_after_least_squares() {
        use crate::pgnn::lip::{linear_params, LinearLayout};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = random_model(&mut rng);
        let mut data = data_from(&truth, &mut rng, 300);
        for s in &mut data.samples {
            s.force += ForceVector::new(rng.random_range(-0.5..0.5), 0.1, -0.2);
        }
        let mut m = random_model(&mut rng);
        let reg = RegularizationSpec::uniform(0.1, random_model(&mut rng).theta_phy());
        least_squares_linear(&mut m, &data, &reg, Execution::Sequential).unwrap();
        let (_, g) = cost_gradient(&m, &data, &reg, Execution::Sequential).unwrap();

        // map each linear slot of each axis to its flat index by perturbation
        let base = m.params();
        let layout = LinearLayout::of(&m);
        for q in 0..3 {
            let t = linear_params(&m, q);
            for slot in 0..layout.dim() {
                let mut probe = m.clone();
                let mut t2 = t.clone();
                t2[slot] += 1.0;
                crate::pgnn::lip::set_linear_params(&mut probe, q, &t2);
                let p = probe.params();
                let k = (0..p.len()).find(|&k| p[k] != base[k]).unwrap();
                assert!(g[k].abs() <= 1e-8, "axis {q} slot {slot}: {}", g[k]);
            }
        }
    }

    #[test]
    fn classical_plant_training_matches_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut truth = random_model(&mut rng);
        for net in [&mut truth.net_col1, &mut truth.net_col2, &mut truth.net_cog] {
            *net = MlpParams::zeros(&net.hidden_widths()).unwrap();
        }
        let data = data_from(&truth, &mut rng, 400);
        let hp = Hyperparams {
            epochs: 30,
            ls_every: 10,
            execution: Execution::Sequential,
            ..Hyperparams::default()
        };
        let trained = train(&data, 0.024, &hp).unwrap();
        assert!(trained.report.anchor_cost < 1e-20);
        assert!(trained.report.final_cost <= trained.report.anchor_cost + 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_not_worse_than_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = random_model(&mut rng);
        let data = data_from(&truth, &mut rng, 500);
        let hp = Hyperparams {
            epochs: 60,
            ls_every: 20,
            seed: 9,
            ..Hyperparams::default()
        };
        let a = train(&data, 0.024, &hp).unwrap();
        let b = train(&data, 0.024, &hp).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.report.final_cost <= a.report.anchor_cost);
        assert!(a.report.final_cost <= a.report.initial_cost);
        let seq = train(
            &data,
            0.024,
            &Hyperparams {
                execution: Execution::Sequential,
                ..hp
            },
        )
        .unwrap();
        assert_eq!(seq.model, a.model);
    }
}
