//! Sequential against rayon execution for the training reductions.
//!
//! Built without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clm_core::exec::Execution;
use clm_core::pgnn::lip::{least_squares_linear, RegularizationSpec};
use clm_core::pgnn::train::cost_gradient;
use clm_core::pgnn::{InputScaling, MlpParams, PgnnCoilModel, Sample, TrainingSet};
use clm_core::plant::{CurrentPair, ForceVector};

fn setup(n: usize) -> (PgnnCoilModel, TrainingSet, RegularizationSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model =
        PgnnCoilModel::zeros(&[2], &[16], 0.024, InputScaling::over(-0.1, 0.1).unwrap()).unwrap();
    model.net_col1 = MlpParams::spread_init(&[2], &mut rng).unwrap();
    model.net_col2 = MlpParams::spread_init(&[2], &mut rng).unwrap();
    model.net_cog = MlpParams::spread_init(&[16], &mut rng).unwrap();
    let samples = (0..n)
        .map(|_| Sample {
            y: rng.random_range(-0.1..0.1),
            i: CurrentPair::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            force: ForceVector::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-0.1..0.1),
            ),
        })
        .collect();
    let reg = RegularizationSpec::uniform(0.1, model.theta_phy());
    (model, TrainingSet::from_samples(samples), reg)
}

fn bench(c: &mut Criterion) {
    let modes = [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ];
    for n in [10_000, 100_000] {
        let (model, data, reg) = setup(n);

        let mut group = c.benchmark_group(format!("cost_gradient/{n}"));
        for (name, exec) in modes {
            group.bench_function(BenchmarkId::from_parameter(name), |b| {
                b.iter(|| black_box(cost_gradient(&model, &data, &reg, exec).unwrap()))
            });
        }
        group.finish();

        let mut group = c.benchmark_group(format!("least_squares/{n}"));
        for (name, exec) in modes {
            group.bench_function(BenchmarkId::from_parameter(name), |b| {
                b.iter(|| {
                    let mut m = model.clone();
                    least_squares_linear(&mut m, &data, &reg, exec).unwrap();
                    black_box(m)
                })
            });
        }
        group.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
