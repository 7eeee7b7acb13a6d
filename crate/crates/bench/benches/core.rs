use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deepblr::mbrl::{cem_plan, fit_dynamics, CemConfig, DynamicsConfig, DynamicsKind, EnvState, Transition};
use deepblr::nn::TrainConfig;
use deepblr::{fit_blr, init_mlp, train, Matrix, MlpArchitecture};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn blr(c: &mut Criterion) {
    let z = random_matrix(500, 50, 1);
    let y = random_matrix(500, 1, 2).column(0);
    let noise = vec![0.5; 500];
    c.bench_function("fit_blr 500x50", |b| b.iter(|| fit_blr(black_box(&z), &y, &noise, 1.0).unwrap()));
}

fn network(c: &mut Criterion) {
    let arch = MlpArchitecture::new(13, 50, 1);
    let model = init_mlp(arch, 0).unwrap();
    let x = random_matrix(32, 13, 3);
    let y = random_matrix(32, 1, 4);
    c.bench_function("forward 13-50-1", |b| b.iter(|| model.forward(black_box(x.row(0)), None).unwrap()));
    c.bench_function("loss_and_gradients batch 32", |b| {
        b.iter(|| model.loss_and_gradients(black_box(&x), &y, None).unwrap())
    });
    let x = random_matrix(455, 13, 5);
    let y = random_matrix(455, 1, 6);
    let config = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    c.bench_function("train one epoch 455 rows", |b| b.iter(|| train(black_box(&x), &y, arch, &config).unwrap()));
}

fn planning(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let transitions: Vec<Transition> = (0..400)
        .map(|_| {
            let state = EnvState::new(0.0, rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let action = rng.random_range(-10.0..10.0);
            Transition {
                state,
                action,
                next_state: deepblr::mbrl::cartpole_step(&state, action).0,
            }
        })
        .collect();
    let dynamics = DynamicsConfig {
        train: TrainConfig {
            epochs: 2,
            ..DynamicsConfig::default().train
        },
        ..DynamicsConfig::default()
    };
    let model = fit_dynamics(DynamicsKind::BlrEnsemble, &transitions, &dynamics, 0).unwrap();
    let config = CemConfig {
        horizon: 15,
        population: 50,
        elites: 5,
        iterations: 2,
        particles: 5,
        ..CemConfig::default()
    };
    c.bench_function("cem_plan blr-ensemble h200 (15x50x2x5)", |b| {
        b.iter_batched(EnvState::hanging, |s| cem_plan(&model, &s, &config, 0).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, blr, network, planning);
criterion_main!(benches);
