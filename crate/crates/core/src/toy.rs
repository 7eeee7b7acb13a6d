//! Synthetic 1-D regression task with a gap in the inputs, used to show how epistemic
//! uncertainty grows away from the data.
//!
//! Inputs are drawn uniformly from `[−3, −0.5] ∪ [0.5, 3]`, targets are
//! `sin(2x) + ε` with `ε ~ N(0, (0.1 + 0.1|x|)²)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blr::{default_prior_grid, fit_deep_blr, select_and_fit, DeepBlr};
use crate::data::{Dataset, NormalizationStats};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{train, MlpArchitecture, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toy1dConfig {
    pub n_train: usize,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub hidden_units: usize,
    pub train: TrainConfig,
    /// Fixed prior variance; `None` selects it on a validation split.
    pub prior_variance: Option<f64>,
    pub seed: u64,
}

impl Default for Toy1dConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            grid_points: 401,
            grid_min: -4.0,
            grid_max: 4.0,
            hidden_units: 50,
            train: TrainConfig {
                epochs: 400,
                ..TrainConfig::default()
            },
            prior_variance: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub mean: f64,
    pub aleatoric_std: f64,
    pub epistemic_std: f64,
    pub total_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toy1dResult {
    pub config: Toy1dConfig,
    pub prior_variance: f64,
    pub train_x: Vec<f64>,
    pub train_y: Vec<f64>,
    pub grid: Vec<GridPoint>,
}

pub fn noise_std(x: f64) -> f64 {
    0.1 + 0.1 * x.abs()
}

/// Seeded sample of the task: half the points on each side of the gap.
pub fn generate_toy_data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n)
        .map(|i| {
            let u = rng.random_range(0.5..=3.0);
            if i % 2 == 0 {
                -u
            } else {
                u
            }
        })
        .collect();
    let ys = xs
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            (2.0 * x).sin() + noise_std(x) * e
        })
        .collect();
    (xs, ys)
}

pub fn run_toy1d(config: &Toy1dConfig) -> Result<Toy1dResult> {
    if config.n_train < 10 || config.grid_points < 2 || !(config.grid_max > config.grid_min) {
        return Err(Error::InvalidConfig("toy1d needs n_train >= 10, grid_points >= 2 and a non-empty range".into()));
    }
    let (train_x, train_y) = generate_toy_data(config.n_train, config.seed);
    let raw = Dataset::from_matrices(
        "toy1d",
        Matrix::from_vec(train_x.len(), 1, train_x.clone())?,
        Matrix::from_vec(train_y.len(), 1, train_y.clone())?,
    )?;
    let stats = NormalizationStats::fit(&raw);
    let data = stats.apply(&raw)?;
    let model = train(
        &data.features,
        &data.targets,
        MlpArchitecture::new(1, config.hidden_units, 1),
        &config.train.with_seed(config.seed),
    )?;
    let blr: DeepBlr = match config.prior_variance {
        Some(g) => fit_deep_blr(&model, &data.features, &data.targets, g, false)?,
        None => select_and_fit(&model, &data.features, &data.targets, &default_prior_grid(), 0.1, config.seed, false)?,
    };

    let (sx, sy) = (stats.feature_stds[0], stats.target_stds[0]);
    let step = (config.grid_max - config.grid_min) / (config.grid_points - 1) as f64;
    let grid = (0..config.grid_points)
        .map(|i| {
            let x = config.grid_min + step * i as f64;
            let p = blr.predict(&[(x - stats.feature_means[0]) / sx])?;
            Ok(GridPoint {
                x,
                mean: stats.denormalize_target_mean(0, p.mean[0]),
                aleatoric_std: p.aleatoric_variance[0].sqrt() * sy,
                epistemic_std: p.epistemic_variance[0].sqrt() * sy,
                total_std: p.variance[0].sqrt() * sy,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Toy1dResult {
        config: config.clone(),
        prior_variance: blr.prior_variance(),
        train_x,
        train_y,
        grid,
    })
}

impl Toy1dResult {
    /// One `train` row per training point (stds empty) followed by one `grid` row per
    /// grid point, after a `# config:` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# config: {}",
            serde_json::json!({"toy1d": self.config, "prior_variance": self.prior_variance})
        )?;
        writeln!(out, "kind,x,y,mean,aleatoric_std,epistemic_std,total_std")?;
        for (x, y) in self.train_x.iter().zip(&self.train_y) {
            writeln!(out, "train,{x},{y},,,,")?;
        }
        for g in &self.grid {
            writeln!(
                out,
                "grid,{},,{},{},{},{}",
                g.x, g.mean, g.aleatoric_std, g.epistemic_std, g.total_std
            )?;
        }
        Ok(())
    }
}
