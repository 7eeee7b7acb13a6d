//! Closed-form Bayesian linear regression on network latents with known,
//! input-dependent noise.
//!
//! With prior `w ~ N(0, g I)` and likelihood `y_i ~ N(z_iᵀw, σ²_i)` the posterior is
//! `N(w_N, V_N)` where
//!
//! ```text
//! V_N⁻¹ = (1/g) I + Zᵀ Σ⁻¹ Z
//! w_N   = V_N Zᵀ Σ⁻¹ y
//! ```
//!
//! and `Σ = diag(σ²_1, …, σ²_N)`. Only the Cholesky factor of the precision `V_N⁻¹` is
//! stored; every quantity involving `V_N` goes through triangular solves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::split::seeded_permutation;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::nn::{gaussian_nll, GaussianPrediction, MlpModel};

/// Gaussian posterior over the last-layer weights of one output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrPosterior {
    prior_variance: f64,
    mean_weights: Vec<f64>,
    precision_cholesky: Cholesky,
    latent_dim: usize,
}

/// Sufficient statistics `ZᵀΣ⁻¹Z` and `ZᵀΣ⁻¹y`. They do not depend on `g`, so a grid
/// search builds them once and only changes the diagonal.
#[derive(Debug, Clone)]
pub struct WeightedGram {
    gram: Matrix,
    rhs: Vec<f64>,
}

impl WeightedGram {
    pub fn new(latents: &Matrix, targets: &[f64], noise_variances: &[f64]) -> Result<Self> {
        check_dim("fit_blr targets", latents.rows(), targets.len())?;
        check_dim("fit_blr noise variances", latents.rows(), noise_variances.len())?;
        let h = latents.cols();
        let mut gram = Matrix::zeros(h, h);
        let mut rhs = vec![0.0; h];
        for ((z, &y), &s2) in latents.row_iter().zip(targets).zip(noise_variances) {
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::NonPositiveVariance(s2));
            }
            let inv = 1.0 / s2;
            for a in 0..h {
                let za = z[a] * inv;
                if za == 0.0 {
                    continue;
                }
                rhs[a] += za * y;
                let row = gram.row_mut(a);
                for b in 0..=a {
                    row[b] += za * z[b];
                }
            }
        }
        for a in 0..h {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
        }
        Ok(Self { gram, rhs })
    }

    pub fn posterior(&self, prior_variance: f64) -> Result<BlrPosterior> {
        if !(prior_variance > 0.0) || !prior_variance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "prior variance must be positive, got {prior_variance}"
            )));
        }
        let h = self.rhs.len();
        let mut precision = self.gram.clone();
        for i in 0..h {
            precision[(i, i)] += 1.0 / prior_variance;
        }
        let chol = Cholesky::factorize_with_jitter(&precision)?;
        let mean_weights = chol.solve(&self.rhs);
        Ok(BlrPosterior {
            prior_variance,
            mean_weights,
            precision_cholesky: chol,
            latent_dim: h,
        })
    }
}

/// Fits the posterior for latents `Z` (`N x h`), targets `y` and per-row noise variances.
pub fn fit_blr(
    latents: &Matrix,
    targets: &[f64],
    noise_variances: &[f64],
    prior_variance: f64,
) -> Result<BlrPosterior> {
    WeightedGram::new(latents, targets, noise_variances)?.posterior(prior_variance)
}

impl BlrPosterior {
    #[inline]
    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    #[inline]
    pub fn mean_weights(&self) -> &[f64] {
        &self.mean_weights
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Cholesky factor `L` of the posterior precision, `L Lᵀ = V_N⁻¹`.
    #[inline]
    pub fn precision_cholesky(&self) -> &Cholesky {
        &self.precision_cholesky
    }

    /// Rebuilds a posterior from stored parts.
    pub fn from_parts(prior_variance: f64, mean_weights: Vec<f64>, precision_factor: Matrix) -> Result<Self> {
        let chol = Cholesky::from_factor(precision_factor)?;
        check_dim("posterior mean", chol.dim(), mean_weights.len())?;
        Ok(Self {
            prior_variance,
            latent_dim: mean_weights.len(),
            mean_weights,
            precision_cholesky: chol,
        })
    }

    /// Dense posterior covariance `V_N`.
    pub fn covariance(&self) -> Matrix {
        self.precision_cholesky.inverse()
    }

    pub fn predictive_mean(&self, z: &[f64]) -> f64 {
        dot(z, &self.mean_weights)
    }

    /// `zᵀ V_N z`, computed as `‖L⁻¹z‖²`.
    pub fn epistemic_variance(&self, z: &[f64]) -> f64 {
        self.precision_cholesky.inverse_quadratic_form(z)
    }

    /// One-dimensional posterior predictive `N(zᵀw_N, σ²(x) + zᵀV_N z)`.
    pub fn predict(&self, z: &[f64], aleatoric_variance: f64) -> Result<GaussianPrediction> {
        check_dim("predict_blr latent", self.latent_dim, z.len())?;
        if !(aleatoric_variance > 0.0) {
            return Err(Error::NonPositiveVariance(aleatoric_variance));
        }
        Ok(GaussianPrediction::new(
            vec![self.predictive_mean(z)],
            vec![aleatoric_variance],
            vec![self.epistemic_variance(z)],
        ))
    }

    /// Draws one weight vector `w_N + L⁻ᵀε`, `ε ~ N(0, I)`.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut eps: Vec<f64> = (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.precision_cholesky.solve_upper_in_place(&mut eps);
        eps.iter_mut().zip(&self.mean_weights).for_each(|(e, m)| *e += m);
        eps
    }

    pub fn sample_weights(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_with(&mut rng)).collect()
    }
}

/// Logarithmic grid `10^-4, 10^-3.5, …, 10^2` (13 points).
pub fn default_prior_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub chosen_g: f64,
    pub grid: Vec<f64>,
    pub validation_nll_per_g: Vec<f64>,
}

impl GridSearchResult {
    /// Picks the minimum-NLL grid point, breaking ties toward the smallest `g`.
    pub fn from_scores(grid: Vec<f64>, validation_nll_per_g: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != validation_nll_per_g.len() {
            return Err(Error::InvalidConfig("grid must be non-empty and match scores".into()));
        }
        let mut best = 0;
        for i in 1..grid.len() {
            let (s, b) = (validation_nll_per_g[i], validation_nll_per_g[best]);
            if s < b || (s == b && grid[i] < grid[best]) {
                best = i;
            }
        }
        Ok(Self {
            chosen_g: grid[best],
            grid,
            validation_nll_per_g,
        })
    }
}

/// Network plus one BLR posterior per output dimension. The network's mean head is not
/// used for prediction; the mean is `zᵀw_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepBlr {
    model: MlpModel,
    posteriors: Vec<BlrPosterior>,
    bias_feature: bool,
    grid_search: Option<GridSearchResult>,
}

/// Latents and per-dimension noise variances of a dataset under a fixed network.
struct LatentData {
    latents: Matrix,
    /// `noise[d][i]` is σ²_d(x_i).
    noise: Vec<Vec<f64>>,
}

fn latent_data(model: &MlpModel, x: &Matrix, bias_feature: bool) -> Result<LatentData> {
    check_dim("deep BLR input", model.architecture().input_dim, x.cols())?;
    let h = model.latent_dim();
    let d = model.architecture().output_dim;
    let width = h + usize::from(bias_feature);
    let mut latents = Matrix::zeros(x.rows(), width);
    let mut noise = vec![Vec::with_capacity(x.rows()); d];
    for (i, row) in x.row_iter().enumerate() {
        let (z, pred) = model.forward(row, None)?;
        let dst = latents.row_mut(i);
        dst[..h].copy_from_slice(&z);
        if bias_feature {
            dst[h] = 1.0;
        }
        for (k, s2) in pred.aleatoric_variance.iter().enumerate() {
            noise[k].push(*s2);
        }
    }
    Ok(LatentData { latents, noise })
}

fn grams(data: &LatentData, y: &Matrix) -> Result<Vec<WeightedGram>> {
    check_dim("deep BLR targets", data.latents.rows(), y.rows())?;
    check_dim("deep BLR target dims", data.noise.len(), y.cols())?;
    (0..y.cols())
        .map(|d| WeightedGram::new(&data.latents, &y.column(d), &data.noise[d]))
        .collect()
}

/// Fits one posterior per output dimension on the network's latents, using the
/// network's variance head as the known noise.
pub fn fit_deep_blr(
    model: &MlpModel,
    x: &Matrix,
    y: &Matrix,
    prior_variance: f64,
    bias_feature: bool,
) -> Result<DeepBlr> {
    let data = latent_data(model, x, bias_feature)?;
    let posteriors = grams(&data, y)?
        .iter()
        .map(|g| g.posterior(prior_variance))
        .collect::<Result<_>>()?;
    Ok(DeepBlr {
        model: model.clone(),
        posteriors,
        bias_feature,
        grid_search: None,
    })
}

/// Chooses `g` from `grid` by validation NLL. The network is reused for every grid
/// point; a failed fit scores `+∞`.
pub fn select_prior_variance(
    model: &MlpModel,
    train_x: &Matrix,
    train_y: &Matrix,
    val_x: &Matrix,
    val_y: &Matrix,
    grid: &[f64],
    bias_feature: bool,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("prior variance grid is empty".into()));
    }
    if val_x.rows() == 0 {
        return Err(Error::InvalidConfig("validation set is empty".into()));
    }
    let train = latent_data(model, train_x, bias_feature)?;
    let val = latent_data(model, val_x, bias_feature)?;
    check_dim("validation targets", val_x.rows(), val_y.rows())?;
    let grams = grams(&train, train_y)?;
    let scores = grid
        .iter()
        .map(|&g| validation_nll(&grams, &val, val_y, g).unwrap_or(f64::INFINITY))
        .collect();
    GridSearchResult::from_scores(grid.to_vec(), scores)
}

fn validation_nll(grams: &[WeightedGram], val: &LatentData, val_y: &Matrix, g: f64) -> Result<f64> {
    let posteriors: Vec<BlrPosterior> = grams.iter().map(|w| w.posterior(g)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for (i, z) in val.latents.row_iter().enumerate() {
        for (d, post) in posteriors.iter().enumerate() {
            let pred = post.predict(z, val.noise[d][i])?;
            total += gaussian_nll(&pred, &[val_y[(i, d)]])?;
        }
    }
    let nll = total / val.latents.rows() as f64;
    if nll.is_finite() {
        Ok(nll)
    } else {
        Err(Error::NonPositiveVariance(nll))
    }
}

/// Selects `g` on a seeded split of the training data (holding out `validation_fraction`),
/// then refits on all of it with the chosen value.
pub fn select_and_fit(
    model: &MlpModel,
    x: &Matrix,
    y: &Matrix,
    grid: &[f64],
    validation_fraction: f64,
    seed: u64,
    bias_feature: bool,
) -> Result<DeepBlr> {
    let n = x.rows();
    let n_val = ((validation_fraction * n as f64) + 1e-9).floor() as usize;
    let n_val = n_val.clamp(1, n.saturating_sub(1).max(1));
    let perm = seeded_permutation(n, seed);
    let (val_idx, train_idx) = perm.split_at(n_val);
    let search = select_prior_variance(
        model,
        &x.select_rows(train_idx),
        &y.select_rows(train_idx),
        &x.select_rows(val_idx),
        &y.select_rows(val_idx),
        grid,
        bias_feature,
    )?;
    let mut fitted = fit_deep_blr(model, x, y, search.chosen_g, bias_feature)?;
    fitted.grid_search = Some(search);
    Ok(fitted)
}

impl DeepBlr {
    /// Assembles a Deep BLR model from a network and per-dimension posteriors.
    pub fn from_parts(model: MlpModel, posteriors: Vec<BlrPosterior>, bias_feature: bool) -> Result<Self> {
        check_dim("posterior count", model.architecture().output_dim, posteriors.len())?;
        let width = model.latent_dim() + usize::from(bias_feature);
        for p in &posteriors {
            check_dim("posterior latent dim", width, p.latent_dim())?;
        }
        Ok(Self {
            model,
            posteriors,
            bias_feature,
            grid_search: None,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn posteriors(&self) -> &[BlrPosterior] {
        &self.posteriors
    }

    pub fn bias_feature(&self) -> bool {
        self.bias_feature
    }

    pub fn grid_search(&self) -> Option<&GridSearchResult> {
        self.grid_search.as_ref()
    }

    pub fn prior_variance(&self) -> f64 {
        self.posteriors.first().map_or(f64::NAN, |p| p.prior_variance())
    }

    /// BLR feature vector for `x`: the latent, plus a trailing 1 with the bias feature.
    pub fn features(&self, x: &[f64]) -> Result<(Vec<f64>, GaussianPrediction)> {
        let (mut z, pred) = self.model.forward(x, None)?;
        if self.bias_feature {
            z.push(1.0);
        }
        Ok((z, pred))
    }

    pub fn predict(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let (z, nn) = self.features(x)?;
        let d = self.posteriors.len();
        let mut mean = Vec::with_capacity(d);
        let mut aleatoric = Vec::with_capacity(d);
        let mut epistemic = Vec::with_capacity(d);
        for (post, &s2) in self.posteriors.iter().zip(&nn.aleatoric_variance) {
            mean.push(post.predictive_mean(&z));
            aleatoric.push(s2);
            epistemic.push(post.epistemic_variance(&z));
        }
        Ok(GaussianPrediction::new(mean, aleatoric, epistemic))
    }
}
