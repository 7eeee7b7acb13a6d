//! One-hidden-layer ReLU network with a Gaussian output head.
//!
//! For an input `x` the network computes
//!
//! - latent `z = ReLU(W₁x + b₁)` (optionally inverted-dropout masked),
//! - mean `μ = W_μ z + b_μ`,
//! - variance `σ² = min(softplus(W_σ z + b_σ) + 1e-6, 1e6)`,
//!
//! one mean/variance pair per output dimension. Training minimizes the Gaussian
//! negative log-likelihood summed over output dimensions and averaged over the batch,
//! using hand-derived gradients and Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};

/// Lower bound applied to any predictive variance before it enters a logarithm.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Offset added to the softplus output of the variance head.
pub const MIN_ALEATORIC_VARIANCE: f64 = 1e-6;
/// Upper clamp of the variance head.
pub const MAX_ALEATORIC_VARIANCE: f64 = 1e6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub output_dim: usize,
    pub dropout_rate: f64,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_units: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_units,
            output_dim,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_units == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "architecture dims must be positive, got {}x{}x{}",
                self.input_dim, self.hidden_units, self.output_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Predicted Gaussian per output dimension, with the variance split into its
/// aleatoric (noise head) and epistemic (weight posterior) parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub aleatoric_variance: Vec<f64>,
    pub epistemic_variance: Vec<f64>,
}

impl GaussianPrediction {
    /// Builds a prediction with `variance = aleatoric + epistemic`. Should the sum fall
    /// below [`VARIANCE_FLOOR`], the aleatoric part is raised so that the identity holds.
    pub fn new(mean: Vec<f64>, aleatoric: Vec<f64>, epistemic: Vec<f64>) -> Self {
        debug_assert_eq!(mean.len(), aleatoric.len());
        debug_assert_eq!(mean.len(), epistemic.len());
        let mut aleatoric = aleatoric;
        let variance = aleatoric
            .iter_mut()
            .zip(&epistemic)
            .map(|(a, &e)| {
                if *a + e < VARIANCE_FLOOR {
                    *a = VARIANCE_FLOOR - e;
                }
                *a + e
            })
            .collect();
        Self {
            mean,
            variance,
            aleatoric_variance: aleatoric,
            epistemic_variance: epistemic,
        }
    }

    pub fn aleatoric_only(mean: Vec<f64>, aleatoric: Vec<f64>) -> Self {
        let zeros = vec![0.0; mean.len()];
        Self::new(mean, aleatoric, zeros)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Negative log-likelihood `Σ_d ½ ln(2π σ²_d) + (y_d − μ_d)² / (2σ²_d)`.
pub fn gaussian_nll(prediction: &GaussianPrediction, y: &[f64]) -> Result<f64> {
    check_dim("gaussian_nll", prediction.dim(), y.len())?;
    let mut nll = 0.0;
    for ((&mu, &var), &yd) in prediction.mean.iter().zip(&prediction.variance).zip(y) {
        if !(var > 0.0) {
            return Err(Error::NonPositiveVariance(var));
        }
        let r = yd - mu;
        nll += HALF_LN_2PI + 0.5 * var.ln() + r * r / (2.0 * var);
    }
    Ok(nll)
}

/// Network parameters. The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// `hidden_units x input_dim`
    pub first_layer_weights: Matrix,
    pub first_layer_bias: Vec<f64>,
    /// `output_dim x hidden_units`
    pub mean_head_weights: Matrix,
    pub mean_head_bias: Vec<f64>,
    /// `output_dim x hidden_units`
    pub variance_head_weights: Matrix,
    pub variance_head_bias: Vec<f64>,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let (p, h, d) = (arch.input_dim, arch.hidden_units, arch.output_dim);
        Self {
            first_layer_weights: Matrix::zeros(h, p),
            first_layer_bias: vec![0.0; h],
            mean_head_weights: Matrix::zeros(d, h),
            mean_head_bias: vec![0.0; d],
            variance_head_weights: Matrix::zeros(d, h),
            variance_head_bias: vec![0.0; d],
        }
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.first_layer_weights.as_slice(),
            &self.first_layer_bias,
            self.mean_head_weights.as_slice(),
            &self.mean_head_bias,
            self.variance_head_weights.as_slice(),
            &self.variance_head_bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.first_layer_weights.as_mut_slice(),
            &mut self.first_layer_bias,
            self.mean_head_weights.as_mut_slice(),
            &mut self.mean_head_bias,
            self.variance_head_weights.as_mut_slice(),
            &mut self.variance_head_bias,
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened copy in the order of [`Parameters::slices`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn matches(&self, arch: &MlpArchitecture) -> bool {
        let z = Self::zeros(arch);
        self.slices()
            .iter()
            .zip(z.slices())
            .all(|(a, b)| a.len() == b.len())
            && self.first_layer_weights.cols() == arch.input_dim
    }

    fn scale(&mut self, c: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= c);
        }
    }
}

/// A trained (or freshly initialized) network. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    architecture: MlpArchitecture,
    params: Parameters,
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Activations {
    pre: Vec<f64>,
    latent: Vec<f64>,
    mean: Vec<f64>,
    raw_variance: Vec<f64>,
    variance: Vec<f64>,
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn bounded_variance(raw: f64) -> f64 {
    (softplus(raw) + MIN_ALEATORIC_VARIANCE).min(MAX_ALEATORIC_VARIANCE)
}

/// Uniform fan-in initialization: every weight in `[−1/√fan_in, 1/√fan_in]`, biases zero.
pub fn init_mlp(architecture: MlpArchitecture, seed: u64) -> Result<MlpModel> {
    architecture.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::zeros(&architecture);
    let a1 = 1.0 / (architecture.input_dim as f64).sqrt();
    let a2 = 1.0 / (architecture.hidden_units as f64).sqrt();
    let fill = |m: &mut [f64], a: f64, rng: &mut ChaCha8Rng| {
        for w in m {
            *w = rng.random_range(-a..=a);
        }
    };
    fill(params.first_layer_weights.as_mut_slice(), a1, &mut rng);
    fill(params.mean_head_weights.as_mut_slice(), a2, &mut rng);
    fill(params.variance_head_weights.as_mut_slice(), a2, &mut rng);
    Ok(MlpModel {
        architecture,
        params,
    })
}

impl MlpModel {
    /// Assembles a model from explicit parameters.
    pub fn from_parameters(architecture: MlpArchitecture, params: Parameters) -> Result<Self> {
        architecture.validate()?;
        if !params.matches(&architecture) {
            return Err(Error::InvalidConfig(
                "parameter shapes do not match architecture".into(),
            ));
        }
        if !params.is_finite() {
            return Err(Error::InvalidConfig("non-finite model parameter".into()));
        }
        Ok(Self {
            architecture,
            params,
        })
    }

    #[inline]
    pub fn architecture(&self) -> &MlpArchitecture {
        &self.architecture
    }

    #[inline]
    pub fn parameters(&self) -> &Parameters {
        &self.params
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.architecture.hidden_units
    }

    /// Runs the network on one input. With a mask, hidden unit `j` is kept when
    /// `mask[j]` is true and scaled by `1/(1 − dropout_rate)`.
    pub fn forward(
        &self,
        x: &[f64],
        dropout_mask: Option<&[bool]>,
    ) -> Result<(Vec<f64>, GaussianPrediction)> {
        self.check_input(x, dropout_mask)?;
        let act = self.activations(x, dropout_mask);
        let pred = GaussianPrediction::aleatoric_only(act.mean, act.variance);
        Ok((act.latent, pred))
    }

    /// Allocation-free forward pass for hot loops. Shapes are the caller's responsibility.
    pub fn forward_into(
        &self,
        x: &[f64],
        latent: &mut [f64],
        mean: &mut [f64],
        variance: &mut [f64],
    ) {
        let p = &self.params;
        for (j, z) in latent.iter_mut().enumerate() {
            let s = dot(p.first_layer_weights.row(j), x) + p.first_layer_bias[j];
            *z = s.max(0.0);
        }
        for d in 0..self.architecture.output_dim {
            mean[d] = dot(p.mean_head_weights.row(d), latent) + p.mean_head_bias[d];
            let raw = dot(p.variance_head_weights.row(d), latent) + p.variance_head_bias[d];
            variance[d] = bounded_variance(raw);
        }
    }

    /// Latent representation only, without dropout.
    pub fn latent(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, None)?.0)
    }

    /// Latents of every row of `x` (no dropout), as an `N x hidden_units` matrix.
    pub fn latents(&self, x: &Matrix) -> Result<Matrix> {
        check_dim("MlpModel::latents", self.architecture.input_dim, x.cols())?;
        let h = self.architecture.hidden_units;
        let mut out = Matrix::zeros(x.rows(), h);
        let p = &self.params;
        for (i, row) in x.row_iter().enumerate() {
            let dst = out.row_mut(i);
            for (j, z) in dst.iter_mut().enumerate() {
                *z = (dot(p.first_layer_weights.row(j), row) + p.first_layer_bias[j]).max(0.0);
            }
        }
        Ok(out)
    }

    /// Predictions for every row of `x` without dropout.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<GaussianPrediction>> {
        x.row_iter()
            .map(|row| self.forward(row, None).map(|(_, p)| p))
            .collect()
    }

    fn check_input(&self, x: &[f64], mask: Option<&[bool]>) -> Result<()> {
        check_dim("MlpModel::forward input", self.architecture.input_dim, x.len())?;
        if let Some(m) = mask {
            check_dim("dropout mask", self.architecture.hidden_units, m.len())?;
        }
        Ok(())
    }

    fn activations(&self, x: &[f64], mask: Option<&[bool]>) -> Activations {
        let p = &self.params;
        let arch = &self.architecture;
        let keep_scale = 1.0 / (1.0 - arch.dropout_rate);
        let mut pre = Vec::with_capacity(arch.hidden_units);
        let mut latent = Vec::with_capacity(arch.hidden_units);
        for j in 0..arch.hidden_units {
            let s = dot(p.first_layer_weights.row(j), x) + p.first_layer_bias[j];
            pre.push(s);
            let mut z = s.max(0.0);
            if let Some(m) = mask {
                z = if m[j] { z * keep_scale } else { 0.0 };
            }
            latent.push(z);
        }
        let mut mean = Vec::with_capacity(arch.output_dim);
        let mut raw_variance = Vec::with_capacity(arch.output_dim);
        let mut variance = Vec::with_capacity(arch.output_dim);
        for d in 0..arch.output_dim {
            mean.push(dot(p.mean_head_weights.row(d), &latent) + p.mean_head_bias[d]);
            let raw = dot(p.variance_head_weights.row(d), &latent) + p.variance_head_bias[d];
            raw_variance.push(raw);
            variance.push(bounded_variance(raw));
        }
        Activations {
            pre,
            latent,
            mean,
            raw_variance,
            variance,
        }
    }

    /// Mean-over-batch NLL and its exact gradient with respect to every parameter.
    ///
    /// `dropout_masks`, if given, holds one hidden-layer mask per batch row.
    pub fn loss_and_gradients(
        &self,
        batch_x: &Matrix,
        batch_y: &Matrix,
        dropout_masks: Option<&[Vec<bool>]>,
    ) -> Result<(f64, Gradients)> {
        let rows: Vec<usize> = (0..batch_x.rows()).collect();
        self.loss_and_gradients_rows(batch_x, batch_y, &rows, dropout_masks)
    }

    fn loss_and_gradients_rows(
        &self,
        x: &Matrix,
        y: &Matrix,
        rows: &[usize],
        dropout_masks: Option<&[Vec<bool>]>,
    ) -> Result<(f64, Gradients)> {
        let arch = &self.architecture;
        if rows.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        check_dim("backward input", arch.input_dim, x.cols())?;
        check_dim("backward target", arch.output_dim, y.cols())?;
        check_dim("backward rows", x.rows(), y.rows())?;
        if let Some(m) = dropout_masks {
            check_dim("dropout masks", rows.len(), m.len())?;
        }
        let p = &self.params;
        let keep_scale = 1.0 / (1.0 - arch.dropout_rate);
        let mut g = Parameters::zeros(arch);
        let mut loss = 0.0;
        let mut d_latent = vec![0.0; arch.hidden_units];
        let mut d_mean = vec![0.0; arch.output_dim];
        let mut d_raw = vec![0.0; arch.output_dim];

        for (b, &i) in rows.iter().enumerate() {
            let xi = x.row(i);
            let yi = y.row(i);
            let mask = match dropout_masks {
                Some(m) => {
                    check_dim("dropout mask", arch.hidden_units, m[b].len())?;
                    Some(m[b].as_slice())
                }
                None => None,
            };
            let act = self.activations(xi, mask);

            for d in 0..arch.output_dim {
                let var = act.variance[d];
                let r = act.mean[d] - yi[d];
                loss += HALF_LN_2PI + 0.5 * var.ln() + r * r / (2.0 * var);
                d_mean[d] = r / var;
                let d_var = 0.5 / var - r * r / (2.0 * var * var);
                let unclamped =
                    softplus(act.raw_variance[d]) + MIN_ALEATORIC_VARIANCE < MAX_ALEATORIC_VARIANCE;
                d_raw[d] = if unclamped {
                    d_var * sigmoid(act.raw_variance[d])
                } else {
                    0.0
                };
                g.mean_head_bias[d] += d_mean[d];
                g.variance_head_bias[d] += d_raw[d];
                let gm = g.mean_head_weights.row_mut(d);
                for (gw, &z) in gm.iter_mut().zip(&act.latent) {
                    *gw += d_mean[d] * z;
                }
                let gv = g.variance_head_weights.row_mut(d);
                for (gw, &z) in gv.iter_mut().zip(&act.latent) {
                    *gw += d_raw[d] * z;
                }
            }

            for j in 0..arch.hidden_units {
                let mut dz = 0.0;
                for d in 0..arch.output_dim {
                    dz += d_mean[d] * p.mean_head_weights[(d, j)]
                        + d_raw[d] * p.variance_head_weights[(d, j)];
                }
                if act.pre[j] <= 0.0 {
                    dz = 0.0;
                } else if let Some(m) = mask {
                    dz = if m[j] { dz * keep_scale } else { 0.0 };
                }
                d_latent[j] = dz;
            }
            for (j, &dz) in d_latent.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                g.first_layer_bias[j] += dz;
                let gw = g.first_layer_weights.row_mut(j);
                for (w, &xk) in gw.iter_mut().zip(xi) {
                    *w += dz * xk;
                }
            }
        }

        let inv_n = 1.0 / rows.len() as f64;
        g.scale(inv_n);
        Ok((loss * inv_n, g))
    }

    /// Mean NLL over all rows, without dropout.
    pub fn mean_nll(&self, x: &Matrix, y: &Matrix) -> Result<f64> {
        check_dim("mean_nll rows", x.rows(), y.rows())?;
        let mut total = 0.0;
        for (xi, yi) in x.row_iter().zip(y.row_iter()) {
            let (_, pred) = self.forward(xi, None)?;
            total += gaussian_nll(&pred, yi)?;
        }
        Ok(total / x.rows().max(1) as f64)
    }
}

/// Exact gradients of the mean-over-batch NLL.
pub fn backward(
    model: &MlpModel,
    batch_x: &Matrix,
    batch_y: &Matrix,
    dropout_masks: Option<&[Vec<bool>]>,
) -> Result<Gradients> {
    Ok(model.loss_and_gradients(batch_x, batch_y, dropout_masks)?.1)
}

/// Draws a hidden-layer dropout mask; `true` means the unit is kept.
pub fn sample_dropout_mask<R: Rng + ?Sized>(hidden_units: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    (0..hidden_units).map(|_| rng.random::<f64>() >= rate).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.adam_beta1 > 0.0
            && self.adam_beta1 < 1.0
            && self.adam_beta2 > 0.0
            && self.adam_beta2 < 1.0
            && self.adam_epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid training config {self:?}")))
        }
    }
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Parameters,
    second_moment: Parameters,
    step: u64,
}

impl AdamState {
    pub fn new(arch: &MlpArchitecture) -> Self {
        Self {
            first_moment: Parameters::zeros(arch),
            second_moment: Parameters::zeros(arch),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut Parameters, grads: &Gradients, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = config.learning_rate;
        let eps = config.adam_epsilon;
        let ms = self.first_moment.slices_mut();
        let vs = self.second_moment.slices_mut();
        let ps = params.slices_mut();
        let gs = grads.slices();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    params: &Parameters,
    state: &AdamState,
    grads: &Gradients,
    config: &TrainConfig,
) -> (Parameters, AdamState) {
    let mut p = params.clone();
    let mut s = state.clone();
    s.step(&mut p, grads, config);
    (p, s)
}

/// Trains a freshly initialized network with seeded-shuffle minibatch Adam.
///
/// Epoch `e` shuffles with seed `config.seed ^ e`; the last partial batch is kept.
/// When the architecture has a positive dropout rate, one mask per example per step is
/// drawn from a separate stream of the same seed.
pub fn train(x: &Matrix, y: &Matrix, architecture: MlpArchitecture, config: &TrainConfig) -> Result<MlpModel> {
    architecture.validate()?;
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
    }
    check_dim("train rows", x.rows(), y.rows())?;
    check_dim("train input", architecture.input_dim, x.cols())?;
    check_dim("train target", architecture.output_dim, y.cols())?;

    let mut model = init_mlp(architecture, config.seed)?;
    let mut adam = AdamState::new(&architecture);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(config.seed);
    mask_rng.set_stream(1);
    let use_dropout = architecture.dropout_rate > 0.0;
    let mut order: Vec<usize> = (0..x.rows()).collect();

    for epoch in 0..config.epochs {
        order.sort_unstable();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ epoch as u64);
        order.shuffle(&mut shuffle_rng);
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let masks: Option<Vec<Vec<bool>>> = use_dropout.then(|| {
                rows.iter()
                    .map(|_| {
                        sample_dropout_mask(
                            architecture.hidden_units,
                            architecture.dropout_rate,
                            &mut mask_rng,
                        )
                    })
                    .collect()
            });
            let (loss, grads) = model.loss_and_gradients_rows(x, y, rows, masks.as_deref())?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    value: loss,
                });
            }
            adam.step(&mut model.params, &grads, config);
        }
    }
    if !model.params.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            batch: 0,
            value: f64::NAN,
        });
    }
    Ok(model)
}
