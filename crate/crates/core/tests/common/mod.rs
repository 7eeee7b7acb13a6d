//! Independent oracles shared by the property tests and the acceptance report.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deepblr::data::{denormalized_nll, Dataset, NormalizationStats};
use deepblr::nn::Parameters;
use deepblr::{fit_blr, gaussian_nll, init_mlp, mixture_moments, mixture_nll, BlrPosterior, GaussianPrediction, Matrix, MixturePrediction, MlpArchitecture, MlpModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct BlrInstance {
    pub z: Matrix,
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    pub g: f64,
}

/// Random problem with `N ≤ 30`, `h ≤ 8`.
pub fn blr_instance(seed: u64) -> BlrInstance {
    let mut r = rng(seed);
    let n = r.random_range(0..=30);
    let h = r.random_range(1..=8);
    let z = Matrix::from_vec(n, h, (0..n * h).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    let y = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let noise = (0..n).map(|_| r.random_range(0.05..2.0)).collect();
    let g = 10f64.powf(r.random_range(-2.0..2.0));
    BlrInstance { z, y, noise, g }
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `(w_N, V_N)` by explicitly inverting `(1/g)I + ZᵀΣ⁻¹Z`.
pub fn dense_posterior(inst: &BlrInstance) -> (DVector<f64>, DMatrix<f64>) {
    let z = to_na(&inst.z);
    let h = z.ncols();
    let sinv = DMatrix::from_diagonal(&DVector::from_iterator(inst.noise.len(), inst.noise.iter().map(|s| 1.0 / s)));
    let a = DMatrix::identity(h, h) / inst.g + z.transpose() * &sinv * &z;
    let v = a.try_inverse().expect("precision is invertible");
    let w = &v * z.transpose() * sinv * DVector::from_column_slice(&inst.y);
    (w, v)
}

fn covariance(p: &BlrPosterior) -> DMatrix<f64> {
    to_na(&p.covariance())
}

/// Max absolute difference of `w_N` and `V_N` between the factorized fit and the dense oracle.
pub fn oracle_equivalence_error(seed: u64) -> f64 {
    let inst = blr_instance(seed);
    let post = fit_blr(&inst.z, &inst.y, &inst.noise, inst.g).unwrap();
    let (w, v) = dense_posterior(&inst);
    let dw = post.mean_weights().iter().zip(w.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dv = (covariance(&post) - v).abs().max();
    dw.max(dv)
}

/// Largest increase of `zᵀV_N z` when rows are added one at a time (≤ 0 means monotone).
pub fn epistemic_increase(seed: u64) -> f64 {
    let inst = blr_instance(seed);
    let mut r = rng(seed ^ 0xABCD);
    let h = inst.z.cols();
    let queries: Vec<Vec<f64>> = (0..5).map(|_| (0..h).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut prev: Option<Vec<f64>> = None;
    for n in 0..=inst.z.rows() {
        let rows: Vec<usize> = (0..n).collect();
        let post = fit_blr(&inst.z.select_rows(&rows), &inst.y[..n], &inst.noise[..n], inst.g).unwrap();
        let cur: Vec<f64> = queries.iter().map(|q| post.epistemic_variance(q)).collect();
        if let Some(p) = &prev {
            for (a, b) in cur.iter().zip(p) {
                worst = worst.max(a - b);
            }
        }
        prev = Some(cur);
    }
    worst
}

/// Difference between duplicating every row and halving every noise variance.
pub fn duplicate_row_error(seed: u64) -> f64 {
    let inst = blr_instance(seed);
    let n = inst.z.rows();
    let twice: Vec<usize> = (0..n).chain(0..n).collect();
    let y2: Vec<f64> = twice.iter().map(|&i| inst.y[i]).collect();
    let s2: Vec<f64> = twice.iter().map(|&i| inst.noise[i]).collect();
    let dup = fit_blr(&inst.z.select_rows(&twice), &y2, &s2, inst.g).unwrap();
    let halved: Vec<f64> = inst.noise.iter().map(|s| s / 2.0).collect();
    let half = fit_blr(&inst.z, &inst.y, &halved, inst.g).unwrap();
    let dw = dup.mean_weights().iter().zip(half.mean_weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    dw.max((covariance(&dup) - covariance(&half)).abs().max())
}

/// Constant noise `s` against the textbook form `w = (ZᵀZ + (s/g)I)⁻¹Zᵀy`, `V = s(ZᵀZ + (s/g)I)⁻¹`.
pub fn homoscedastic_error(seed: u64) -> f64 {
    let mut inst = blr_instance(seed);
    let s = inst.noise.first().copied().unwrap_or(0.7);
    inst.noise.iter_mut().for_each(|v| *v = s);
    let post = fit_blr(&inst.z, &inst.y, &inst.noise, inst.g).unwrap();
    let z = to_na(&inst.z);
    let h = z.ncols();
    let m = (z.transpose() * &z + DMatrix::identity(h, h) * (s / inst.g)).try_inverse().unwrap();
    let w = &m * z.transpose() * DVector::from_column_slice(&inst.y);
    let v = m * s;
    let dw = post.mean_weights().iter().zip(w.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    dw.max((covariance(&post) - v).abs().max())
}

/// Distance of an `N = 0` posterior from the prior.
pub fn prior_recovery_error(h: usize, g: f64) -> f64 {
    let post = fit_blr(&Matrix::zeros(0, h), &[], &[], g).unwrap();
    let dw = post.mean_weights().iter().map(|v| v.abs()).fold(0.0, f64::max);
    dw.max((covariance(&post) - DMatrix::identity(h, h) * g).abs().max())
}

pub fn random_network(seed: u64) -> (MlpModel, Matrix, Matrix) {
    let mut r = rng(seed);
    let p = r.random_range(1..=4);
    let h = r.random_range(2..=8);
    let d = r.random_range(1..=2);
    let model = init_mlp(MlpArchitecture::new(p, h, d), seed).unwrap();
    // Move the biases off zero so that every parameter group is exercised.
    let mut params: Parameters = model.parameters().clone();
    params.first_layer_bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
    params.variance_head_bias.iter_mut().for_each(|b| *b = r.random_range(-1.0..1.0));
    let model = MlpModel::from_parameters(*model.architecture(), params).unwrap();
    let n = r.random_range(1..=8);
    let x = Matrix::from_vec(n, p, (0..n * p).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    let y = Matrix::from_vec(n, d, (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    (model, x, y)
}

/// Max relative error between analytic gradients and central differences (step 1e-5),
/// each relative to `max(|g|, 1e-8)`.
pub fn gradient_check(seed: u64) -> f64 {
    let (model, x, y) = random_network(seed);
    let analytic = model.loss_and_gradients(&x, &y, None).unwrap().1.to_flat();
    let h = 1e-5;
    let loss_at = |k: usize, delta: f64| {
        let mut p = model.parameters().clone();
        let mut idx = k;
        for s in p.slices_mut() {
            if idx < s.len() {
                s[idx] += delta;
                break;
            }
            idx -= s.len();
        }
        MlpModel::from_parameters(*model.architecture(), p).unwrap().loss_and_gradients(&x, &y, None).unwrap().0
    };
    (0..analytic.len())
        .map(|k| {
            let numeric = (loss_at(k, h) - loss_at(k, -h)) / (2.0 * h);
            (analytic[k] - numeric).abs() / analytic[k].abs().max(1e-8)
        })
        .fold(0.0, f64::max)
}

fn random_component(r: &mut ChaCha8Rng, d: usize) -> GaussianPrediction {
    GaussianPrediction::aleatoric_only(
        (0..d).map(|_| r.random_range(-3.0..3.0)).collect(),
        (0..d).map(|_| r.random_range(0.05..4.0)).collect(),
    )
}

/// Mixture of `M` copies of one Gaussian against the Gaussian itself.
pub fn identical_components_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let m = r.random_range(1..=7);
    let c = random_component(&mut r, d);
    let y: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
    let mix = MixturePrediction::new(vec![c.clone(); m]).unwrap();
    (mixture_nll(&mix, &y).unwrap() - gaussian_nll(&c, &y).unwrap()).abs()
}

/// NLL change under a random reordering of the components.
pub fn permutation_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let m = r.random_range(2..=7);
    let comps: Vec<GaussianPrediction> = (0..m).map(|_| random_component(&mut r, d)).collect();
    let y: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
    let mut shuffled = comps.clone();
    for i in (1..m).rev() {
        shuffled.swap(i, r.random_range(0..=i));
    }
    let a = mixture_nll(&MixturePrediction::new(comps).unwrap(), &y).unwrap();
    let b = mixture_nll(&MixturePrediction::new(shuffled).unwrap(), &y).unwrap();
    (a - b).abs()
}

/// Moment-matched variance against `E[σ²] + E[μ²] − E[μ]²` computed from raw sums.
pub fn total_variance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let m = r.random_range(1..=7);
    let comps: Vec<GaussianPrediction> = (0..m).map(|_| random_component(&mut r, d)).collect();
    let mix = MixturePrediction::new(comps.clone()).unwrap();
    let (mean, var) = mixture_moments(&mix);
    let mf = m as f64;
    (0..d)
        .map(|k| {
            let e_mu: f64 = comps.iter().map(|c| c.mean[k]).sum::<f64>() / mf;
            let e_var: f64 = comps.iter().map(|c| c.variance[k]).sum::<f64>() / mf;
            let e_mu2: f64 = comps.iter().map(|c| c.mean[k] * c.mean[k]).sum::<f64>() / mf;
            (mean[k] - e_mu).abs().max((var[k] - (e_var + e_mu2 - e_mu * e_mu)).abs())
        })
        .fold(0.0, f64::max)
}

/// `NLL_orig − NLL_norm − Σ ln std` for a random prediction mapped to original units.
pub fn denormalized_nll_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let n = 6;
    let ys: Vec<f64> = (0..n * d).map(|_| r.random_range(-50.0..50.0) * r.random_range(0.1..3.0)).collect();
    let targets = Matrix::from_vec(n, d, ys).unwrap();
    let ds = Dataset::from_matrices("t", Matrix::zeros(n, 1), targets.clone()).unwrap();
    let stats = NormalizationStats::fit(&ds);
    let norm = stats.normalize_targets(&targets).unwrap();
    let pred = random_component(&mut r, d);
    let row = norm.row(0);
    let nll_norm = gaussian_nll(&pred, row).unwrap();
    let orig = GaussianPrediction::aleatoric_only(
        (0..d).map(|k| stats.denormalize_target_mean(k, pred.mean[k])).collect(),
        (0..d).map(|k| pred.variance[k] * stats.target_stds[k].powi(2)).collect(),
    );
    let nll_orig = gaussian_nll(&orig, targets.row(0)).unwrap();
    let direct = (nll_orig - nll_norm) - stats.target_stds.iter().map(|s| s.ln()).sum::<f64>();
    let via_helper = denormalized_nll(nll_norm, &stats.target_stds) - nll_orig;
    direct.abs().max(via_helper.abs())
}
