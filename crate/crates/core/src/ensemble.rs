//! Ensembles of networks or Deep BLR models, the MC-dropout baseline, and the uniform
//! Gaussian mixture they predict.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blr::{fit_deep_blr, select_and_fit, DeepBlr};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{self, sample_dropout_mask, GaussianPrediction, MlpArchitecture, MlpModel, TrainConfig, VARIANCE_FLOOR};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Uniformly weighted mixture of Gaussian predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrediction {
    components: Vec<GaussianPrediction>,
}

impl MixturePrediction {
    pub fn new(components: Vec<GaussianPrediction>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidConfig("mixture needs at least one component".into()))?;
        let d = first.dim();
        for c in &components {
            check_dim("mixture component dim", d, c.dim())?;
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GaussianPrediction] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Mean of the component aleatoric variances, per dimension.
    pub fn mean_aleatoric_variance(&self) -> Vec<f64> {
        let m = self.len() as f64;
        (0..self.dim())
            .map(|d| self.components.iter().map(|c| c.aleatoric_variance[d]).sum::<f64>() / m)
            .collect()
    }
}

/// `−ln[(1/M) Σ_m N(y | μ_m, σ²_m)]` per dimension via log-sum-exp, summed over dimensions.
pub fn mixture_nll(mixture: &MixturePrediction, y: &[f64]) -> Result<f64> {
    check_dim("mixture_nll", mixture.dim(), y.len())?;
    let ln_m = (mixture.len() as f64).ln();
    let mut logs = vec![0.0; mixture.len()];
    let mut nll = 0.0;
    for (d, &yd) in y.iter().enumerate() {
        for (l, c) in logs.iter_mut().zip(mixture.components()) {
            let var = c.variance[d].max(VARIANCE_FLOOR);
            let r = yd - c.mean[d];
            *l = -0.5 * (LN_2PI + var.ln()) - r * r / (2.0 * var);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        nll -= max + sum.ln() - ln_m;
    }
    Ok(nll)
}

/// Moment-matched mean and variance (law of total variance).
pub fn mixture_moments(mixture: &MixturePrediction) -> (Vec<f64>, Vec<f64>) {
    let m = mixture.len() as f64;
    let d = mixture.dim();
    let mut mean = vec![0.0; d];
    for c in mixture.components() {
        for (acc, mu) in mean.iter_mut().zip(&c.mean) {
            *acc += mu / m;
        }
    }
    // E[σ²] + Var[μ]; algebraically equal to E[σ² + μ²] − mean² but free of cancellation.
    let variance = (0..d)
        .map(|k| {
            mixture
                .components()
                .iter()
                .map(|c| c.variance[k] + (c.mean[k] - mean[k]).powi(2))
                .sum::<f64>()
                / m
        })
        .collect();
    (mean, variance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    SingleNn,
    NnEnsemble,
    McDropout,
    SingleBlr,
    BlrEnsemble,
}

impl EnsembleKind {
    pub fn uses_blr(self) -> bool {
        matches!(self, Self::SingleBlr | Self::BlrEnsemble)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SingleNn => "single_nn",
            Self::NnEnsemble => "nn_ensemble",
            Self::McDropout => "mc_dropout",
            Self::SingleBlr => "single_blr",
            Self::BlrEnsemble => "blr_ensemble",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "single_nn" => Self::SingleNn,
            "nn_ensemble" => Self::NnEnsemble,
            "mc_dropout" => Self::McDropout,
            "single_blr" | "blr" => Self::SingleBlr,
            "blr_ensemble" => Self::BlrEnsemble,
            other => return Err(Error::InvalidConfig(format!("unknown ensemble kind {other:?}"))),
        })
    }
}

/// How BLR members get their prior variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorVariance {
    Fixed(f64),
    GridSearch {
        grid: Vec<f64>,
        validation_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub prior_variance: PriorVariance,
    pub bias_feature: bool,
    /// Hidden-layer dropout rate for the MC-dropout kind; ignored otherwise.
    pub dropout_rate: f64,
    /// Number of dropout masks sampled at prediction time.
    pub mc_samples: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            prior_variance: PriorVariance::GridSearch {
                grid: crate::blr::default_prior_grid(),
                validation_fraction: 0.1,
            },
            bias_feature: false,
            dropout_rate: 0.05,
            mc_samples: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    Network(MlpModel),
    Blr(DeepBlr),
}

impl Member {
    pub fn model(&self) -> &MlpModel {
        match self {
            Self::Network(m) => m,
            Self::Blr(b) => b.model(),
        }
    }

    pub fn deep_blr(&self) -> Option<&DeepBlr> {
        match self {
            Self::Network(_) => None,
            Self::Blr(b) => Some(b),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<GaussianPrediction> {
        match self {
            Self::Network(m) => Ok(m.forward(x, None)?.1),
            Self::Blr(b) => b.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    kind: EnsembleKind,
    members: Vec<Member>,
    mc_samples: usize,
    /// Number of network trainings performed to build this ensemble.
    #[serde(default)]
    training_runs: usize,
}

/// Trains `size` members with seeds `base_seed + i` on the full training set. BLR kinds
/// then fit a posterior per member; with grid search the validation split of member `i`
/// is also seeded by `base_seed + i`.
pub fn train_ensemble(
    x: &Matrix,
    y: &Matrix,
    architecture: MlpArchitecture,
    config: &TrainConfig,
    size: usize,
    base_seed: u64,
    kind: EnsembleKind,
    options: &EnsembleOptions,
) -> Result<EnsembleModel> {
    if size == 0 {
        return Err(Error::InvalidConfig("ensemble size must be at least 1".into()));
    }
    if matches!(kind, EnsembleKind::SingleNn | EnsembleKind::SingleBlr | EnsembleKind::McDropout) && size != 1 {
        return Err(Error::InvalidConfig(format!("{kind} takes exactly one member, got {size}")));
    }
    let arch = match kind {
        EnsembleKind::McDropout => {
            if options.mc_samples == 0 {
                return Err(Error::InvalidConfig("mc_samples must be positive".into()));
            }
            architecture.with_dropout(options.dropout_rate)
        }
        _ => architecture.with_dropout(0.0),
    };
    let mut members = Vec::with_capacity(size);
    let mut training_runs = 0;
    for i in 0..size {
        let seed = base_seed.wrapping_add(i as u64);
        let model = nn::train(x, y, arch, &config.with_seed(seed))?;
        training_runs += 1;
        let member = if kind.uses_blr() {
            let fitted = match &options.prior_variance {
                PriorVariance::Fixed(g) => fit_deep_blr(&model, x, y, *g, options.bias_feature)?,
                PriorVariance::GridSearch {
                    grid,
                    validation_fraction,
                } => select_and_fit(&model, x, y, grid, *validation_fraction, seed, options.bias_feature)?,
            };
            Member::Blr(fitted)
        } else {
            Member::Network(model)
        };
        members.push(member);
    }
    Ok(EnsembleModel {
        kind,
        members,
        mc_samples: options.mc_samples,
        training_runs,
    })
}

impl EnsembleModel {
    /// Wraps already-trained members.
    pub fn from_members(kind: EnsembleKind, members: Vec<Member>, mc_samples: usize) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidConfig("ensemble needs at least one member".into()))?;
        let arch = *first.model().architecture();
        for m in &members {
            let a = m.model().architecture();
            if (a.input_dim, a.hidden_units, a.output_dim) != (arch.input_dim, arch.hidden_units, arch.output_dim) {
                return Err(Error::InvalidConfig("ensemble members differ in architecture".into()));
            }
            if kind.uses_blr() != m.deep_blr().is_some() {
                return Err(Error::InvalidConfig(format!("member type does not match kind {kind}")));
            }
        }
        if kind == EnsembleKind::McDropout && members.len() != 1 {
            return Err(Error::InvalidConfig("mc_dropout takes exactly one member".into()));
        }
        Ok(Self {
            kind,
            members,
            mc_samples,
            training_runs: 0,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn training_runs(&self) -> usize {
        self.training_runs
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        self.members[0].model().architecture()
    }

    /// Prior variances chosen per member (BLR kinds only).
    pub fn prior_variances(&self) -> Option<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.deep_blr().map(DeepBlr::prior_variance))
            .collect()
    }

    /// One component per member, or one per sampled dropout mask for MC-dropout.
    /// `seed` drives the dropout masks and is ignored by the other kinds.
    pub fn mixture_predict(&self, x: &[f64], seed: u64) -> Result<MixturePrediction> {
        match self.kind {
            EnsembleKind::McDropout => {
                let model = self.members[0].model();
                let arch = model.architecture();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let comps = (0..self.mc_samples)
                    .map(|_| {
                        let mask = sample_dropout_mask(arch.hidden_units, arch.dropout_rate, &mut rng);
                        model.forward(x, Some(&mask)).map(|(_, p)| p)
                    })
                    .collect::<Result<_>>()?;
                MixturePrediction::new(comps)
            }
            _ => MixturePrediction::new(self.members.iter().map(|m| m.predict(x)).collect::<Result<_>>()?),
        }
    }
}
