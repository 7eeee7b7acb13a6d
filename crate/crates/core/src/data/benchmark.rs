//! Repeated random-split benchmark: per split normalize, train, (for BLR methods)
//! grid-search `g` and refit, then report test NLL and RMSE in original target units.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::normalize::{denormalized_nll, normalize};
use super::registry::DatasetSpec;
use super::split::split_dataset;
use crate::ensemble::{mixture_moments, mixture_nll, train_ensemble, EnsembleKind, EnsembleOptions};
use crate::error::{Error, Result};
use crate::nn::{MlpArchitecture, TrainConfig};

pub const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SingleNn,
    NnEnsemble,
    McDropout,
    Blr,
    BlrEnsemble,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SingleNn,
        Method::NnEnsemble,
        Method::McDropout,
        Method::Blr,
        Method::BlrEnsemble,
    ];

    pub fn kind(self) -> EnsembleKind {
        match self {
            Self::SingleNn => EnsembleKind::SingleNn,
            Self::NnEnsemble => EnsembleKind::NnEnsemble,
            Self::McDropout => EnsembleKind::McDropout,
            Self::Blr => EnsembleKind::SingleBlr,
            Self::BlrEnsemble => EnsembleKind::BlrEnsemble,
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Self::NnEnsemble | Self::BlrEnsemble)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SingleNn => "single_nn",
            Self::NnEnsemble => "nn_ensemble",
            Self::McDropout => "mc_dropout",
            Self::Blr => "blr",
            Self::BlrEnsemble => "blr_ensemble",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub hidden_units: usize,
    /// The seed field is overwritten per split and member.
    pub train: TrainConfig,
    pub ensemble_size: usize,
    pub test_fraction: f64,
    pub ensemble: EnsembleOptions,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            hidden_units: 50,
            train: TrainConfig::default(),
            ensemble_size: 5,
            test_fraction: 0.1,
            ensemble: EnsembleOptions::default(),
        }
    }
}

impl ProtocolConfig {
    /// Default protocol with the dataset's hidden width and learning rate.
    pub fn for_dataset(spec: &DatasetSpec) -> Self {
        let mut cfg = Self {
            hidden_units: spec.hidden_units,
            ..Self::default()
        };
        cfg.train.learning_rate = spec.learning_rate;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    /// Mean test NLL in original units; `None` if the split failed.
    pub nll: Option<f64>,
    pub rmse: Option<f64>,
    /// Prior variance chosen for each member (BLR methods only).
    pub g: Option<Vec<f64>>,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Network trainings performed in this split.
    #[serde(skip)]
    pub trainings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub nll_mean: f64,
    /// Sample standard deviation over splits divided by √n; `None` for a single split.
    pub nll_se: Option<f64>,
    pub rmse_mean: f64,
    pub rmse_se: Option<f64>,
}

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

impl Summary {
    /// Summary over the splits that succeeded.
    pub fn from_splits(splits: &[SplitResult]) -> Option<Self> {
        let nll: Vec<f64> = splits.iter().filter_map(|s| s.nll).collect();
        let rmse: Vec<f64> = splits.iter().filter_map(|s| s.rmse).collect();
        if nll.is_empty() {
            return None;
        }
        let (nll_mean, nll_se) = mean_se(&nll);
        let (rmse_mean, rmse_se) = mean_se(&rmse);
        Some(Self {
            nll_mean,
            nll_se,
            rmse_mean,
            rmse_se,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub dataset: String,
    pub method: Method,
    pub config: ProtocolConfig,
    pub per_split: Vec<SplitResult>,
    pub summary: Summary,
}

impl BenchmarkRecord {
    /// One table row: `dataset  method  mean ± SE`.
    pub fn table_row(&self) -> String {
        let se = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |s| format!("{s:.2}"));
        format!(
            "{:<12} {:<13} {:.2} ± {}  (RMSE {:.2} ± {})",
            self.dataset,
            self.method.as_str(),
            self.summary.nll_mean,
            se(self.summary.nll_se),
            self.summary.rmse_mean,
            se(self.summary.rmse_se)
        )
    }

    pub fn failed_splits(&self) -> usize {
        self.per_split.iter().filter(|s| s.error.is_some()).count()
    }
}

/// Seed used for split `i`: `base_seed + i`.
pub fn split_seed(base_seed: u64, split_index: usize) -> u64 {
    base_seed.wrapping_add(split_index as u64)
}

fn run_split(dataset: &Dataset, method: Method, split_index: usize, base_seed: u64, config: &ProtocolConfig) -> Result<SplitResult> {
    let seed = split_seed(base_seed, split_index);
    let start = Instant::now();
    let (train, test) = split_dataset(dataset, split_index, base_seed, config.test_fraction);
    let (train_n, test_n, stats) = normalize(&train, &test)?;

    let arch = MlpArchitecture::new(dataset.input_dim(), config.hidden_units, dataset.output_dim());
    let size = if method.is_ensemble() { config.ensemble_size } else { 1 };
    let member_seed = seed.wrapping_mul(1000);
    let ens = train_ensemble(
        &train_n.features,
        &train_n.targets,
        arch,
        &config.train,
        size,
        member_seed,
        method.kind(),
        &config.ensemble,
    )?;

    let mut nll = 0.0;
    let mut sq_err = 0.0;
    for i in 0..test_n.len() {
        let mix = ens.mixture_predict(test_n.features.row(i), member_seed.wrapping_add(1 + i as u64))?;
        nll += mixture_nll(&mix, test_n.targets.row(i))?;
        let (mean, _) = mixture_moments(&mix);
        for (d, m) in mean.iter().enumerate() {
            let err = stats.denormalize_target_mean(d, *m) - test.targets[(i, d)];
            sq_err += err * err;
        }
    }
    let n_test = test_n.len() as f64;
    let nll = denormalized_nll(nll / n_test, &stats.target_stds);
    let rmse = (sq_err / (n_test * dataset.output_dim() as f64)).sqrt();
    if !nll.is_finite() {
        return Err(Error::InvalidConfig(format!("non-finite test NLL in split {split_index}")));
    }
    Ok(SplitResult {
        seed,
        nll: Some(nll),
        rmse: Some(rmse),
        g: ens.prior_variances(),
        wall_ms: start.elapsed().as_millis() as u64,
        error: None,
        trainings: ens.training_runs(),
    })
}

/// Runs `n_splits` random train/test splits. Failed splits are recorded with their
/// error; the run fails only if every split fails.
pub fn run_benchmark(
    dataset: &Dataset,
    method: Method,
    n_splits: usize,
    base_seed: u64,
    config: &ProtocolConfig,
) -> Result<BenchmarkRecord> {
    if n_splits == 0 {
        return Err(Error::InvalidConfig("n_splits must be at least 1".into()));
    }
    if dataset.len() < MIN_ROWS {
        return Err(Error::InvalidConfig(format!(
            "dataset {} has {} rows; at least {MIN_ROWS} required",
            dataset.name,
            dataset.len()
        )));
    }
    let mut per_split = Vec::with_capacity(n_splits);
    let mut first_error = None;
    for split_index in 0..n_splits {
        let start = Instant::now();
        let result = run_split(dataset, method, split_index, base_seed, config).unwrap_or_else(|e| {
            log::error!("{} / {method}: split {split_index} failed: {e}", dataset.name);
            first_error.get_or_insert_with(|| e.to_string());
            SplitResult {
                seed: split_seed(base_seed, split_index),
                nll: None,
                rmse: None,
                g: None,
                wall_ms: start.elapsed().as_millis() as u64,
                error: Some(e.to_string()),
                trainings: 0,
            }
        });
        log::info!(
            "{} / {method}: split {split_index} nll={:?} ({} ms)",
            dataset.name,
            result.nll,
            result.wall_ms
        );
        per_split.push(result);
    }
    let summary = Summary::from_splits(&per_split)
        .ok_or_else(|| Error::AllSplitsFailed(n_splits, first_error.unwrap_or_default()))?;
    Ok(BenchmarkRecord {
        dataset: dataset.name.clone(),
        method,
        config: config.clone(),
        per_split,
        summary,
    })
}
