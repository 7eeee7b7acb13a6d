//! Self-contained model files for `fit` / `predict` on arbitrary CSV data.
//!
//! An artifact is a JSON document holding the trained members (network parameters and,
//! for BLR kinds, posterior means and precision factors), the normalization statistics,
//! and the column names, so predictions need nothing from the training data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormalizationStats};
use crate::ensemble::{mixture_moments, train_ensemble, EnsembleKind, EnsembleModel, EnsembleOptions};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{MlpArchitecture, TrainConfig};

pub const ARTIFACT_FORMAT: &str = "deepblr-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: EnsembleKind,
    pub hidden_units: usize,
    pub ensemble_size: usize,
    pub train: TrainConfig,
    pub ensemble: EnsembleOptions,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: EnsembleKind::SingleBlr,
            hidden_units: 50,
            ensemble_size: 5,
            train: TrainConfig::default(),
            ensemble: EnsembleOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub config: FitConfig,
    pub normalization: NormalizationStats,
    pub model: EnsembleModel,
}

/// Predictive summary of one row, in original target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub mean: Vec<f64>,
    pub aleatoric_std: Vec<f64>,
    pub total_std: Vec<f64>,
}

/// Normalizes `data`, trains the configured method, and packages the result.
pub fn fit_artifact(data: &Dataset, config: &FitConfig) -> Result<ModelArtifact> {
    let stats = NormalizationStats::fit(data);
    let norm = stats.apply(data)?;
    let size = if matches!(config.method, EnsembleKind::NnEnsemble | EnsembleKind::BlrEnsemble) {
        config.ensemble_size
    } else {
        1
    };
    let model = train_ensemble(
        &norm.features,
        &norm.targets,
        MlpArchitecture::new(data.input_dim(), config.hidden_units, data.output_dim()),
        &config.train,
        size,
        config.seed,
        config.method,
        &config.ensemble,
    )?;
    Ok(ModelArtifact {
        format: ARTIFACT_FORMAT.to_owned(),
        version: ARTIFACT_VERSION,
        feature_names: data.feature_names.clone(),
        target_names: data.target_names.clone(),
        config: config.clone(),
        normalization: stats,
        model,
    })
}

impl ModelArtifact {
    pub fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let art: Self = serde_json::from_str(&text)?;
        if art.format != ARTIFACT_FORMAT || art.version != ARTIFACT_VERSION {
            return Err(Error::Data {
                path: path.to_path_buf(),
                message: format!(
                    "unsupported model file {} v{} (expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION})",
                    art.format, art.version
                ),
            });
        }
        Ok(art)
    }

    /// Predicts every row of `x`, given in original feature units.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<PredictionRow>> {
        if x.cols() != self.input_dim() {
            return Err(Error::InvalidConfig(format!(
                "model expects {} feature columns, input has {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let stats = &self.normalization;
        x.row_iter()
            .map(|row| {
                let mix = self.model.mixture_predict(&stats.normalize_feature_row(row), self.config.seed)?;
                let (mean, var) = mixture_moments(&mix);
                let ale = mix.mean_aleatoric_variance();
                Ok(PredictionRow {
                    mean: mean.iter().enumerate().map(|(d, m)| stats.denormalize_target_mean(d, *m)).collect(),
                    aleatoric_std: ale.iter().zip(&stats.target_stds).map(|(v, s)| v.sqrt() * s).collect(),
                    total_std: var.iter().zip(&stats.target_stds).map(|(v, s)| v.sqrt() * s).collect(),
                })
            })
            .collect()
    }

    /// Reads the feature columns of a CSV for this model. Columns are matched by name
    /// when the header has all feature names, otherwise by position, in which case the
    /// file must have exactly as many columns as the model has features.
    pub fn read_features(&self, path: impl AsRef<Path>) -> Result<Matrix> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let by_name: Option<Vec<usize>> = self
            .feature_names
            .iter()
            .map(|f| header.iter().position(|h| h == f))
            .collect();
        let columns = match by_name {
            Some(cols) => cols,
            None if header.len() == self.input_dim() => (0..header.len()).collect(),
            None => {
                return Err(Error::Data {
                    path: path.to_path_buf(),
                    message: format!(
                        "expected {} feature columns ({}), found {} ({})",
                        self.input_dim(),
                        self.feature_names.join(","),
                        header.len(),
                        header.join(",")
                    ),
                })
            }
        };
        let mut values = Vec::new();
        let mut rows = 0;
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            for &c in &columns {
                let cell = record.get(c).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    column: header[c].clone(),
                    message: format!("not a number: {cell:?}"),
                })?;
                values.push(v);
            }
            rows += 1;
        }
        Matrix::from_vec(rows, columns.len(), values)
    }
}
