//! Learned cart-pole dynamics: an ensemble predicting normalized state deltas.
//!
//! Model inputs are `(ẋ, sin θ, cos θ, θ̇, F)`. The cart position is left out since the
//! dynamics do not depend on it, and the angle enters through its sine and cosine so
//! that a spinning pole does not leave the training range.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::env::EnvState;
use crate::data::{Dataset, NormalizationStats};
use crate::ensemble::{train_ensemble, EnsembleKind, EnsembleModel, EnsembleOptions, PriorVariance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{MlpArchitecture, TrainConfig};

pub const INPUT_DIM: usize = 5;
pub const STATE_DIM: usize = 4;
/// Prior variance of every BLR head fitted by the RL harness.
pub const RL_PRIOR_VARIANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Single,
    Ensemble,
    Blr,
    BlrEnsemble,
}

impl DynamicsKind {
    pub const ALL: [DynamicsKind; 4] = [Self::Single, Self::Ensemble, Self::Blr, Self::BlrEnsemble];

    pub fn ensemble_kind(self) -> EnsembleKind {
        match self {
            Self::Single => EnsembleKind::SingleNn,
            Self::Ensemble => EnsembleKind::NnEnsemble,
            Self::Blr => EnsembleKind::SingleBlr,
            Self::BlrEnsemble => EnsembleKind::BlrEnsemble,
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Self::Ensemble | Self::BlrEnsemble)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Ensemble => "ensemble",
            Self::Blr => "blr",
            Self::BlrEnsemble => "blr-ensemble",
        }
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DynamicsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind {s:?} (single, ensemble, blr, blr-ensemble)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub hidden_units: usize,
    pub train: TrainConfig,
    pub ensemble_size: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            hidden_units: 200,
            train: TrainConfig {
                epochs: 20,
                batch_size: 32,
                learning_rate: 0.001,
                ..TrainConfig::default()
            },
            ensemble_size: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvState,
    pub action: f64,
    pub next_state: EnvState,
}

pub fn model_input(state: &EnvState, action: f64) -> [f64; INPUT_DIM] {
    let (sin, cos) = state.pole_angle.sin_cos();
    [state.cart_velocity, sin, cos, state.pole_angular_velocity, action]
}

pub fn state_delta(t: &Transition) -> [f64; STATE_DIM] {
    let (a, b) = (t.state.to_array(), t.next_state.to_array());
    [b[0] - a[0], b[1] - a[1], b[2] - a[2], b[3] - a[3]]
}

pub fn apply_delta(state: &EnvState, delta: &[f64]) -> EnvState {
    let s = state.to_array();
    EnvState::from_array([s[0] + delta[0], s[1] + delta[1], s[2] + delta[2], s[3] + delta[3]])
}

/// A fitted dynamics ensemble together with the normalization of its replay buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    kind: DynamicsKind,
    ensemble: EnsembleModel,
    stats: NormalizationStats,
}

impl DynamicsModel {
    pub fn new(kind: DynamicsKind, ensemble: EnsembleModel, stats: NormalizationStats) -> Result<Self> {
        if ensemble.kind() != kind.ensemble_kind() {
            return Err(Error::InvalidConfig(format!("ensemble kind {} does not match {kind}", ensemble.kind())));
        }
        let arch = ensemble.architecture();
        if arch.input_dim != INPUT_DIM || arch.output_dim != STATE_DIM {
            return Err(Error::InvalidConfig(format!(
                "dynamics model must map {INPUT_DIM} inputs to {STATE_DIM} outputs, got {} -> {}",
                arch.input_dim, arch.output_dim
            )));
        }
        Ok(Self { kind, ensemble, stats })
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    pub fn ensemble(&self) -> &EnsembleModel {
        &self.ensemble
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    /// Mixture-mean prediction of the next state, without any sampling.
    pub fn predict_mean(&self, state: &EnvState, action: f64) -> Result<EnvState> {
        let x = self.stats.normalize_feature_row(&model_input(state, action));
        let mix = self.ensemble.mixture_predict(&x, 0)?;
        let (mean, _) = crate::ensemble::mixture_moments(&mix);
        let delta: Vec<f64> = (0..STATE_DIM).map(|d| self.stats.denormalize_target_mean(d, mean[d])).collect();
        Ok(apply_delta(state, &delta))
    }
}

/// Trains a fresh dynamics model on all transitions, normalizing inputs and deltas with
/// statistics of the whole buffer.
pub fn fit_dynamics(
    kind: DynamicsKind,
    transitions: &[Transition],
    config: &DynamicsConfig,
    seed: u64,
) -> Result<DynamicsModel> {
    if transitions.is_empty() {
        return Err(Error::InvalidConfig("no transitions to fit".into()));
    }
    let n = transitions.len();
    let mut x = Vec::with_capacity(n * INPUT_DIM);
    let mut y = Vec::with_capacity(n * STATE_DIM);
    for t in transitions {
        x.extend(model_input(&t.state, t.action));
        y.extend(state_delta(t));
    }
    let raw = Dataset::from_matrices(
        "transitions",
        Matrix::from_vec(n, INPUT_DIM, x)?,
        Matrix::from_vec(n, STATE_DIM, y)?,
    )?;
    let stats = NormalizationStats::fit(&raw);
    let data = stats.apply(&raw)?;
    let size = if kind.is_ensemble() { config.ensemble_size } else { 1 };
    let options = EnsembleOptions {
        prior_variance: PriorVariance::Fixed(RL_PRIOR_VARIANCE),
        ..EnsembleOptions::default()
    };
    let ensemble = train_ensemble(
        &data.features,
        &data.targets,
        MlpArchitecture::new(INPUT_DIM, config.hidden_units, STATE_DIM),
        &config.train,
        size,
        seed,
        kind.ensemble_kind(),
        &options,
    )?;
    DynamicsModel::new(kind, ensemble, stats)
}
