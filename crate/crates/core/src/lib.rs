//! Deep BLR: Bayesian linear regression on the last hidden layer of a Gaussian-output
//! network, with the network's predicted variance used as known, input-dependent noise.
//!
//! Also contains the baselines (single network, deep ensemble, MC-dropout), the
//! repeated-split regression benchmark, and a small model-based RL harness on a
//! cart-pole swing-up task.

pub mod artifact;
pub mod blr;
pub mod data;
pub mod ensemble;
mod error;
pub mod linalg;
pub mod mbrl;
pub mod nn;
pub mod toy;

pub use blr::{fit_blr, fit_deep_blr, select_and_fit, select_prior_variance, BlrPosterior, DeepBlr, GridSearchResult};
pub use ensemble::{mixture_moments, mixture_nll, train_ensemble, EnsembleKind, EnsembleModel, EnsembleOptions, MixturePrediction};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use nn::{gaussian_nll, init_mlp, train, GaussianPrediction, MlpArchitecture, MlpModel, TrainConfig};
