//! Cross-entropy method over open-loop action sequences.
//!
//! The elites of each iteration compete again in the next one, so the mean objective of
//! the elite set never decreases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dynamics::DynamicsModel;
use super::env::{EnvState, FORCE_BOUND};
use super::rollout::TrajectorySampler;
use crate::error::{Error, Result};

/// Sampling stream for candidate sequences; particle streams count up from 0.
const CEM_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub horizon: usize,
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub particles: usize,
    /// Actions are confined to `[−action_bound, action_bound]`.
    pub action_bound: f64,
    pub initial_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            population: 200,
            elites: 20,
            iterations: 5,
            particles: 20,
            action_bound: FORCE_BOUND,
            initial_std: FORCE_BOUND,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("CEM config: {m}")));
        if self.horizon == 0 || self.population == 0 || self.elites == 0 || self.particles == 0 {
            return bad("horizon, population, elites and particles must be positive");
        }
        if self.elites > self.population {
            return bad("more elites than population");
        }
        if !(self.action_bound > 0.0) || !(self.initial_std > 0.0) {
            return bad("action bound and initial std must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    /// Final sampling mean.
    pub mean: Vec<f64>,
    /// Mean objective of the elite set after each iteration.
    pub elite_values: Vec<f64>,
}

impl CemOutcome {
    pub fn first_action(&self) -> f64 {
        self.mean[0]
    }
}

/// Maximizes `objective` over sequences of `initial_mean.len()` actions. Non-finite
/// objective values rank last.
pub fn cem_optimize<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    config: &CemConfig,
    initial_mean: &[f64],
    seed: u64,
) -> Result<CemOutcome> {
    config.validate()?;
    let n = initial_mean.len();
    let bound = config.action_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CEM_STREAM);
    let mut mean: Vec<f64> = initial_mean.iter().map(|a| a.clamp(-bound, bound)).collect();
    let mut std = vec![config.initial_std; n];
    let mut elites: Vec<(f64, Vec<f64>)> = Vec::with_capacity(config.elites);
    let mut elite_values = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        let mut pool = std::mem::take(&mut elites);
        for _ in 0..config.population {
            let seq: Vec<f64> = mean
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (m + s * e).clamp(-bound, bound)
                })
                .collect();
            let v = objective(&seq);
            pool.push((if v.is_finite() { v } else { f64::NEG_INFINITY }, seq));
        }
        pool.sort_by(|a, b| b.0.total_cmp(&a.0));
        pool.truncate(config.elites);
        elites = pool;

        let k = elites.len() as f64;
        elite_values.push(elites.iter().map(|e| e.0).sum::<f64>() / k);
        for t in 0..n {
            let m = elites.iter().map(|e| e.1[t]).sum::<f64>() / k;
            let v = elites.iter().map(|e| (e.1[t] - m).powi(2)).sum::<f64>() / k;
            mean[t] = m;
            std[t] = v.sqrt();
        }
    }
    Ok(CemOutcome { mean, elite_values })
}

/// Plans from `state` with a zero initial mean and returns the first action.
pub fn cem_plan(model: &DynamicsModel, state: &EnvState, config: &CemConfig, seed: u64) -> Result<f64> {
    Planner::new(config.clone())?.plan(model, state, seed)
}

/// Receding-horizon planner that warm-starts each call from the previous solution,
/// shifted by one step.
#[derive(Debug, Clone)]
pub struct Planner {
    config: CemConfig,
    previous: Option<Vec<f64>>,
}

impl Planner {
    pub fn new(config: CemConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, previous: None })
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn plan(&mut self, model: &DynamicsModel, state: &EnvState, seed: u64) -> Result<f64> {
        let h = self.config.horizon;
        let init = match self.previous.take() {
            Some(prev) => prev[1..].iter().copied().chain(std::iter::once(0.0)).collect(),
            None => vec![0.0; h],
        };
        let sampler = TrajectorySampler::new(model, self.config.particles, seed)?;
        let out = cem_optimize(|seq| sampler.mean_return(state, seq), &self.config, &init, seed)?;
        let action = out.first_action();
        self.previous = Some(out.mean);
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub(seq: &[f64]) -> f64 {
        -(seq[0] - 3.0).powi(2)
    }

    fn one_step() -> CemConfig {
        CemConfig {
            horizon: 1,
            ..CemConfig::default()
        }
    }

    #[test]
    fn finds_stub_optimum() {
        let out = cem_optimize(stub, &one_step(), &[0.0], 0).unwrap();
        assert!((out.first_action() - 3.0).abs() < 0.05, "{}", out.first_action());
    }

    #[test]
    fn zero_iterations_returns_initial_mean() {
        let config = CemConfig {
            iterations: 0,
            ..one_step()
        };
        let out = cem_optimize(stub, &config, &[0.0], 0).unwrap();
        assert_eq!(out.first_action(), 0.0);
    }

    #[test]
    fn elite_value_is_monotone() {
        for seed in 0..10 {
            let out = cem_optimize(stub, &one_step(), &[0.0], seed).unwrap();
            assert!(out.elite_values.windows(2).all(|w| w[1] >= w[0]), "{:?}", out.elite_values);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = cem_optimize(stub, &one_step(), &[0.0], 3).unwrap();
        let b = cem_optimize(stub, &one_step(), &[0.0], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn respects_bounds() {
        let out = cem_optimize(|s| s[0], &one_step(), &[0.0], 1).unwrap();
        assert!(out.first_action() <= FORCE_BOUND && out.first_action() > 9.0);
    }

    #[test]
    fn nan_objective_ranks_last() {
        let out = cem_optimize(|s| if s[0] < 0.0 { f64::NAN } else { -s[0] }, &one_step(), &[0.0], 2).unwrap();
        assert!(out.first_action() >= 0.0 && out.first_action() < 0.1);
    }

    #[test]
    fn rejects_bad_config() {
        let c = CemConfig {
            elites: 300,
            ..CemConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(CemConfig::default().validate().is_ok());
    }
}
