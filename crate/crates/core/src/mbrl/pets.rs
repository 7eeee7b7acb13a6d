//! The model-based RL loop: a random first episode, then refit and plan every episode.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cem::{CemConfig, Planner};
use super::dynamics::{fit_dynamics, DynamicsConfig, DynamicsKind, Transition, RL_PRIOR_VARIANCE};
use super::env::{cartpole_step, EnvState, FORCE_BOUND, STEPS_PER_EPISODE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetsConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Half-width of the uniform perturbation of the hanging start state.
    pub initial_noise: f64,
    pub cem: CemConfig,
    pub dynamics: DynamicsConfig,
    /// Recorded for reference; BLR heads always use this value.
    pub prior_variance: f64,
}

impl Default for PetsConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            steps_per_episode: STEPS_PER_EPISODE,
            initial_noise: 0.05,
            cem: CemConfig::default(),
            dynamics: DynamicsConfig::default(),
            prior_variance: RL_PRIOR_VARIANCE,
        }
    }
}

impl PetsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.steps_per_episode == 0 {
            return Err(Error::InvalidConfig("episodes and steps per episode must be positive".into()));
        }
        if self.prior_variance != RL_PRIOR_VARIANCE {
            return Err(Error::InvalidConfig(format!("RL prior variance is fixed at {RL_PRIOR_VARIANCE}")));
        }
        self.cem.validate()?;
        self.dynamics.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetsRun {
    pub model: DynamicsKind,
    pub seed: u64,
    pub config: PetsConfig,
    pub episodes: Vec<EpisodeLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PetsRun {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_return).collect()
    }

    /// Mean return over the last `k` logged episodes.
    pub fn final_mean_return(&self, k: usize) -> f64 {
        let r = self.returns();
        let tail = &r[r.len().saturating_sub(k)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// `episode,return,wall_ms` rows after a `# config:` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# config: {}",
            serde_json::json!({"model": self.model, "seed": self.seed, "config": self.config})
        )?;
        writeln!(out, "episode,return,wall_ms")?;
        for e in &self.episodes {
            writeln!(out, "{},{},{}", e.episode, e.total_return, e.wall_ms)?;
        }
        Ok(())
    }
}

fn step_seed(seed: u64, episode: usize, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((episode as u64) << 32 | step as u64)
}

fn start_state(rng: &mut ChaCha8Rng, noise: f64) -> EnvState {
    let mut jitter = || if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
    let h = EnvState::hanging();
    EnvState::new(jitter(), jitter(), h.pole_angle + jitter(), jitter())
}

/// Runs `config.episodes` episodes. A failing episode stops the run; the episodes
/// completed so far are kept and the error is recorded.
pub fn pets_loop(kind: DynamicsKind, config: &PetsConfig, seed: u64) -> PetsRun {
    let mut run = PetsRun {
        model: kind,
        seed,
        config: config.clone(),
        episodes: Vec::with_capacity(config.episodes),
        error: None,
    };
    if let Err(e) = config.validate() {
        run.error = Some(e.to_string());
        return run;
    }
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<Transition> = Vec::with_capacity(config.episodes * config.steps_per_episode);
    for episode in 0..config.episodes {
        let started = Instant::now();
        match run_episode(kind, config, seed, episode, &mut env_rng, &mut data) {
            Ok(total_return) => {
                let log = EpisodeLog {
                    episode,
                    total_return,
                    wall_ms: started.elapsed().as_millis() as u64,
                };
                log::info!("{kind} seed {seed} episode {episode}: return {total_return:.2} ({} ms)", log.wall_ms);
                run.episodes.push(log);
            }
            Err(e) => {
                log::error!("{kind} seed {seed} episode {episode} failed: {e}");
                run.error = Some(format!("episode {episode}: {e}"));
                break;
            }
        }
    }
    run
}

fn run_episode(
    kind: DynamicsKind,
    config: &PetsConfig,
    seed: u64,
    episode: usize,
    env_rng: &mut ChaCha8Rng,
    data: &mut Vec<Transition>,
) -> Result<f64> {
    let mut state = start_state(env_rng, config.initial_noise);
    let model = if episode == 0 {
        None
    } else {
        let train_seed = seed.wrapping_mul(1000).wrapping_add(10 * episode as u64);
        Some(fit_dynamics(kind, data, &config.dynamics, train_seed)?)
    };
    let mut planner = Planner::new(config.cem.clone())?;
    let mut total = 0.0;
    for step in 0..config.steps_per_episode {
        let action = match &model {
            None => env_rng.random_range(-FORCE_BOUND..=FORCE_BOUND),
            Some(m) => planner.plan(m, &state, step_seed(seed, episode, step))?,
        };
        let (next, r) = cartpole_step(&state, action);
        if !next.is_finite() {
            return Err(Error::InvalidConfig(format!("environment diverged at step {step}")));
        }
        data.push(Transition {
            state,
            action,
            next_state: next,
        });
        total += r;
        state = next;
    }
    Ok(total)
}
