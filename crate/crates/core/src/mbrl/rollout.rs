//! Trajectory sampling through a learned dynamics model.
//!
//! Particle `j` draws from its own ChaCha stream `j` of the rollout seed, is bound to
//! ensemble member `j mod M` for the whole rollout, and for BLR kinds first draws one
//! weight vector per output dimension from that member's posterior. Every step then adds
//! aleatoric noise `N(0, σ²(x))` to the predicted (normalized) delta.
//!
//! The sampler keeps the post-weight-draw state of each stream and restarts from it for
//! every action sequence, so all candidates of one planning call see the same weights
//! and noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dynamics::{model_input, DynamicsModel, INPUT_DIM, STATE_DIM};
use super::env::{clip_action, reward, EnvState, POSITION_BOUND};
use crate::error::{Error, Result};
use crate::nn::{bounded_variance, MlpModel};

/// Dot product with four independent accumulators, so the compiler can vectorize it.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Network parameters laid out for single-sample inference in the rollout loop.
struct RolloutNet {
    /// First-layer weights transposed to `p x h`.
    w1t: Vec<f64>,
    b1: Vec<f64>,
    mean_w: Vec<Vec<f64>>,
    mean_b: Vec<f64>,
    var_w: Vec<Vec<f64>>,
    var_b: Vec<f64>,
}

impl RolloutNet {
    fn new(model: &MlpModel) -> Self {
        let p = model.parameters();
        let w1 = &p.first_layer_weights;
        let (h, n_in) = (w1.rows(), w1.cols());
        let mut w1t = vec![0.0; h * n_in];
        for j in 0..h {
            for i in 0..n_in {
                w1t[i * h + j] = w1[(j, i)];
            }
        }
        let rows = |m: &crate::linalg::Matrix| m.row_iter().map(<[f64]>::to_vec).collect();
        Self {
            w1t,
            b1: p.first_layer_bias.clone(),
            mean_w: rows(&p.mean_head_weights),
            mean_b: p.mean_head_bias.clone(),
            var_w: rows(&p.variance_head_weights),
            var_b: p.variance_head_bias.clone(),
        }
    }

    fn latent_into(&self, x: &[f64], latent: &mut [f64]) {
        let h = latent.len();
        latent.copy_from_slice(&self.b1);
        for (i, xi) in x.iter().enumerate() {
            let col = &self.w1t[i * h..(i + 1) * h];
            for (z, w) in latent.iter_mut().zip(col) {
                *z += xi * w;
            }
        }
        latent.iter_mut().for_each(|z| *z = z.max(0.0));
    }
}

struct Particle {
    member: usize,
    /// Sampled BLR weights, one vector per output dimension.
    weights: Option<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
}

pub struct TrajectorySampler<'a> {
    model: &'a DynamicsModel,
    nets: Vec<RolloutNet>,
    particles: Vec<Particle>,
    aleatoric_noise: bool,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(model: &'a DynamicsModel, particles: usize, seed: u64) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidConfig("need at least one particle".into()));
        }
        let members = model.ensemble().members();
        let particles = (0..particles)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                let member = j % members.len();
                let weights = members[member].deep_blr().map(|blr| {
                    debug_assert!(!blr.bias_feature());
                    blr.posteriors().iter().map(|p| p.sample_with(&mut rng)).collect()
                });
                Particle { member, weights, rng }
            })
            .collect();
        Ok(Self {
            model,
            nets: members.iter().map(|m| RolloutNet::new(m.model())).collect(),
            particles,
            aleatoric_noise: true,
        })
    }

    /// Turns the per-step aleatoric noise off (useful for degenerate checks).
    pub fn without_aleatoric_noise(mut self) -> Self {
        self.aleatoric_noise = false;
        self
    }

    pub fn particles(&self) -> usize {
        self.particles.len()
    }

    /// Cumulative model reward of each particle for one action sequence.
    pub fn particle_returns(&self, state: &EnvState, actions: &[f64]) -> Vec<f64> {
        let stats = self.model.stats();
        let h = self.model.ensemble().architecture().hidden_units;
        let mut latent = vec![0.0; h];
        let mut input = [0.0; INPUT_DIM];
        self.particles
            .iter()
            .map(|p| {
                let net = &self.nets[p.member];
                let mut rng = p.rng.clone();
                let mut s = state.to_array();
                let mut total = 0.0;
                for &a in actions {
                    let raw = model_input(&EnvState::from_array(s), clip_action(a));
                    for i in 0..INPUT_DIM {
                        input[i] = (raw[i] - stats.feature_means[i]) / stats.feature_stds[i];
                    }
                    net.latent_into(&input, &mut latent);
                    for d in 0..STATE_DIM {
                        let mut delta = match &p.weights {
                            Some(w) => dot4(&latent, &w[d]),
                            None => dot4(&latent, &net.mean_w[d]) + net.mean_b[d],
                        };
                        if self.aleatoric_noise {
                            let var = bounded_variance(dot4(&latent, &net.var_w[d]) + net.var_b[d]);
                            let eps: f64 = StandardNormal.sample(&mut rng);
                            delta += var.sqrt() * eps;
                        }
                        s[d] += delta * stats.target_stds[d] + stats.target_means[d];
                    }
                    s[0] = s[0].clamp(-POSITION_BOUND, POSITION_BOUND);
                    total += reward(&EnvState::from_array(s));
                }
                total
            })
            .collect()
    }

    /// Mean cumulative model reward over particles.
    pub fn mean_return(&self, state: &EnvState, actions: &[f64]) -> f64 {
        let r = self.particle_returns(state, actions);
        r.iter().sum::<f64>() / r.len() as f64
    }
}

/// Mean return of `actions` over `particles` sampled trajectories.
pub fn ts_rollout(model: &DynamicsModel, state: &EnvState, actions: &[f64], particles: usize, seed: u64) -> Result<f64> {
    Ok(TrajectorySampler::new(model, particles, seed)?.mean_return(state, actions))
}
