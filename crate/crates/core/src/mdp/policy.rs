use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{sample_dense, BlockMdp, Observation};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Policy over latent states: `probs[h][z][a]`. Needs observations that carry latents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPolicy {
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl LatentPolicy {
    /// A uniformly random stochastic latent policy.
    pub fn random(env: &BlockMdp, rng: &mut Rng) -> Self {
        let a = env.num_actions();
        let probs = (0..env.horizon())
            .map(|h| {
                (0..env.latent_count(h))
                    .map(|_| {
                        let w: Vec<f64> = (0..a).map(|_| rng.random::<f64>() + 1e-3).collect();
                        let s: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / s).collect()
                    })
                    .collect()
            })
            .collect();
        Self { probs }
    }

    pub fn deterministic(actions: Vec<Vec<usize>>, num_actions: usize) -> Self {
        let probs = actions
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|a| {
                        let mut p = vec![0.0; num_actions];
                        p[a] = 1.0;
                        p
                    })
                    .collect()
            })
            .collect();
        Self { probs }
    }
}

/// Greedy policy over a per-code Q-table `q[h][code][a]`, ties broken to the lowest action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyPolicy {
    pub q: Vec<Vec<Vec<f64>>>,
}

impl GreedyPolicy {
    pub fn action(&self, h: usize, code: usize) -> usize {
        self.q.get(h).and_then(|t| t.get(code)).map(|row| argmax(row)).unwrap_or(0)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkovPolicy {
    Uniform { num_actions: usize },
    Latent(LatentPolicy),
    Greedy(GreedyPolicy),
}

impl MarkovPolicy {
    pub fn act(&self, h: usize, obs: &Observation, rng: &mut Rng) -> usize {
        match self {
            MarkovPolicy::Uniform { num_actions } => rng.random_range(0..*num_actions),
            MarkovPolicy::Latent(p) => {
                let z = obs.hidden_latent().expect("latent policy needs latent observations");
                sample_dense(&p.probs[h][z], rng)
            }
            MarkovPolicy::Greedy(g) => g.action(h, obs.code()),
        }
    }

    /// `π(·|z)` obtained by averaging the per-code action distribution over `o_h(·|z)`.
    pub fn latent_action_probs(&self, env: &BlockMdp, h: usize, z: usize) -> Vec<f64> {
        let a_n = env.num_actions();
        match self {
            MarkovPolicy::Uniform { .. } => vec![1.0 / a_n as f64; a_n],
            MarkovPolicy::Latent(p) => p.probs[h][z].clone(),
            MarkovPolicy::Greedy(g) => {
                let mut out = vec![0.0; a_n];
                for (c, p) in env.emission(h, z) {
                    out[g.action(h, *c)] += p;
                }
                out
            }
        }
    }
}

/// Markov policy or a mixture sampled once per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Markov(MarkovPolicy),
    Mixture { weights: Vec<f64>, components: Vec<MarkovPolicy> },
}

impl Policy {
    pub fn uniform(num_actions: usize) -> Self {
        Policy::Markov(MarkovPolicy::Uniform { num_actions })
    }

    pub fn greedy(q: Vec<Vec<Vec<f64>>>) -> Self {
        Policy::Markov(MarkovPolicy::Greedy(GreedyPolicy { q }))
    }

    pub fn latent(p: LatentPolicy) -> Self {
        Policy::Markov(MarkovPolicy::Latent(p))
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<MarkovPolicy>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::InvalidParameter("mixture weights and components differ".into()));
        }
        let s: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution("mixture weights".into()));
        }
        Ok(Policy::Mixture { weights, components })
    }

    pub fn uniform_mixture(components: Vec<MarkovPolicy>) -> Result<Self> {
        let n = components.len().max(1);
        Self::mixture(vec![1.0 / n as f64; components.len()], components)
    }

    pub fn begin_episode(&self, rng: &mut Rng) -> &MarkovPolicy {
        match self {
            Policy::Markov(m) => m,
            Policy::Mixture { weights, components } => &components[sample_dense(weights, rng)],
        }
    }

    pub fn components(&self) -> Vec<(f64, &MarkovPolicy)> {
        match self {
            Policy::Markov(m) => vec![(1.0, m)],
            Policy::Mixture { weights, components } => weights.iter().copied().zip(components).collect(),
        }
    }
}
