use serde::{Deserialize, Serialize};

use super::{BlockMdp, LatentPolicy, MarkovPolicy, Policy, Reward};
use crate::linalg;

/// Latent rewards `r[h][z*A + a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub table: Vec<Vec<Reward>>,
}

impl RewardTable {
    pub fn new(table: Vec<Vec<Reward>>) -> Self {
        Self { table }
    }

    pub fn zero(env: &BlockMdp) -> Self {
        let table = (0..env.horizon()).map(|h| vec![Reward::ZERO; env.feature_dim(h)]).collect();
        Self { table }
    }

    pub fn mean(&self, h: usize, idx: usize) -> f64 {
        self.table[h][idx].mean()
    }
}

/// Optimal Q-values over latents and a greedy latent policy.
#[derive(Clone, Debug)]
pub struct OptimalSolution {
    pub value: f64,
    pub q: Vec<Vec<Vec<f64>>>,
    pub policy: LatentPolicy,
}

pub fn optimal_value(env: &BlockMdp, rewards: &RewardTable) -> OptimalSolution {
    let (hz, a_n) = (env.horizon(), env.num_actions());
    let mut v_next = vec![0.0; env.latent_count(hz)];
    let mut q = vec![Vec::new(); hz];
    let mut actions = vec![Vec::new(); hz];
    for h in (0..hz).rev() {
        let l = env.latent_count(h);
        let mut qh = vec![vec![0.0; a_n]; l];
        let mut vh = vec![0.0; l];
        let mut ah = vec![0; l];
        for z in 0..l {
            for a in 0..a_n {
                let cont: f64 =
                    env.transition(h, z, a).iter().zip(&v_next).map(|(t, v)| t * v).sum();
                qh[z][a] = rewards.mean(h, z * a_n + a) + cont;
            }
            ah[z] = super::argmax(&qh[z]);
            vh[z] = qh[z][ah[z]];
        }
        q[h] = qh;
        actions[h] = ah;
        v_next = vh;
    }
    let value = env.initial().iter().zip(&v_next).map(|(p, v)| p * v).sum();
    OptimalSolution { value, q, policy: LatentPolicy::deterministic(actions, a_n) }
}

/// State occupancies `d_h(z)` for `h = 0..=H` under a Markov policy.
pub fn markov_state_occupancies(env: &BlockMdp, pi: &MarkovPolicy) -> Vec<Vec<f64>> {
    let hz = env.horizon();
    let mut out = Vec::with_capacity(hz + 1);
    let mut d = env.initial().to_vec();
    for h in 0..hz {
        let mut next = vec![0.0; env.latent_count(h + 1)];
        for (z, dz) in d.iter().enumerate() {
            if *dz == 0.0 {
                continue;
            }
            for (a, pa) in pi.latent_action_probs(env, h, z).iter().enumerate() {
                if *pa == 0.0 {
                    continue;
                }
                for (z2, t) in env.transition(h, z, a).iter().enumerate() {
                    next[z2] += dz * pa * t;
                }
            }
        }
        out.push(std::mem::replace(&mut d, next));
    }
    out.push(d);
    out
}

pub fn state_occupancy(env: &BlockMdp, policy: &Policy, h: usize) -> Vec<f64> {
    let mut acc = vec![0.0; env.latent_count(h)];
    for (w, pi) in policy.components() {
        for (x, y) in acc.iter_mut().zip(&markov_state_occupancies(env, pi)[h]) {
            *x += w * y;
        }
    }
    acc
}

/// Joint occupancy `d_h(z, a)` indexed `z*A + a`; `uniform_action` replaces the policy's
/// action at step `h` with a uniform one.
pub fn latent_occupancy(env: &BlockMdp, policy: &Policy, h: usize, uniform_action: bool) -> Vec<f64> {
    let a_n = env.num_actions();
    let mut acc = vec![0.0; env.feature_dim(h)];
    for (w, pi) in policy.components() {
        let d = &markov_state_occupancies(env, pi)[h];
        for (z, dz) in d.iter().enumerate() {
            let probs = if uniform_action {
                vec![1.0 / a_n as f64; a_n]
            } else {
                pi.latent_action_probs(env, h, z)
            };
            for (a, pa) in probs.iter().enumerate() {
                acc[z * a_n + a] += w * dz * pa;
            }
        }
    }
    acc
}

pub fn policy_value(env: &BlockMdp, policy: &Policy, rewards: &RewardTable) -> f64 {
    let a_n = env.num_actions();
    let mut total = 0.0;
    for (w, pi) in policy.components() {
        let occ = markov_state_occupancies(env, pi);
        for h in 0..env.horizon() {
            for (z, dz) in occ[h].iter().enumerate() {
                for (a, pa) in pi.latent_action_probs(env, h, z).iter().enumerate() {
                    total += w * dz * pa * rewards.mean(h, z * a_n + a);
                }
            }
        }
    }
    total
}

/// `λ_min(E[φ*φ*ᵀ])` at step `h`; with one-hot φ* this is the smallest joint occupancy.
pub fn coverage_lambda_min(env: &BlockMdp, policy: &Policy, h: usize, uniform_action: bool) -> f64 {
    let occ = latent_occupancy(env, policy, h, uniform_action);
    let cov = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(occ));
    linalg::lambda_min(&cov)
}
