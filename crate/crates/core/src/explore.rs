//! Reward-free model learning with UCB bonuses and exploratory policy search.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    mle_bound_zeta, select_decoder, EmissionEmbedding, FeatureMap, HypothesisClass, LinearMdpModel, StepCounts,
    StepFit, SMOOTHING,
};
use crate::lsvi::{beta_eps, lsvi_ucb, LsviConfig};
use crate::mdp::{
    argmax, coverage_lambda_min, BlockMdp, CodeRewards, GreedyPolicy, MarkovPolicy, Observation, Policy, World,
};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepUcbConfig {
    pub episodes: usize,
    pub delta: f64,
    pub lambda_scale: f64,
    pub alpha_scale: f64,
    /// Full decoder reselection period; defaults to `⌈N/20⌉`.
    pub reselect_every: Option<usize>,
}

impl RepUcbConfig {
    pub fn new(episodes: usize) -> Self {
        Self { episodes, delta: 0.1, lambda_scale: 1.0, alpha_scale: 1.0, reselect_every: None }
    }
}

/// `λ_n = d·ln(|M|·n·H/δ)`.
pub fn lambda_n(d: usize, ln_model_size: f64, n: usize, horizon: usize, delta: f64) -> f64 {
    (d as f64 * (ln_model_size + (n.max(1) as f64 * horizon as f64 / delta).ln())).max(1e-12)
}

/// `α_n = √(n·A²·ζ_n + λ_n·d)`.
pub fn alpha_n(n: usize, num_actions: usize, zeta: f64, lambda: f64, d: usize) -> f64 {
    let a = num_actions as f64;
    (n as f64 * a * a * zeta + lambda * d as f64).sqrt()
}

/// Per-iteration record of a reward-free run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepUcbIteration {
    pub n: usize,
    pub value: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub max_bonus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepUcbRun {
    pub iterations: Vec<RepUcbIteration>,
    pub selected: usize,
    /// Iterations, each counted as one episode of environment interaction.
    pub episodes: usize,
    /// Environment resets actually issued (one roll-in per step per iteration).
    pub resets: usize,
    pub dataset_sizes: Vec<usize>,
    pub shifted_dataset_sizes: Vec<usize>,
    pub decoder_fits: Vec<StepFit>,
    /// Times the decoder argmax changed at a reselection.
    pub decoder_switches: usize,
}

impl RepUcbRun {
    pub fn selected_value(&self) -> f64 {
        self.iterations[self.selected].value
    }
}

/// Exact DP in a learned model over its finite support, with an additive per-code reward.
pub fn plan_in_model(model: &LinearMdpModel, reward: &CodeRewards) -> Result<(f64, GreedyPolicy)> {
    let horizon = model.horizon();
    let a_n = model.num_actions();
    let mut q = vec![Vec::new(); horizon];
    let mut v_next = vec![0.0; model.num_codes[horizon]];
    for h in (0..horizon).rev() {
        let mu = &model.mu[h];
        if mu.support.is_empty() {
            return Err(Error::PlanningSupportEmpty(h));
        }
        let n = model.num_codes[h];
        let mut qh = vec![vec![0.0; a_n]; n];
        let mut vh = vec![0.0; n];
        for s in 0..n {
            for a in 0..a_n {
                let row = &mu.table[model.phi.index(h, s, a)?];
                let cont: f64 = mu.support.iter().zip(row).map(|(c, p)| p * v_next[*c]).sum();
                qh[s][a] = reward.get(h, s, a) + cont;
            }
            vh[s] = qh[s][argmax(&qh[s])];
        }
        q[h] = qh;
        v_next = vh;
    }
    let value = model.initial.iter().zip(&v_next).map(|(p, v)| p * v).sum();
    Ok((value, GreedyPolicy { q }))
}

/// Rolls in `policy` for `h` steps from a fresh reset.
fn roll_in<W: World>(world: &W, policy: &GreedyPolicy, h: usize, rng: &mut Rng) -> Result<Observation> {
    let mut obs = world.reset(rng)?;
    for t in 0..h {
        let a = policy.action(t, obs.code());
        obs = world.step(t, &obs, a, rng)?;
    }
    Ok(obs)
}

struct StepState {
    data: StepCounts,
    shifted: StepCounts,
    decoder: usize,
}

/// Reward-free Rep-UCB on `world`; returns the model of the selected iteration.
pub fn reward_free_rep_ucb<W: World>(
    world: &W,
    class: &HypothesisClass,
    cfg: &RepUcbConfig,
    rng: &mut Rng,
) -> Result<(LinearMdpModel, RepUcbRun)> {
    let n_total = cfg.episodes;
    if n_total < 2 {
        return Err(Error::InvalidParameter("reward-free exploration needs N >= 2".into()));
    }
    let horizon = world.horizon();
    let a_n = world.num_actions();
    if class.horizon() != horizon || class.num_actions != a_n {
        return Err(Error::DimensionMismatch("class does not match the environment".into()));
    }
    let num_codes: Vec<usize> = (0..=horizon).map(|h| world.num_codes(h)).collect();
    let reselect = cfg.reselect_every.unwrap_or(n_total.div_ceil(20)).max(1);
    let ln_step = (class.max_step_size() as f64).ln();
    let ln_model = 2.0 * ln_step;
    let d = (0..horizon)
        .map(|h| class.steps[h].candidates[0].num_labels * a_n)
        .max()
        .unwrap_or(1);
    let mut steps: Vec<StepState> = (0..horizon)
        .map(|h| StepState {
            data: StepCounts::new(num_codes[h], a_n, num_codes[h + 1]),
            shifted: StepCounts::new(num_codes[h], a_n, num_codes[h + 1]),
            decoder: 0,
        })
        .collect();
    let mut initial = vec![0.0; num_codes[0]];
    let mut policy = GreedyPolicy { q: Vec::new() };
    let mut uniform_start = true;
    let mut iterations = Vec::with_capacity(n_total);
    let mut best: Option<(usize, f64, LinearMdpModel)> = None;
    let mut fits: Vec<Option<StepFit>> = vec![None; horizon];
    let mut switches = 0;
    let mut resets = 0;
    let threshold = n_total.div_ceil(2);
    for n in 0..n_total {
        // Data collection from π̂_{n−1}: one roll-in per step gives a D_h tuple and,
        // continuing one more uniform action, a D′_{h+1} tuple.
        for h in 0..horizon {
            let s = if uniform_start {
                let mut obs = world.reset(rng)?;
                for t in 0..h {
                    obs = world.step(t, &obs, rng.random_range(0..a_n), rng)?;
                }
                obs
            } else {
                roll_in(world, &policy, h, rng)?
            };
            resets += 1;
            if h == 0 {
                initial[s.code()] += 1.0;
            }
            let a = rng.random_range(0..a_n);
            let s2 = world.step(h, &s, a, rng)?;
            steps[h].data.add(s.code(), a, s2.code(), 1.0)?;
            if h + 1 < horizon {
                let a2 = rng.random_range(0..a_n);
                let s3 = world.step(h + 1, &s2, a2, rng)?;
                steps[h + 1].shifted.add(s2.code(), a2, s3.code(), 1.0)?;
            }
        }
        // MLE on D ∪ D′.
        let mut mus = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let mut all = steps[h].data.clone();
            for (x, y) in all.counts.iter_mut().zip(&steps[h].shifted.counts) {
                *x += y;
            }
            if n % reselect == 0 || n + 1 == n_total || fits[h].is_none() {
                let fit = select_decoder(&class.steps[h], std::slice::from_ref(&all), h)?;
                if fits[h].is_some() && fit.selected != steps[h].decoder {
                    switches += 1;
                }
                steps[h].decoder = fit.selected;
                fits[h] = Some(fit);
            }
            mus.push(EmissionEmbedding::from_counts(&all, &class.steps[h].candidates[steps[h].decoder], SMOOTHING));
        }
        let phi = FeatureMap::new(
            a_n,
            steps.iter().enumerate().map(|(h, st)| class.steps[h].candidates[st.decoder].clone()).collect(),
        );
        let total0: f64 = initial.iter().sum();
        let model = LinearMdpModel {
            phi: phi.clone(),
            mu: mus,
            initial: initial.iter().map(|x| x / total0).collect(),
            num_codes: num_codes.clone(),
        };
        // Bonus α_n‖φ̂‖_{Σ̂⁻¹}; with one-hot φ̂, Σ̂ is diagonal in (label, a) counts over D.
        let size = n + 1;
        let lambda = cfg.lambda_scale * lambda_n(d, ln_model, size, horizon, cfg.delta);
        let zeta = mle_bound_zeta(size, ln_step, ln_step, 1, cfg.delta)?;
        let alpha = cfg.alpha_scale * alpha_n(size, a_n, zeta, lambda, d);
        let mut bonus = CodeRewards::zero(world);
        let mut max_bonus: f64 = 0.0;
        for h in 0..horizon {
            let dec = &phi.steps[h];
            let mut diag = vec![0.0; phi.dim(h)];
            for s in 0..num_codes[h] {
                for a in 0..a_n {
                    let row: f64 = (0..num_codes[h + 1]).map(|c| steps[h].data.get(s, a, c)).sum();
                    diag[dec.labels[s] * a_n + a] += row;
                }
            }
            for s in 0..num_codes[h] {
                for a in 0..a_n {
                    let b = alpha / (diag[dec.labels[s] * a_n + a] + lambda).sqrt();
                    max_bonus = max_bonus.max(b);
                    bonus.table[h][s * a_n + a] = b;
                }
            }
        }
        let (value, next_policy) = plan_in_model(&model, &bonus)?;
        iterations.push(RepUcbIteration { n, value, alpha, lambda, max_bonus });
        if n >= threshold && best.as_ref().is_none_or(|(_, v, _)| value < *v) {
            best = Some((n, value, model));
        }
        policy = next_policy;
        uniform_start = false;
    }
    let (selected, _, model) = best.expect("N >= 2 leaves a candidate");
    let run = RepUcbRun {
        iterations,
        selected,
        episodes: n_total,
        resets,
        dataset_sizes: steps.iter().map(|s| s.data.total() as usize).collect(),
        shifted_dataset_sizes: steps.iter().map(|s| s.shifted.total() as usize).collect(),
        decoder_fits: fits.into_iter().map(|f| f.expect("fit at every step")).collect(),
        decoder_switches: switches,
    };
    Ok((model, run))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsConfig {
    pub reward_free: RepUcbConfig,
    pub lsvi_episodes: usize,
    pub delta: f64,
    /// Replaces `beta_eps` when set.
    pub beta: Option<f64>,
}

impl EpsConfig {
    pub fn new(rf_episodes: usize, lsvi_episodes: usize) -> Self {
        Self { reward_free: RepUcbConfig::new(rf_episodes), lsvi_episodes, delta: 0.1, beta: None }
    }
}

/// Uniform mixture over the LSVI-UCB episode policies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExploratoryPolicy {
    pub q_tables: Vec<GreedyPolicy>,
    pub beta: f64,
    /// `λ_min` of `E_ρ[φ*φ*ᵀ]` per step (diagnostic).
    pub lambda_min: Vec<f64>,
    /// `λ_min` under `ρ_h^{+1}`: roll in with ρ, then one uniform action.
    pub lambda_min_uniform_last: Vec<f64>,
    /// True-environment episodes consumed (the reward-free phase only).
    pub env_episodes: usize,
}

impl ExploratoryPolicy {
    pub fn mixture(&self) -> Result<Policy> {
        Policy::uniform_mixture(self.q_tables.iter().cloned().map(MarkovPolicy::Greedy).collect())
    }

    /// Samples the component policy of one episode.
    pub fn sample_component(&self, rng: &mut Rng) -> &GreedyPolicy {
        &self.q_tables[rng.random_range(0..self.q_tables.len())]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn coverage(&mut self, env: &BlockMdp) -> Result<()> {
        let rho = self.mixture()?;
        self.lambda_min = (0..env.horizon()).map(|h| coverage_lambda_min(env, &rho, h, false)).collect();
        self.lambda_min_uniform_last =
            (0..env.horizon()).map(|h| coverage_lambda_min(env, &rho, h, true)).collect();
        Ok(())
    }

    /// A single-policy "mixture" for oracle use.
    pub fn from_policy(policy: GreedyPolicy) -> Self {
        Self {
            q_tables: vec![policy],
            beta: 0.0,
            lambda_min: Vec::new(),
            lambda_min_uniform_last: Vec::new(),
            env_episodes: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpsOutcome {
    pub policy: ExploratoryPolicy,
    pub model: LinearMdpModel,
    pub run: RepUcbRun,
}

/// Reward-free model learning followed by zero-reward LSVI-UCB inside the learned model.
pub fn eps(env: &BlockMdp, class: &HypothesisClass, cfg: &EpsConfig, rng: &mut Rng) -> Result<EpsOutcome> {
    let (model, run) = reward_free_rep_ucb(env, class, &cfg.reward_free, rng)?;
    let mut policy = eps_in_model(&model, cfg, run.episodes, rng)?;
    policy.coverage(env)?;
    Ok(EpsOutcome { policy, model, run })
}

/// Zero-reward LSVI-UCB with uniform last actions inside a learned model.
pub fn eps_in_model(
    model: &LinearMdpModel,
    cfg: &EpsConfig,
    env_episodes: usize,
    rng: &mut Rng,
) -> Result<ExploratoryPolicy> {
    let horizon = model.horizon();
    let d = (0..horizon).map(|h| model.phi.dim(h)).max().unwrap_or(1);
    let beta = match cfg.beta {
        Some(b) => b,
        None => beta_eps(d, horizon, cfg.lsvi_episodes, cfg.delta)?,
    };
    let mut lcfg = LsviConfig::new(cfg.lsvi_episodes, beta, horizon);
    lcfg.uniform_actions = true;
    lcfg.keep_policies = true;
    let zero = CodeRewards::zero(model);
    let out = lsvi_ucb(model, &model.phi, &zero, &lcfg, None, rng)?;
    Ok(ExploratoryPolicy {
        q_tables: out.policies,
        beta,
        lambda_min: Vec::new(),
        lambda_min_uniform_last: Vec::new(),
        env_episodes,
    })
}
