//! Transfer pipelines: cross-sampled generative transfer, the online variant, baselines
//! and the lower-bound verifier.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SamplingMode, TaskTag, TransitionDataset};
use crate::envs::{LowerBoundFamily, TransferSuite};
use crate::error::{Error, Result};
use crate::explore::{eps_in_model, reward_free_rep_ucb, EpsConfig, ExploratoryPolicy, RepUcbConfig};
use crate::features::{
    aligned_off_diagonal_mass, confusion_matrix, mle_multitask, mle_single_task, span_model_error,
    target_span_model, EmissionEmbedding, FeatureMap, HypothesisClass, StepFit,
};
use crate::lsvi::{beta_deployment, lsvi_ucb, Evaluation, LsviConfig, RegretTrace, SolveRule};
use crate::mdp::{optimal_value, policy_value, BlockMdp, GreedyPolicy, Observation, Policy, World};
use crate::rng::{Rng, Streams};

/// Fraction of roll-ins whose last action is replaced by a uniform one.
pub const ROLL_IN_UNIFORM: f64 = 0.1;
/// Random latent policies used by the span diagnostic.
pub const SPAN_POLICIES: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub resets: usize,
    pub online_steps: usize,
    pub generative_calls: usize,
    /// Calls refused after access was revoked.
    pub refused: usize,
}

impl std::ops::Add for AccessCounts {
    type Output = AccessCounts;

    fn add(self, o: AccessCounts) -> AccessCounts {
        AccessCounts {
            resets: self.resets + o.resets,
            online_steps: self.online_steps + o.online_steps,
            generative_calls: self.generative_calls + o.generative_calls,
            refused: self.refused + o.refused,
        }
    }
}

/// Counted, revocable access to one source task.
pub struct SourceAccess<'a> {
    index: usize,
    env: &'a BlockMdp,
    resets: AtomicUsize,
    online: AtomicUsize,
    generative: AtomicUsize,
    refused: AtomicUsize,
    revoked: AtomicBool,
}

impl<'a> SourceAccess<'a> {
    pub fn new(index: usize, env: &'a BlockMdp) -> Self {
        Self {
            index,
            env,
            resets: AtomicUsize::new(0),
            online: AtomicUsize::new(0),
            generative: AtomicUsize::new(0),
            refused: AtomicUsize::new(0),
            revoked: AtomicBool::new(false),
        }
    }

    fn check(&self) -> Result<()> {
        if self.revoked.load(Ordering::SeqCst) {
            self.refused.fetch_add(1, Ordering::SeqCst);
            return Err(Error::AccessRevoked(self.index));
        }
        Ok(())
    }

    pub fn revoke(&self) {
        self.revoked.store(true, Ordering::SeqCst);
    }

    pub fn is_revoked(&self) -> bool {
        self.revoked.load(Ordering::SeqCst)
    }

    pub fn generative_step(&self, h: usize, s: &Observation, a: usize, rng: &mut Rng) -> Result<Observation> {
        self.check()?;
        self.generative.fetch_add(1, Ordering::Relaxed);
        self.env.generative_step(h, s, a, rng)
    }

    pub fn counts(&self) -> AccessCounts {
        AccessCounts {
            resets: self.resets.load(Ordering::SeqCst),
            online_steps: self.online.load(Ordering::SeqCst),
            generative_calls: self.generative.load(Ordering::SeqCst),
            refused: self.refused.load(Ordering::SeqCst),
        }
    }

    pub fn env(&self) -> &BlockMdp {
        self.env
    }
}

impl World for SourceAccess<'_> {
    fn horizon(&self) -> usize {
        self.env.horizon()
    }

    fn num_actions(&self) -> usize {
        self.env.num_actions()
    }

    fn num_codes(&self, h: usize) -> usize {
        self.env.num_codes(h)
    }

    fn reset(&self, rng: &mut Rng) -> Result<Observation> {
        self.check()?;
        self.resets.fetch_add(1, Ordering::Relaxed);
        World::reset(self.env, rng)
    }

    fn step(&self, h: usize, obs: &Observation, a: usize, rng: &mut Rng) -> Result<Observation> {
        self.check()?;
        self.online.fetch_add(1, Ordering::Relaxed);
        World::step(self.env, h, obs, a, rng)
    }
}

/// Rolls `policy` in `world` to step `h` and returns `(s_h, a_h)`, where `a_h` is the
/// policy's action or, with probability [`ROLL_IN_UNIFORM`], a uniform one.
fn roll_in_pair<W: World>(world: &W, policy: &GreedyPolicy, h: usize, rng: &mut Rng) -> Result<(Observation, usize)> {
    let mut obs = world.reset(rng)?;
    for t in 0..h {
        let a = policy.action(t, obs.code());
        obs = world.step(t, &obs, a, rng)?;
    }
    let a = if rng.random::<f64>() < ROLL_IN_UNIFORM {
        rng.random_range(0..world.num_actions())
    } else {
        policy.action(h, obs.code())
    };
    Ok((obs, a))
}

/// `n` tuples `(s̃,ã) ~ d^{π_i}_{i;h−1}`, `s ~ P_j(·|s̃,ã)`, `a ~ Unif`, `s′ ~ P_i(·|s,a)`;
/// at `h = 0`, `s ~ d_{j;0}`.
pub fn cross_sample(
    sources: &[SourceAccess<'_>],
    policies: &[ExploratoryPolicy],
    i: usize,
    j: usize,
    h: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<TransitionDataset> {
    let k = sources.len();
    if i >= k || j >= k || policies.len() != k {
        return Err(Error::MismatchedTasks { index: i.max(j), tasks: k });
    }
    let (si, sj) = (&sources[i], &sources[j]);
    let a_n = si.num_actions();
    let mut data = TransitionDataset::new(h, TaskTag::Pair { i, j }, SamplingMode::Cross);
    for _ in 0..n {
        let s = if h == 0 {
            sj.reset(rng)?
        } else {
            let pi = policies[i].sample_component(rng);
            let (s_tilde, a_tilde) = roll_in_pair(si, pi, h - 1, rng)?;
            sj.generative_step(h - 1, &s_tilde, a_tilde, rng)?
        };
        let a = rng.random_range(0..a_n);
        let s_next = si.generative_step(h, &s, a, rng)?;
        data.push(s.code(), a, s_next.code());
    }
    Ok(data)
}

/// `n` on-policy tuples `(s_h, a_h, s_{h+1})` per step from `π_k` in task `k`, with the
/// same roll-in action scheme as [`cross_sample`].
pub fn online_sample(
    source: &SourceAccess<'_>,
    policy: &ExploratoryPolicy,
    k: usize,
    h: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<TransitionDataset> {
    let mut data = TransitionDataset::new(h, TaskTag::Single(k), SamplingMode::OnPolicy);
    for _ in 0..n {
        let pi = policy.sample_component(rng);
        let (s, a) = roll_in_pair(source, pi, h, rng)?;
        let s_next = source.step(h, &s, a, rng)?;
        data.push(s.code(), a, s_next.code());
    }
    Ok(data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeployConfig {
    pub episodes: usize,
    pub delta: f64,
    /// Replaces `beta_deployment` when set.
    pub beta: Option<f64>,
    pub stop_when_solved: bool,
    pub solve: SolveRule,
}

impl DeployConfig {
    pub fn new(episodes: usize) -> Self {
        Self { episodes, delta: 0.1, beta: Some(1.0), stop_when_solved: true, solve: SolveRule::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Tuples per `(i, j, h)` cross dataset.
    pub n: usize,
    pub deploy: DeployConfig,
    pub eps: EpsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub algorithm: String,
    pub phi: Option<FeatureMap>,
    /// `mu[k][h]`.
    #[serde(default)]
    pub mu: Vec<Vec<EmissionEmbedding>>,
    pub fits: Vec<StepFit>,
    pub trace: RegretTrace,
    pub beta: f64,
    pub v_star: f64,
    pub deploy_budget: usize,
    pub deploy_episodes_run: usize,
    /// Deployment episode at which the solve streak started.
    pub episodes_to_solve: Option<usize>,
    /// Target-environment episodes before deployment (scratch baseline only).
    pub target_pretrain_episodes: usize,
    pub source_access: Vec<AccessCounts>,
    /// Source episodes spent on exploratory policy search.
    pub source_eps_episodes: Vec<usize>,
    pub sources_revoked: bool,
    /// `[h][latent][label]` on the target.
    pub confusion: Vec<Vec<Vec<f64>>>,
    pub off_diagonal: Vec<f64>,
    pub span_error: Option<f64>,
    /// Per-source `λ_min` of `ρ_h^{+1}` under φ*.
    pub source_coverage: Vec<Vec<f64>>,
}

impl TransferReport {
    /// Target episodes needed to solve: pre-training plus deployment, or `None` for ∞.
    pub fn target_episodes_to_solve(&self) -> Option<usize> {
        self.episodes_to_solve.map(|e| e + self.target_pretrain_episodes)
    }

    pub fn any_tie(&self) -> bool {
        self.fits.iter().any(|f| f.is_tied())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Deployment {
    trace: RegretTrace,
    beta: f64,
    v_star: f64,
    episodes_run: usize,
}

fn deploy(
    target: &BlockMdp,
    phi: &FeatureMap,
    alpha_bar: f64,
    cfg: &DeployConfig,
    streams: &Streams,
) -> Result<Deployment> {
    let horizon = target.horizon();
    let d = (0..horizon).map(|h| phi.dim(h)).max().unwrap_or(1);
    let beta = match cfg.beta {
        Some(b) => b,
        None => beta_deployment(d, horizon, cfg.episodes, cfg.delta, alpha_bar)?,
    };
    let rewards = target.rewards();
    let v_star = optimal_value(target, &rewards).value;
    let mut lcfg = LsviConfig::new(cfg.episodes, beta, horizon);
    lcfg.stop_when_solved = cfg.stop_when_solved;
    lcfg.solve = cfg.solve;
    let ev = Evaluation { env: target, rewards: &rewards, v_star, rng: streams.stream("deploy-eval") };
    let out = lsvi_ucb(target, phi, &target.code_rewards(), &lcfg, Some(ev), &mut streams.stream("deploy"))?;
    Ok(Deployment { trace: out.trace, beta, v_star, episodes_run: out.episodes_run })
}

fn diagnostics(target: &BlockMdp, phi: &FeatureMap) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let confusion: Vec<_> = (0..target.horizon()).map(|h| confusion_matrix(target, phi, h)).collect();
    let off = confusion.iter().map(|c| aligned_off_diagonal_mass(c)).collect();
    (confusion, off)
}

fn num_codes(env: &BlockMdp) -> Vec<usize> {
    (0..=env.horizon()).map(|h| env.num_codes(h)).collect()
}

/// Runs exploratory policy search in every source in parallel.
pub fn explore_sources(
    sources: &[SourceAccess<'_>],
    class: &HypothesisClass,
    cfg: &EpsConfig,
    streams: &Streams,
) -> Result<Vec<ExploratoryPolicy>> {
    sources
        .par_iter()
        .enumerate()
        .map(|(k, src)| {
            let mut rng = streams.stream(&format!("eps-{k}"));
            let (model, run) = reward_free_rep_ucb(src, class, &cfg.reward_free, &mut rng)?;
            let mut policy = eps_in_model(&model, cfg, run.episodes, &mut rng)?;
            policy.coverage(src.env())?;
            Ok(policy)
        })
        .collect()
}

fn span_diagnostic(
    suite: &TransferSuite,
    phi: &FeatureMap,
    mu: &[Vec<EmissionEmbedding>],
    streams: &Streams,
) -> Result<Option<f64>> {
    if suite.span.is_none() || !suite.target.is_decodable() {
        return Ok(None);
    }
    let mu_tilde = target_span_model(mu, suite.span.as_ref())?;
    let mut rng = streams.stream("span");
    Ok(Some(span_model_error(phi, &mu_tilde, &suite.target, SPAN_POLICIES, &mut rng)?))
}

/// Generative-access transfer: `K²` cross datasets, multi-task MLE, LSVI-UCB deployment.
/// With `policies = None`, exploratory policies come from EPS in each source.
pub fn rep_transfer_generative(
    suite: &TransferSuite,
    policies: Option<Vec<ExploratoryPolicy>>,
    class: &HypothesisClass,
    cfg: &TransferConfig,
    streams: &Streams,
) -> Result<TransferReport> {
    suite.check_shared_features()?;
    let k = suite.num_sources();
    let horizon = suite.horizon();
    let access: Vec<SourceAccess<'_>> = suite.sources.iter().enumerate().map(|(i, e)| SourceAccess::new(i, e)).collect();
    let policies = match policies {
        Some(p) => p,
        None => explore_sources(&access, class, &cfg.eps, &streams.child("explore"))?,
    };
    let eps_counts: Vec<AccessCounts> = access.iter().map(|a| a.counts()).collect();
    let triples: Vec<(usize, usize, usize)> =
        (0..k).flat_map(|i| (0..k).flat_map(move |j| (0..horizon).map(move |h| (i, j, h)))).collect();
    let datasets = triples
        .par_iter()
        .map(|&(i, j, h)| {
            let mut rng = streams.stream(&format!("cross-{i}-{j}-{h}"));
            cross_sample(&access, &policies, i, j, h, cfg.n, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = mle_multitask(&datasets, class, k, &num_codes(&suite.target))?;
    access.iter().for_each(|a| a.revoke());
    let dep = deploy(&suite.target, &fit.phi, suite.alpha_bar().unwrap_or(1.0), &cfg.deploy, streams)?;
    let (confusion, off_diagonal) = diagnostics(&suite.target, &fit.phi);
    let span_error = span_diagnostic(suite, &fit.phi, &fit.mu, streams)?;
    let source_access = access
        .iter()
        .zip(&eps_counts)
        .map(|(a, e)| {
            let c = a.counts();
            AccessCounts {
                resets: c.resets - e.resets,
                online_steps: c.online_steps - e.online_steps,
                generative_calls: c.generative_calls,
                refused: c.refused,
            }
        })
        .collect();
    Ok(TransferReport {
        algorithm: "G-RepTransfer".into(),
        phi: Some(fit.phi),
        mu: fit.mu,
        fits: fit.fits,
        episodes_to_solve: dep.trace.episodes_to_solve,
        trace: dep.trace,
        beta: dep.beta,
        v_star: dep.v_star,
        deploy_budget: cfg.deploy.episodes,
        deploy_episodes_run: dep.episodes_run,
        target_pretrain_episodes: 0,
        source_access,
        source_eps_episodes: policies.iter().map(|p| p.env_episodes).collect(),
        sources_revoked: access.iter().all(|a| a.is_revoked()),
        confusion,
        off_diagonal,
        span_error,
        source_coverage: policies.iter().map(|p| p.lambda_min_uniform_last.clone()).collect(),
    })
}

/// Per-task online sample size matching the generative total, `n·(K−1)·K` (`n` when `K = 1`).
pub fn online_samples_per_task(n: usize, k: usize) -> usize {
    n * ((k.saturating_sub(1)) * k).max(1)
}

/// Online-access transfer: EPS and on-policy datasets per source, multi-task MLE over the
/// `K` single-task datasets, then deployment.
pub fn rep_transfer_online(
    suite: &TransferSuite,
    class: &HypothesisClass,
    cfg: &TransferConfig,
    streams: &Streams,
) -> Result<TransferReport> {
    suite.check_shared_features()?;
    let k = suite.num_sources();
    let horizon = suite.horizon();
    let access: Vec<SourceAccess<'_>> = suite.sources.iter().enumerate().map(|(i, e)| SourceAccess::new(i, e)).collect();
    let policies = explore_sources(&access, class, &cfg.eps, &streams.child("explore"))?;
    let per_task = online_samples_per_task(cfg.n, k);
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..horizon).map(move |h| (i, h))).collect();
    let datasets = pairs
        .par_iter()
        .map(|&(i, h)| {
            let mut rng = streams.stream(&format!("online-{i}-{h}"));
            online_sample(&access[i], &policies[i], i, h, per_task, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = mle_multitask(&datasets, class, k, &num_codes(&suite.target))?;
    access.iter().for_each(|a| a.revoke());
    let dep = deploy(&suite.target, &fit.phi, suite.alpha_bar().unwrap_or(1.0), &cfg.deploy, streams)?;
    let (confusion, off_diagonal) = diagnostics(&suite.target, &fit.phi);
    let span_error = span_diagnostic(suite, &fit.phi, &fit.mu, streams)?;
    Ok(TransferReport {
        algorithm: "O-RepTransfer".into(),
        phi: Some(fit.phi),
        mu: fit.mu,
        fits: fit.fits,
        episodes_to_solve: dep.trace.episodes_to_solve,
        trace: dep.trace,
        beta: dep.beta,
        v_star: dep.v_star,
        deploy_budget: cfg.deploy.episodes,
        deploy_episodes_run: dep.episodes_run,
        target_pretrain_episodes: 0,
        source_access: access.iter().map(|a| a.counts()).collect(),
        source_eps_episodes: policies.iter().map(|p| p.env_episodes).collect(),
        sources_revoked: access.iter().all(|a| a.is_revoked()),
        confusion,
        off_diagonal,
        span_error,
        source_coverage: policies.iter().map(|p| p.lambda_min_uniform_last.clone()).collect(),
    })
}

/// Deployment with the ground-truth features of the target.
pub fn oracle_baseline(target: &BlockMdp, cfg: &DeployConfig, streams: &Streams) -> Result<TransferReport> {
    let phi = FeatureMap::ground_truth(target);
    let dep = deploy(target, &phi, 1.0, cfg, streams)?;
    let (confusion, off_diagonal) = diagnostics(target, &phi);
    Ok(TransferReport {
        algorithm: "oracle".into(),
        phi: Some(phi),
        mu: Vec::new(),
        fits: Vec::new(),
        episodes_to_solve: dep.trace.episodes_to_solve,
        trace: dep.trace,
        beta: dep.beta,
        v_star: dep.v_star,
        deploy_budget: cfg.episodes,
        deploy_episodes_run: dep.episodes_run,
        target_pretrain_episodes: 0,
        source_access: Vec::new(),
        source_eps_episodes: Vec::new(),
        sources_revoked: true,
        confusion,
        off_diagonal,
        span_error: None,
        source_coverage: Vec::new(),
    })
}

/// Single-task pipeline on the target alone: reward-free model learning, then deployment
/// with the learned decoder. Counts all target episodes.
pub fn scratch_baseline(
    target: &BlockMdp,
    class: &HypothesisClass,
    rf: &RepUcbConfig,
    cfg: &DeployConfig,
    streams: &Streams,
) -> Result<TransferReport> {
    let mut rng = streams.stream("scratch");
    let (model, run) = reward_free_rep_ucb(target, class, rf, &mut rng)?;
    let dep = deploy(target, &model.phi, 1.0, cfg, streams)?;
    let (confusion, off_diagonal) = diagnostics(target, &model.phi);
    Ok(TransferReport {
        algorithm: "scratch".into(),
        phi: Some(model.phi.clone()),
        mu: vec![model.mu.clone()],
        fits: run.decoder_fits.clone(),
        episodes_to_solve: dep.trace.episodes_to_solve,
        trace: dep.trace,
        beta: dep.beta,
        v_star: dep.v_star,
        deploy_budget: cfg.episodes,
        deploy_episodes_run: dep.episodes_run,
        target_pretrain_episodes: run.episodes,
        source_access: Vec::new(),
        source_eps_episodes: Vec::new(),
        sources_revoked: true,
        confusion,
        off_diagonal,
        span_error: None,
        source_coverage: Vec::new(),
    })
}

/// Features learned from one source alone, deployed on the target; the best source wins.
pub fn source_only_baseline(
    suite: &TransferSuite,
    class: &HypothesisClass,
    cfg: &TransferConfig,
    streams: &Streams,
) -> Result<TransferReport> {
    let k = suite.num_sources();
    let access: Vec<SourceAccess<'_>> = suite.sources.iter().enumerate().map(|(i, e)| SourceAccess::new(i, e)).collect();
    let policies = explore_sources(&access, class, &cfg.eps, &streams.child("explore"))?;
    let per_task = online_samples_per_task(cfg.n, k);
    let mut best: Option<TransferReport> = None;
    for (i, src) in access.iter().enumerate() {
        let datasets = (0..suite.horizon())
            .map(|h| {
                let mut rng = streams.stream(&format!("source-only-{i}-{h}"));
                online_sample(src, &policies[i], 0, h, per_task, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let (model, fits) = mle_single_task(&datasets, class, &num_codes(&suite.target))?;
        let dep = deploy(&suite.target, &model.phi, 1.0, &cfg.deploy, &streams.child(&format!("source-{i}")))?;
        let (confusion, off_diagonal) = diagnostics(&suite.target, &model.phi);
        let report = TransferReport {
            algorithm: "source-only".into(),
            phi: Some(model.phi.clone()),
            mu: vec![model.mu.clone()],
            fits,
            episodes_to_solve: dep.trace.episodes_to_solve,
            trace: dep.trace,
            beta: dep.beta,
            v_star: dep.v_star,
            deploy_budget: cfg.deploy.episodes,
            deploy_episodes_run: dep.episodes_run,
            target_pretrain_episodes: 0,
            source_access: Vec::new(),
            source_eps_episodes: policies.iter().map(|p| p.env_episodes).collect(),
            sources_revoked: true,
            confusion,
            off_diagonal,
            span_error: None,
            source_coverage: policies.iter().map(|p| p.lambda_min_uniform_last.clone()).collect(),
        };
        let better = match (&best, report.episodes_to_solve) {
            (None, _) => true,
            (Some(b), Some(e)) => b.episodes_to_solve.is_none_or(|x| e < x),
            (Some(_), None) => false,
        };
        if better {
            best = Some(report);
        }
    }
    let mut best = best.ok_or(Error::InvalidParameter("no sources".into()))?;
    best.source_access = access.iter().map(|a| a.counts()).collect();
    Ok(best)
}

/// Result of the exhaustive fingerprint-policy search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub v_star: f64,
    pub best_value: f64,
    pub gap: f64,
    pub fingerprints_per_step: Vec<usize>,
    pub policies_evaluated: usize,
}

/// `V*` minus the best value over policies that see a state only through its
/// `({φ̂(s,a)}_a, {r(s,a)}_a)` fingerprint.
pub fn verify_lower_bound(family: &LowerBoundFamily, phi_hat: &FeatureMap) -> Result<LowerBoundCheck> {
    let target = &family.suite.target;
    fingerprint_gap(target, phi_hat)
}

pub fn fingerprint_gap(target: &BlockMdp, phi_hat: &FeatureMap) -> Result<LowerBoundCheck> {
    phi_hat.check_world(target)?;
    let horizon = target.horizon();
    let a_n = target.num_actions();
    let rewards = target.code_rewards();
    // Fingerprint id for every code at every step.
    let mut fp_of: Vec<Vec<usize>> = Vec::with_capacity(horizon);
    let mut counts = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut ids: BTreeMap<(usize, Vec<u64>), usize> = BTreeMap::new();
        let mut row = Vec::with_capacity(target.num_codes(h));
        for s in 0..target.num_codes(h) {
            let key = (phi_hat.label(h, s)?, rewards.row(h, s).iter().map(|r| r.to_bits()).collect());
            let next = ids.len();
            row.push(*ids.entry(key).or_insert(next));
        }
        counts.push(ids.len());
        fp_of.push(row);
    }
    let total: usize = counts.iter().map(|c| a_n.pow(*c as u32)).product();
    if total > 1 << 22 {
        return Err(Error::InvalidParameter(format!("{total} fingerprint policies is too many to enumerate")));
    }
    let v_star = optimal_value(target, &target.rewards()).value;
    let mut best = f64::NEG_INFINITY;
    let env_rewards = target.rewards();
    for idx in 0..total {
        let mut rest = idx;
        let mut q = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let mut choice = Vec::with_capacity(counts[h]);
            for _ in 0..counts[h] {
                choice.push(rest % a_n);
                rest /= a_n;
            }
            q.push(
                (0..target.num_codes(h))
                    .map(|s| {
                        let mut row = vec![0.0; a_n];
                        row[choice[fp_of[h][s]]] = 1.0;
                        row
                    })
                    .collect(),
            );
        }
        let v = policy_value(target, &Policy::greedy(q), &env_rewards);
        best = best.max(v);
    }
    Ok(LowerBoundCheck {
        v_star,
        best_value: best,
        gap: v_star - best,
        fingerprints_per_step: counts,
        policies_evaluated: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_lower_bound_family, build_shared_emission_suite};
    use crate::mdp::{EmissionMode, MarkovPolicy};

    #[test]
    fn lower_bound_gaps() {
        let fam = build_lower_bound_family();
        let good = FeatureMap::from_labels(2, &fam.psi_correct, &[2, 2]).unwrap();
        let bad = FeatureMap::from_labels(2, &fam.psi_permuted, &[2, 2]).unwrap();
        let flat = FeatureMap::from_labels(2, &[vec![0; 4], vec![0; 4]], &[2, 2]).unwrap();
        assert!(verify_lower_bound(&fam, &good).unwrap().gap.abs() < 1e-12);
        assert!((verify_lower_bound(&fam, &bad).unwrap().gap - 0.5).abs() < 1e-12);
        assert!((verify_lower_bound(&fam, &flat).unwrap().gap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn revoked_access_refuses() {
        let fam = build_lower_bound_family();
        let acc = SourceAccess::new(0, &fam.suite.sources[0]);
        let mut rng = Streams::new(0).policy();
        let s = acc.reset(&mut rng).unwrap();
        acc.revoke();
        assert!(matches!(acc.generative_step(0, &s, 0, &mut rng), Err(Error::AccessRevoked(0))));
        assert_eq!(acc.counts().refused, 1);
    }

    #[test]
    fn cross_sample_counts() {
        let suite = build_shared_emission_suite(2, 3, 2, EmissionMode::Decodable, &mut Streams::new(0).env()).unwrap();
        let access: Vec<_> = suite.sources.iter().enumerate().map(|(i, e)| SourceAccess::new(i, e)).collect();
        let pol = ExploratoryPolicy::from_policy(GreedyPolicy { q: vec![vec![vec![0.0; 2]; 3]; 3] });
        let policies = vec![pol.clone(), pol];
        let mut rng = Streams::new(0).learner();
        let mut total = 0;
        for i in 0..2 {
            for j in 0..2 {
                for h in 0..3 {
                    total += cross_sample(&access, &policies, i, j, h, 7, &mut rng).unwrap().len();
                }
            }
        }
        assert_eq!(total, 2 * 2 * 3 * 7);
        // As generator: K·H·n calls; as planting task: K·(H−1)·n calls.
        for a in &access {
            assert_eq!(a.counts().generative_calls, 2 * 3 * 7 + 2 * 2 * 7);
        }
        let _ = MarkovPolicy::Uniform { num_actions: 2 };
    }
}
