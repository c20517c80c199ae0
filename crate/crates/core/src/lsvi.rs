//! LSVI-UCB: least-squares value iteration with elliptical bonuses.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::Covariance;
use crate::mdp::{policy_value, BlockMdp, CodeRewards, GreedyPolicy, MarkovPolicy, Policy, RewardTable, World};
use crate::rng::Rng;

pub const REINVERT_EVERY: usize = 512;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")))
    }
}

/// `H√d + ᾱ·d·H·√ln(dHT/δ)`.
pub fn beta_deployment(d: usize, horizon: usize, t: usize, delta: f64, alpha_bar: f64) -> Result<f64> {
    check_delta(delta)?;
    let (d, h) = (d as f64, horizon as f64);
    let log = (d * h * t.max(1) as f64 / delta).ln().max(0.0);
    Ok(h * d.sqrt() + alpha_bar * d * h * log.sqrt())
}

/// `d·H·√ln(dHN/δ)`.
pub fn beta_eps(d: usize, horizon: usize, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let (d, h) = (d as f64, horizon as f64);
    Ok(d * h * (d * h * n.max(1) as f64 / delta).ln().max(0.0).sqrt())
}

/// Checkpoint rule for "solving" a task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRule {
    pub every: usize,
    pub runs: usize,
    pub streak: usize,
    pub tolerance: f64,
}

impl Default for SolveRule {
    fn default() -> Self {
        Self { every: 50, runs: 50, streak: 5, tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsviConfig {
    pub episodes: usize,
    pub beta: f64,
    /// Value clip `M_V`.
    pub clip: f64,
    pub uniform_actions: bool,
    /// Keep every episode's greedy Q-table (needed for the returned mixture).
    pub keep_policies: bool,
    pub stop_when_solved: bool,
    pub solve: SolveRule,
}

impl LsviConfig {
    pub fn new(episodes: usize, beta: f64, horizon: usize) -> Self {
        Self {
            episodes,
            beta,
            clip: horizon as f64,
            uniform_actions: false,
            keep_policies: false,
            stop_when_solved: false,
            solve: SolveRule::default(),
        }
    }
}

/// Ground truth used to score episodes: exact values and Monte-Carlo checkpoints.
pub struct Evaluation<'a> {
    pub env: &'a BlockMdp,
    pub rewards: &'a RewardTable,
    pub v_star: f64,
    pub rng: Rng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub value: f64,
    pub cumulative_regret: f64,
    pub max_bonus: f64,
    pub clip_hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub episode: usize,
    pub mean_return: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub v_star: f64,
    pub rows: Vec<TraceRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub episodes_to_solve: Option<usize>,
}

impl RegretTrace {
    pub fn cumulative_regret(&self) -> f64 {
        self.rows.last().map(|r| r.cumulative_regret).unwrap_or(0.0)
    }

    /// Cumulative regret after the first `t` episodes.
    pub fn regret_at(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.rows.get(t - 1).or(self.rows.last()).map(|r| r.cumulative_regret).unwrap_or(0.0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv_to(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(self.to_csv_string()?.as_bytes())?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LsviOutcome {
    pub policies: Vec<GreedyPolicy>,
    pub final_policy: GreedyPolicy,
    pub trace: RegretTrace,
    pub covariances: Vec<DMatrix<f64>>,
    pub episodes_run: usize,
    /// Steps requested from the world, including fresh uniform-action draws.
    pub world_steps: usize,
}

impl LsviOutcome {
    /// Uniform mixture over the executed episode policies.
    pub fn mixture(&self) -> Result<Policy> {
        if self.policies.is_empty() {
            return Ok(Policy::greedy(self.final_policy.q.clone()));
        }
        Policy::uniform_mixture(self.policies.iter().cloned().map(MarkovPolicy::Greedy).collect())
    }
}

struct StepData {
    cov: Covariance,
    /// Dense `(s, a, s′)` counts.
    counts: Vec<f64>,
    num_codes: usize,
    num_next: usize,
}

struct Backward {
    q: Vec<Vec<Vec<f64>>>,
    max_bonus: f64,
    clip_hits: usize,
}

fn backward_pass(
    data: &[StepData],
    phi: &FeatureMap,
    rewards: &CodeRewards,
    cfg: &LsviConfig,
    feats: &[Vec<Vec<DVector<f64>>>],
) -> Backward {
    let horizon = data.len();
    let a_n = phi.num_actions;
    let mut q = vec![Vec::new(); horizon];
    let mut v_next: Vec<f64> = vec![0.0; data.last().map(|d| d.num_next).unwrap_or(0)];
    let mut max_bonus: f64 = 0.0;
    let mut clip_hits = 0;
    for h in (0..horizon).rev() {
        let st = &data[h];
        let d = phi.dim(h);
        let mut y = DVector::<f64>::zeros(d);
        for s in 0..st.num_codes {
            for a in 0..a_n {
                let base = (s * a_n + a) * st.num_next;
                let target: f64 = st.counts[base..base + st.num_next]
                    .iter()
                    .zip(&v_next)
                    .map(|(n, v)| n * v)
                    .sum();
                if target != 0.0 {
                    y.axpy(target, &feats[h][s][a], 1.0);
                }
            }
        }
        let w = st.cov.inverse() * y;
        let mut qh = vec![vec![0.0; a_n]; st.num_codes];
        let mut vh = vec![0.0; st.num_codes];
        for s in 0..st.num_codes {
            for a in 0..a_n {
                let f = &feats[h][s][a];
                let b = st.cov.bonus(f);
                max_bonus = max_bonus.max(b);
                qh[s][a] = w.dot(f) + rewards.get(h, s, a) + cfg.beta * b;
            }
            let best = qh[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if best > cfg.clip {
                clip_hits += 1;
            }
            vh[s] = best.min(cfg.clip);
        }
        q[h] = qh;
        v_next = vh;
    }
    Backward { q, max_bonus, clip_hits }
}

fn monte_carlo_return(env: &BlockMdp, policy: &Policy, runs: usize, rng: &mut Rng) -> f64 {
    (0..runs).map(|_| env.sample_episode(policy, rng).total_reward()).sum::<f64>() / runs as f64
}

/// Runs LSVI-UCB for `cfg.episodes` episodes in `world` with features `phi` and the
/// known reward `rewards`.
pub fn lsvi_ucb<W: World>(
    world: &W,
    phi: &FeatureMap,
    rewards: &CodeRewards,
    cfg: &LsviConfig,
    mut eval: Option<Evaluation<'_>>,
    rng: &mut Rng,
) -> Result<LsviOutcome> {
    if !(cfg.beta >= 0.0) || cfg.episodes == 0 {
        return Err(Error::InvalidParameter("need beta >= 0 and at least one episode".into()));
    }
    phi.check_world(world)?;
    let horizon = world.horizon();
    let a_n = world.num_actions();
    let feats: Vec<Vec<Vec<DVector<f64>>>> = (0..horizon)
        .map(|h| {
            (0..world.num_codes(h))
                .map(|s| (0..a_n).map(|a| phi.phi(h, s, a)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data: Vec<StepData> = (0..horizon)
        .map(|h| StepData {
            cov: Covariance::identity(phi.dim(h), REINVERT_EVERY),
            counts: vec![0.0; world.num_codes(h) * a_n * world.num_codes(h + 1)],
            num_codes: world.num_codes(h),
            num_next: world.num_codes(h + 1),
        })
        .collect();
    let mut trace = RegretTrace { v_star: eval.as_ref().map(|e| e.v_star).unwrap_or(0.0), ..Default::default() };
    let mut policies = Vec::new();
    let mut cumulative = 0.0;
    let mut streak = 0usize;
    let mut world_steps = 0usize;
    let mut last = None;
    let mut episodes_run = 0;
    for e in 0..cfg.episodes {
        let bw = backward_pass(&data, phi, rewards, cfg, &feats);
        let greedy = GreedyPolicy { q: bw.q };
        if let Some(ev) = eval.as_mut() {
            let as_policy = Policy::Markov(MarkovPolicy::Greedy(greedy.clone()));
            let value = policy_value(ev.env, &as_policy, ev.rewards);
            cumulative += (ev.v_star - value).max(0.0);
            trace.rows.push(TraceRow {
                episode: e,
                value,
                cumulative_regret: cumulative,
                max_bonus: bw.max_bonus,
                clip_hits: bw.clip_hits,
            });
            if e % cfg.solve.every == 0 {
                let mean = monte_carlo_return(ev.env, &as_policy, cfg.solve.runs, &mut ev.rng);
                trace.checkpoints.push(Checkpoint { episode: e, mean_return: mean });
                if mean >= ev.v_star - cfg.solve.tolerance {
                    streak += 1;
                    if streak == cfg.solve.streak && trace.episodes_to_solve.is_none() {
                        trace.episodes_to_solve = Some(e - (cfg.solve.streak - 1) * cfg.solve.every);
                    }
                } else {
                    streak = 0;
                }
            }
        }
        // Roll out π_e.
        let mut obs = world.reset(rng)?;
        for h in 0..horizon {
            let a = greedy.action(h, obs.code());
            let next = world.step(h, &obs, a, rng)?;
            world_steps += 1;
            let (a_logged, s_next) = if cfg.uniform_actions {
                let a_u = rng.random_range(0..a_n);
                let fresh = world.step(h, &obs, a_u, rng)?;
                world_steps += 1;
                (a_u, fresh.code())
            } else {
                (a, next.code())
            };
            let st = &mut data[h];
            let s = obs.code();
            st.counts[(s * a_n + a_logged) * st.num_next + s_next] += 1.0;
            st.cov.update(&feats[h][s][a_logged]);
            obs = next;
        }
        if cfg.keep_policies {
            policies.push(greedy.clone());
        }
        last = Some(greedy);
        episodes_run = e + 1;
        if cfg.stop_when_solved && trace.episodes_to_solve.is_some() {
            break;
        }
    }
    Ok(LsviOutcome {
        policies,
        final_policy: last.expect("at least one episode"),
        trace,
        covariances: data.iter().map(|d| d.cov.matrix().clone()).collect(),
        episodes_run,
        world_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_comblock;
    use crate::mdp::{optimal_value, EmissionMode};
    use crate::rng::Streams;

    #[test]
    fn beta_closed_forms() {
        assert!((beta_deployment(4, 3, 10, 0.1, 0.0).unwrap() - 6.0).abs() < 1e-12);
        let b = beta_deployment(1, 1, 1, (-1f64).exp(), 2.0).unwrap();
        assert!((b - 3.0).abs() < 1e-12);
        assert!(beta_deployment(4, 3, 100, 0.1, 1.0).unwrap() >= beta_deployment(4, 3, 10, 0.1, 1.0).unwrap());
        assert!(beta_eps(2, 2, 5, 2.0).is_err());
    }

    #[test]
    fn first_episode_is_reward_plus_bonus() {
        let env = build_comblock(3, 4, EmissionMode::Decodable, &mut Streams::new(0).env()).unwrap();
        let phi = FeatureMap::ground_truth(&env);
        let cfg = LsviConfig::new(1, 0.5, 3);
        let out = lsvi_ucb(&env, &phi, &env.code_rewards(), &cfg, None, &mut Streams::new(0).policy()).unwrap();
        let rw = env.code_rewards();
        for h in 0..3 {
            for s in 0..env.num_codes(h) {
                for a in 0..4 {
                    let expect = (rw.get(h, s, a) + 0.5).min(3.0);
                    assert!((out.final_policy.q[h][s][a] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_reward_zero_beta_regret_is_linear() {
        let env = build_comblock(3, 4, EmissionMode::Decodable, &mut Streams::new(1).env()).unwrap();
        let phi = FeatureMap::ground_truth(&env);
        let zero = RewardTable::zero(&env);
        let v_star = optimal_value(&env, &env.rewards()).value;
        let cfg = LsviConfig::new(20, 0.0, 3);
        let ev = Evaluation { env: &env, rewards: &zero, v_star, rng: Streams::new(1).stream("eval") };
        let z = CodeRewards::zero(&env);
        let out = lsvi_ucb(&env, &phi, &z, &cfg, Some(ev), &mut Streams::new(1).policy()).unwrap();
        assert_eq!(out.trace.rows.len(), 20);
        assert_eq!(out.world_steps, 60);
        for (e, row) in out.trace.rows.iter().enumerate() {
            assert_eq!(row.value, 0.0);
            assert!((row.cumulative_regret - v_star * (e + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_replays_data() {
        let env = build_comblock(2, 2, EmissionMode::Decodable, &mut Streams::new(2).env()).unwrap();
        let phi = FeatureMap::ground_truth(&env);
        let cfg = LsviConfig::new(30, 1.0, 2);
        let out = lsvi_ucb(&env, &phi, &env.code_rewards(), &cfg, None, &mut Streams::new(2).policy()).unwrap();
        for c in &out.covariances {
            // identity plus one outer product per episode
            assert!((c.trace() - (c.nrows() as f64 + 30.0)).abs() < 1e-9);
        }
    }
}
