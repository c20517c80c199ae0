//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line with the measured
//! quantities before asserting.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use reptransfer::dataset::{SamplingMode, TaskTag, TransitionDataset};
use reptransfer::envs::{
    build_comblock, build_lower_bound_family, build_mixture_target, build_partitioned_suite,
    build_random_block_mdp, build_shared_emission_suite,
};
use reptransfer::explore::{eps, EpsConfig, RepUcbConfig};
use reptransfer::features::{mle_single_task, model_tv_error, FeatureMap, HypothesisClass};
use reptransfer::linalg::{invert_spd, rank_one_update};
use reptransfer::lsvi::{lsvi_ucb, Evaluation, LsviConfig};
use reptransfer::mdp::{optimal_value, policy_value, BlockMdp, EmissionMode, LatentPolicy, Policy, World};
use reptransfer::rng::{Rng, Streams};
use reptransfer::transfer::{
    oracle_baseline, rep_transfer_generative, rep_transfer_online, scratch_baseline, verify_lower_bound,
    DeployConfig, TransferConfig, TransferReport,
};

const SEEDS: u64 = 5;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn solved(v: Option<usize>) -> f64 {
    v.map_or(f64::INFINITY, |x| x as f64)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn transfer_config(t_deploy: usize) -> TransferConfig {
    let mut eps = EpsConfig::new(3000, 2000);
    eps.beta = Some(1.0);
    TransferConfig { n: 2000, deploy: DeployConfig::new(t_deploy), eps }
}

#[test]
fn criterion_1_lower_bound_exactness() {
    let t = Instant::now();
    let fam = build_lower_bound_family();
    let good = FeatureMap::from_labels(2, &fam.psi_correct, &[2, 2]).unwrap();
    let bad = FeatureMap::from_labels(2, &fam.psi_permuted, &[2, 2]).unwrap();
    let g_good = verify_lower_bound(&fam, &good).unwrap().gap;
    let g_bad = verify_lower_bound(&fam, &bad).unwrap().gap;
    let secs = t.elapsed().as_secs_f64();
    let pass = (g_bad - 0.5).abs() < 1e-9 && g_good.abs() < 1e-9 && secs < 1.0;
    verdict(1, "lower-bound exactness", pass, format!("permuted gap {g_bad}, correct gap {g_good}, {secs:.3}s"));
}

#[test]
fn criterion_2_linear_span_construction() {
    let mut rng = Streams::new(2).env();
    let mut suites = Vec::new();
    for mode in [EmissionMode::Decodable, EmissionMode::Noisy { sigma: 0.1 }] {
        suites.push(("shared-emission", build_shared_emission_suite(5, 6, 4, mode, &mut rng).unwrap()));
        suites.push(("partitioned", build_partitioned_suite(2, 6, 4, mode, &mut rng).unwrap()));
    }
    let shared = build_shared_emission_suite(3, 5, 4, EmissionMode::Decodable, &mut rng).unwrap();
    suites.push(("mixture", build_mixture_target(shared.sources.clone(), &[0.2, 0.3, 0.5]).unwrap()));
    suites.push(("lower-bound", build_lower_bound_family().suite));
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    let mut detail = Vec::new();
    for (name, suite) in &suites {
        let t = Instant::now();
        let r = suite.span_residual().unwrap();
        slowest = slowest.max(t.elapsed());
        worst = worst.max(r);
        detail.push(format!("{name} {r:.1e}"));
    }
    let pass = worst < 1e-9 && slowest.as_secs_f64() < 1.0;
    verdict(
        2,
        "linear-span construction",
        pass,
        format!("max residual {worst:.1e} over {} suites ({}), slowest {:.3}s", suites.len(), detail.join(", "), slowest.as_secs_f64()),
    );
}

/// `n` uniform roll-in tuples per step (uniform actions throughout).
fn uniform_datasets(env: &BlockMdp, n: usize, rng: &mut Rng) -> Vec<TransitionDataset> {
    let a_n = env.num_actions();
    (0..env.horizon())
        .map(|h| {
            let mut d = TransitionDataset::new(h, TaskTag::Single(0), SamplingMode::OnPolicy);
            for _ in 0..n {
                let mut obs = World::reset(env, rng).unwrap();
                for t in 0..h {
                    obs = World::step(env, t, &obs, rng.random_range(0..a_n), rng).unwrap();
                }
                let a = rng.random_range(0..a_n);
                let next = World::step(env, h, &obs, a, rng).unwrap();
                d.push(obs.code(), a, next.code());
            }
            d
        })
        .collect()
}

#[test]
fn criterion_3_mle_consistency_and_rate() {
    let t = Instant::now();
    let codes = |env: &BlockMdp| (0..=env.horizon()).map(|h| env.num_codes(h)).collect::<Vec<_>>();
    let mut hits = 0;
    for seed in 0..20 {
        let s = Streams::new(seed);
        let env = build_random_block_mdp(3, 2, 3, 2, &mut s.env()).unwrap();
        let class = HypothesisClass::all_partitions(&env).unwrap();
        let data = uniform_datasets(&env, 2000, &mut s.policy());
        let (model, _) = mle_single_task(&data, &class, &codes(&env)).unwrap();
        let truth = FeatureMap::ground_truth(&env);
        if (0..env.horizon()).all(|h| model.phi.steps[h].canonical() == truth.steps[h].canonical()) {
            hits += 1;
        }
    }
    let ns = [100usize, 200, 400, 800];
    let mut errs = Vec::new();
    for &n in &ns {
        let mut total = 0.0;
        for seed in 0..20 {
            let s = Streams::new(100 + seed);
            let env = build_random_block_mdp(3, 2, 3, 2, &mut s.env()).unwrap();
            let class = HypothesisClass::all_partitions(&env).unwrap();
            let data = uniform_datasets(&env, n, &mut s.policy());
            let (model, _) = mle_single_task(&data, &class, &codes(&env)).unwrap();
            let tv = model_tv_error(&model, &env, &Policy::uniform(env.num_actions())).unwrap();
            total += tv.iter().map(|e| e * e).sum::<f64>() / tv.len() as f64;
        }
        errs.push(total / 20.0);
    }
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let b = slope(&xs, &ys);
    let secs = t.elapsed().as_secs_f64();
    let pass = hits >= 19 && (b + 1.0).abs() <= 0.3 && secs < 120.0;
    verdict(
        3,
        "MLE consistency and rate",
        pass,
        format!("ψ* selected {hits}/20 at n=2000; squared-TV slope {b:.3} (errors {errs:.3?}); {secs:.1}s"),
    );
}

#[test]
fn criterion_4_eps_coverage() {
    let t = Instant::now();
    let mut ok = 0;
    let mut mins = Vec::new();
    for seed in 0..SEEDS {
        let s = Streams::new(seed);
        let env = build_comblock(5, 4, EmissionMode::Decodable, &mut s.env()).unwrap();
        let class = HypothesisClass::all_partitions(&env).unwrap();
        let mut cfg = EpsConfig::new(3000, 2000);
        cfg.beta = Some(1.0);
        let out = eps(&env, &class, &cfg, &mut s.learner()).unwrap();
        let m = out.policy.lambda_min_uniform_last.iter().cloned().fold(f64::INFINITY, f64::min);
        if m > 0.01 {
            ok += 1;
        }
        mins.push(m);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = ok >= 4 && secs < 600.0;
    verdict(
        4,
        "EPS coverage",
        pass,
        format!("min_h λ_min per seed {mins:.4?}; {ok}/5 above 0.01; {secs:.1}s"),
    );
}

#[test]
fn criterion_5_lsvi_regret_shape() {
    let t = Instant::now();
    let mut ratios = Vec::new();
    for seed in 0..SEEDS {
        let s = Streams::new(seed);
        let env = build_comblock(5, 4, EmissionMode::Decodable, &mut s.env()).unwrap();
        let phi = FeatureMap::ground_truth(&env);
        let rewards = env.rewards();
        let v_star = optimal_value(&env, &rewards).value;
        let ev = Evaluation { env: &env, rewards: &rewards, v_star, rng: s.stream("eval") };
        let cfg = LsviConfig::new(16000, 1.0, 5);
        let out = lsvi_ucb(&env, &phi, &env.code_rewards(), &cfg, Some(ev), &mut s.learner()).unwrap();
        ratios.push(out.trace.regret_at(16000) / out.trace.regret_at(4000));
    }
    let ok = ratios.iter().filter(|r| **r < 3.0).count();
    let secs = t.elapsed().as_secs_f64();
    let pass = ok >= 4 && secs < 900.0;
    verdict(5, "LSVI-UCB regret shape", pass, format!("Reg(16000)/Reg(4000) {ratios:.3?}; {ok}/5 below 3.0; {secs:.1}s"));
}

struct SharedRuns {
    generative: Vec<TransferReport>,
    online: Vec<TransferReport>,
    oracle: Vec<TransferReport>,
    scratch: Vec<TransferReport>,
    secs: f64,
}

fn shared_runs() -> &'static SharedRuns {
    static RUNS: OnceLock<SharedRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t = Instant::now();
        let cfg = transfer_config(5000);
        let mut runs = SharedRuns { generative: vec![], online: vec![], oracle: vec![], scratch: vec![], secs: 0.0 };
        for seed in 0..SEEDS {
            let s = Streams::new(seed);
            let suite = build_shared_emission_suite(5, 6, 4, EmissionMode::Decodable, &mut s.env()).unwrap();
            let class = HypothesisClass::all_partitions(&suite.target).unwrap();
            runs.generative.push(rep_transfer_generative(&suite, None, &class, &cfg, &s.child("generative")).unwrap());
            runs.online.push(rep_transfer_online(&suite, &class, &cfg, &s.child("online")).unwrap());
            runs.oracle.push(oracle_baseline(&suite.target, &cfg.deploy, &s.child("oracle")).unwrap());
            let rf = RepUcbConfig::new(cfg.eps.reward_free.episodes);
            runs.scratch.push(scratch_baseline(&suite.target, &class, &rf, &cfg.deploy, &s.child("scratch")).unwrap());
        }
        runs.secs = t.elapsed().as_secs_f64();
        runs
    })
}

fn target_solve(rs: &[TransferReport]) -> Vec<f64> {
    rs.iter().map(|r| solved(r.target_episodes_to_solve())).collect()
}

#[test]
fn criterion_6_transfer_speedup() {
    let runs = shared_runs();
    let (g, o, sc) = (target_solve(&runs.generative), target_solve(&runs.online), target_solve(&runs.scratch));
    let all_solve = g.iter().chain(&o).all(|x| x.is_finite());
    let (mg, mo, ms) = (median(g.clone()), median(o.clone()), median(sc.clone()));
    let pass = all_solve && 5.0 * mg <= ms && 5.0 * mo <= ms && runs.secs < 3600.0;
    verdict(
        6,
        "transfer speedup",
        pass,
        format!("median G {mg}, O {mo}, scratch {ms} (G {g:?}, O {o:?}, scratch {sc:?}); {:.1}s", runs.secs),
    );
}

#[test]
fn criterion_7_generative_necessity() {
    let t = Instant::now();
    let cfg = transfer_config(5000);
    let mut g = Vec::new();
    let mut suites = Vec::new();
    for seed in 0..SEEDS {
        let s = Streams::new(seed);
        let suite = build_partitioned_suite(2, 6, 4, EmissionMode::Decodable, &mut s.env()).unwrap();
        let class = HypothesisClass::all_partitions(&suite.target).unwrap();
        g.push(solved(rep_transfer_generative(&suite, None, &class, &cfg, &s.child("generative")).unwrap().episodes_to_solve));
        suites.push((s, suite, class));
    }
    let g_ok = g.iter().filter(|x| x.is_finite()).count();
    let budget = (10.0 * median(g.clone())).min(1e6) as usize;
    let mut online_cfg = cfg.clone();
    online_cfg.deploy.episodes = budget.max(1);
    let o: Vec<f64> = suites
        .iter()
        .map(|(s, suite, class)| solved(rep_transfer_online(suite, class, &online_cfg, &s.child("online")).unwrap().episodes_to_solve))
        .collect();
    let o_fail = o.iter().filter(|x| x.is_infinite()).count();
    let secs = t.elapsed().as_secs_f64();
    let pass = g_ok >= 4 && o_fail >= 4 && secs < 3600.0;
    verdict(
        7,
        "generative-necessity dichotomy",
        pass,
        format!("G solves {g_ok}/5 {g:?}; O fails {o_fail}/5 within budget {budget} {o:?}; {secs:.1}s"),
    );
}

#[test]
fn criterion_8_oracle_equivalence() {
    let runs = shared_runs();
    let g: Vec<f64> = runs.generative.iter().map(|r| solved(r.episodes_to_solve)).collect();
    let or: Vec<f64> = runs.oracle.iter().map(|r| solved(r.episodes_to_solve)).collect();
    let (mg, mo) = (median(g.clone()), median(or.clone()));
    let ratio = mg / mo;
    let pass = mg.is_finite() && mo.is_finite() && (1.0 / 3.0..=3.0).contains(&ratio);
    verdict(8, "oracle equivalence", pass, format!("median G {mg}, oracle {mo}, ratio {ratio:.3} (G {g:?}, oracle {or:?})"));
}

fn random_latent_mc(env: &BlockMdp, policy: &Policy, episodes: usize, rng: &mut Rng) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..episodes {
        let r = env.sample_episode(policy, rng).total_reward();
        sum += r;
        sq += r * r;
    }
    let n = episodes as f64;
    let mean = sum / n;
    (mean, ((sq / n - mean * mean).max(0.0) / n).sqrt())
}

#[test]
fn criterion_9_numerical_kernels() {
    let t = Instant::now();
    let mut rng = Streams::new(9).stream("linalg");
    let d = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut lambda = DMatrix::<f64>::identity(d, d);
        let mut inv = DMatrix::<f64>::identity(d, d);
        for _ in 0..d {
            let phi = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            lambda += &phi * phi.transpose();
            inv = rank_one_update(&inv, &phi);
        }
        let direct = invert_spd(&lambda).expect("SPD");
        let scale = direct.amax();
        worst = worst.max((&inv - &direct).amax() / scale);
    }
    let mut z_scores = Vec::new();
    for seed in 0..3 {
        let s = Streams::new(900 + seed);
        let env = build_random_block_mdp(3, 2, 3, 2, &mut s.env()).unwrap();
        let pi = Policy::latent(LatentPolicy::random(&env, &mut s.learner()));
        let exact = policy_value(&env, &pi, &env.rewards());
        let (mean, se) = random_latent_mc(&env, &pi, 1_000_000, &mut s.policy());
        z_scores.push((mean - exact) / se);
        let opt = optimal_value(&env, &env.rewards());
        let star = Policy::latent(opt.policy.clone());
        let (mean, se) = random_latent_mc(&env, &star, 1_000_000, &mut s.stream("star"));
        z_scores.push((mean - opt.value) / se);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst < 1e-8 && z_scores.iter().all(|z| z.abs() <= 3.0) && secs < 120.0;
    verdict(
        9,
        "numerical kernel checks",
        pass,
        format!("Sherman–Morrison max relative error {worst:.2e}; DP vs Monte-Carlo z-scores {z_scores:.2?}; {secs:.1}s"),
    );
}
