//! LSVI-UCB with ground-truth features on a combination lock: regret growth and
//! episodes-to-solve for a few exploration scales.
//!
//! Usage: `lsvi_oracle [horizon] [episodes] [beta]` (theoretical β when `beta` is omitted)

use reptransfer::envs::build_comblock;
use reptransfer::features::FeatureMap;
use reptransfer::lsvi::{beta_deployment, lsvi_ucb, Evaluation, LsviConfig};
use reptransfer::mdp::{optimal_value, EmissionMode};
use reptransfer::rng::Streams;

fn main() -> reptransfer::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let horizon: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16000);
    let fixed: Option<f64> = args.get(3).and_then(|s| s.parse().ok());
    for seed in 0..5 {
        let streams = Streams::new(seed);
        let env = build_comblock(horizon, 4, EmissionMode::Decodable, &mut streams.env())?;
        let phi = FeatureMap::ground_truth(&env);
        let d = (0..horizon).map(|h| phi.dim(h)).max().unwrap_or(1);
        let beta = match fixed {
            Some(b) => b,
            None => beta_deployment(d, horizon, episodes, 0.1, 1.0)?,
        };
        let rewards = env.rewards();
        let v_star = optimal_value(&env, &rewards).value;
        let ev = Evaluation { env: &env, rewards: &rewards, v_star, rng: streams.stream("eval") };
        let cfg = LsviConfig::new(episodes, beta, horizon);
        let out = lsvi_ucb(&env, &phi, &env.code_rewards(), &cfg, Some(ev), &mut streams.learner())?;
        let quarter = out.trace.regret_at(episodes / 4);
        let full = out.trace.regret_at(episodes);
        println!(
            "seed {seed}: beta {beta:.2}  Reg({}) {quarter:.1}  Reg({episodes}) {full:.1}  ratio {:.3}  solved at {:?}",
            episodes / 4,
            full / quarter.max(f64::MIN_POSITIVE),
            out.trace.episodes_to_solve
        );
    }
    Ok(())
}
