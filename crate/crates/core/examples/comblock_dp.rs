//! Exact values on a combination lock: the optimum, uniform play and Monte-Carlo estimates.

use reptransfer::envs::build_comblock;
use reptransfer::mdp::{latent_occupancy, optimal_value, policy_value, EmissionMode, Policy};
use reptransfer::rng::Streams;

fn main() -> reptransfer::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let horizon: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let actions: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let streams = Streams::new(0);
    let env = build_comblock(horizon, actions, EmissionMode::Noisy { sigma: 0.1 }, &mut streams.env())?;
    let rewards = env.rewards();
    let opt = optimal_value(&env, &rewards);
    let uniform = Policy::uniform(actions);
    println!("H={horizon} A={actions}  V* = {:.4}  V(uniform) = {:.6}", opt.value, policy_value(&env, &uniform, &rewards));
    let mut rng = streams.policy();
    let pi = Policy::latent(opt.policy.clone());
    let episodes = 20_000;
    for (name, p) in [("optimal", &pi), ("uniform", &uniform)] {
        let mean: f64 = (0..episodes).map(|_| env.sample_episode(p, &mut rng).total_reward()).sum::<f64>() / episodes as f64;
        println!("{name:<8} Monte-Carlo return over {episodes} episodes: {mean:.4}");
    }
    for h in 0..horizon {
        let occ = latent_occupancy(&env, &pi, h, false);
        let per: Vec<String> = occ.chunks(actions).map(|c| format!("{:.3}", c.iter().sum::<f64>())).collect();
        println!("h={h}: optimal latent occupancy [{}]", per.join(", "));
    }
    Ok(())
}
