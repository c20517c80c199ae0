//! Transfer on the shared-emission suite: generative and online transfer against the
//! oracle and from-scratch baselines.
//!
//! Usage: `generative_transfer [seed] [n] [n_rf] [n_lsvi] [t_deploy]`

use std::time::Instant;

use reptransfer::envs::build_shared_emission_suite;
use reptransfer::explore::{EpsConfig, RepUcbConfig};
use reptransfer::features::HypothesisClass;
use reptransfer::mdp::EmissionMode;
use reptransfer::rng::Streams;
use reptransfer::transfer::{
    oracle_baseline, rep_transfer_generative, rep_transfer_online, scratch_baseline, DeployConfig,
    TransferConfig, TransferReport,
};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn show(r: &TransferReport, started: Instant) {
    let solve = r.target_episodes_to_solve().map_or("inf".to_string(), |e| e.to_string());
    println!(
        "{:<14} target episodes to solve {:>7}  deploy run {:>6}  off-diagonal {:?}  ties {}  ({:.1}s)",
        r.algorithm,
        solve,
        r.deploy_episodes_run,
        r.off_diagonal.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
        r.any_tie(),
        started.elapsed().as_secs_f64()
    );
}

fn main() -> reptransfer::Result<()> {
    let seed = arg(1, 0) as u64;
    let streams = Streams::new(seed);
    let suite = build_shared_emission_suite(5, 6, 4, EmissionMode::Decodable, &mut streams.env())?;
    let class = HypothesisClass::all_partitions(&suite.target)?;
    let mut eps = EpsConfig::new(arg(3, 3000), arg(4, 2000));
    eps.beta = Some(1.0);
    let cfg = TransferConfig { n: arg(2, 2000), deploy: DeployConfig::new(arg(5, 5000)), eps };

    let t = Instant::now();
    show(&oracle_baseline(&suite.target, &cfg.deploy, &streams.child("oracle"))?, t);
    let t = Instant::now();
    let g = rep_transfer_generative(&suite, None, &class, &cfg, &streams.child("generative"))?;
    show(&g, t);
    if let Some(err) = g.span_error {
        println!("               span-model TV error {err:.4}");
    }
    let t = Instant::now();
    show(&rep_transfer_online(&suite, &class, &cfg, &streams.child("online"))?, t);
    let t = Instant::now();
    let rf = RepUcbConfig::new(cfg.eps.reward_free.episodes);
    show(&scratch_baseline(&suite.target, &class, &rf, &cfg.deploy, &streams.child("scratch"))?, t);
    Ok(())
}
