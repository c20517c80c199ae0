//! Exploratory policy search on a combination lock, reporting feature coverage per step.

use reptransfer::envs::build_comblock;
use reptransfer::explore::{eps, EpsConfig};
use reptransfer::features::HypothesisClass;
use reptransfer::mdp::EmissionMode;
use reptransfer::rng::Streams;

fn main() -> reptransfer::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let rf: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let lsvi: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    for seed in 0..5 {
        let streams = Streams::new(seed);
        let env = build_comblock(5, 4, EmissionMode::Decodable, &mut streams.env())?;
        let class = HypothesisClass::all_partitions(&env)?;
        let mut cfg = EpsConfig::new(rf, lsvi);
        cfg.beta = Some(1.0);
        let out = eps(&env, &class, &cfg, &mut streams.learner())?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
        println!(
            "seed {seed}: rho {}  | rho+1 {}  | decoder switches {}",
            fmt(&out.policy.lambda_min),
            fmt(&out.policy.lambda_min_uniform_last),
            out.run.decoder_switches
        );
    }
    Ok(())
}
