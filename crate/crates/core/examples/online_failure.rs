//! Partitioned sources: each source emits in its own block, so only cross-sampling
//! ties the blocks together. Generative transfer solves the target; the online variant
//! cannot tell which pairing of blocks is right.
//!
//! Usage: `online_failure [seeds] [n] [t_deploy]`

use reptransfer::envs::build_partitioned_suite;
use reptransfer::explore::EpsConfig;
use reptransfer::features::HypothesisClass;
use reptransfer::mdp::EmissionMode;
use reptransfer::rng::Streams;
use reptransfer::transfer::{rep_transfer_generative, rep_transfer_online, DeployConfig, TransferConfig};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> reptransfer::Result<()> {
    let fmt = |e: Option<usize>| e.map_or("inf".to_string(), |e| e.to_string());
    for seed in 0..arg(1, 5) as u64 {
        let streams = Streams::new(seed);
        let suite = build_partitioned_suite(2, 6, 4, EmissionMode::Decodable, &mut streams.env())?;
        let class = HypothesisClass::all_partitions(&suite.target)?;
        let mut eps = EpsConfig::new(3000, 2000);
        eps.beta = Some(1.0);
        let cfg = TransferConfig { n: arg(2, 2000), deploy: DeployConfig::new(arg(3, 5000)), eps };
        let g = rep_transfer_generative(&suite, None, &class, &cfg, &streams.child("generative"))?;
        let o = rep_transfer_online(&suite, &class, &cfg, &streams.child("online"))?;
        println!(
            "seed {seed}: generative {:>6} (ties {})  online {:>6} (ties {}, off-diagonal {:?})",
            fmt(g.episodes_to_solve),
            g.any_tie(),
            fmt(o.episodes_to_solve),
            o.any_tie(),
            o.off_diagonal.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
