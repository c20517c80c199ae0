//! Runs a small experiment config programmatically and prints its summary table.
//!
//! Usage: `experiment_harness [config.toml] [output_dir]`

use std::path::PathBuf;

use reptransfer::harness::{emit_summary, run_experiment, ExperimentConfig};

fn main() -> reptransfer::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(PathBuf::from).unwrap_or_else(|| "configs/partitioned.toml".into());
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.seeds.truncate(2);
    if let Some(out) = args.get(2) {
        cfg.output = Some(out.into());
    }
    let manifest = run_experiment(&cfg, None)?;
    print!("{}", emit_summary(std::slice::from_ref(&manifest)).to_text());
    println!(
        "{} runs, {} failed, {} target episodes, {} generative source calls",
        manifest.runs.len(),
        manifest.failures(),
        manifest.accounting.target_episodes,
        manifest.accounting.source_generative_calls
    );
    Ok(())
}
