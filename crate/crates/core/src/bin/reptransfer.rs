use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reptransfer::envs::build_lower_bound_family;
use reptransfer::features::FeatureMap;
use reptransfer::harness::{emit_decoder_viz, emit_summary, Algorithm, ConfigOverrides, ExperimentConfig, RunManifest};
use reptransfer::mdp::BlockMdp;
use reptransfer::rng::Streams;
use reptransfer::transfer::{verify_lower_bound, TransferReport};
use reptransfer::Error;

#[derive(Parser)]
#[command(name = "reptransfer", version, about = "Representation transfer experiments on block MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        #[arg(long, env = "REPTRANSFER_JOBS")]
        jobs: Option<usize>,
        #[arg(long, env = "REPTRANSFER_OUT")]
        output: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        n_rf: Option<usize>,
        #[arg(long)]
        n_lsvi: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t_deploy: Option<usize>,
        #[arg(long)]
        beta_deploy: Option<f64>,
        #[arg(long)]
        beta_eps: Option<f64>,
    },
    /// Aggregate experiment directories into one summary table.
    Summarize {
        dirs: Vec<PathBuf>,
        /// Also write summary.csv and summary.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit decoder visualisations for one run directory.
    Viz { run_dir: PathBuf },
    /// Exhaustive check of the two-task lower-bound construction.
    VerifyLowerBound,
    /// Parse and validate a config without running it.
    ValidateConfig { config: PathBuf },
}

enum Failure {
    Config(String),
    Seeds(usize),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e => Failure::Other(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Seeds(n)) => {
            eprintln!("{n} run(s) failed; see manifest.json");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_toml(&text)?)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            jobs,
            output,
            name,
            seeds,
            algorithms,
            delta,
            n_rf,
            n_lsvi,
            n,
            t_deploy,
            beta_deploy,
            beta_eps,
        } => {
            let algorithms = algorithms
                .map(|v| v.iter().map(|s| s.parse::<Algorithm>()).collect::<Result<Vec<_>, _>>())
                .transpose()?;
            let overrides = ConfigOverrides {
                name,
                output,
                seeds,
                algorithms,
                delta,
                n_rf,
                n_lsvi,
                n,
                t_deploy,
                beta_deploy,
                beta_eps,
            };
            let cfg = overrides.apply(load_config(&config)?)?;
            let manifest = reptransfer::harness::run_experiment(&cfg, jobs)?;
            print!("{}", emit_summary(std::slice::from_ref(&manifest)).to_text());
            match manifest.failures() {
                0 => Ok(()),
                n => Err(Failure::Seeds(n)),
            }
        }
        Command::Summarize { dirs, out } => {
            let manifests = dirs
                .iter()
                .map(|d| RunManifest::load(&d.join("manifest.json")))
                .collect::<Result<Vec<_>, _>>()?;
            let summary = emit_summary(&manifests);
            print!("{}", summary.to_text());
            if let Some(out) = out {
                std::fs::create_dir_all(&out).map_err(Error::from)?;
                summary.write(&out)?;
            }
            Ok(())
        }
        Command::Viz { run_dir } => {
            let read = |p: PathBuf| std::fs::read_to_string(p).map_err(Error::from);
            let report: TransferReport = serde_json::from_str(&read(run_dir.join("report.json"))?).map_err(Error::from)?;
            let target = BlockMdp::from_json(&read(run_dir.join("target.json"))?)?;
            let phi: FeatureMap = report.phi.ok_or_else(|| Failure::Other("report has no decoder".into()))?;
            let mut rng = Streams::new(target.seed().unwrap_or(0)).stream("viz");
            let viz = emit_decoder_viz(&phi, &target, 0..target.horizon(), &mut rng)?;
            viz.write(&run_dir.join("viz"))?;
            if viz.collapses.is_empty() {
                println!("no collapsed latents");
            }
            for (h, a, b) in &viz.collapses {
                println!("collapse at h={h}: latents {a} and {b}");
            }
            Ok(())
        }
        Command::VerifyLowerBound => {
            let fam = build_lower_bound_family();
            let a = fam.suite.num_actions();
            let flat = vec![vec![0; 4]; 2];
            for (label, labels) in [("correct", &fam.psi_correct), ("permuted", &fam.psi_permuted), ("constant", &flat)] {
                let phi = FeatureMap::from_labels(a, labels, &[2, 2])?;
                let check = verify_lower_bound(&fam, &phi)?;
                println!(
                    "{label:<9} decoder: V* = {:.3}, best fingerprint policy = {:.3}, gap = {:.3} ({} policies)",
                    check.v_star, check.best_value, check.gap, check.policies_evaluated
                );
            }
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(&config)?;
            println!("{}: ok ({}, {} seeds, hash {})", config.display(), cfg.suite.label(), cfg.seeds.len(), &cfg.hash()[..12]);
            Ok(())
        }
    }
}
