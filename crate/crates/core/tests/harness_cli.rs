use std::path::Path;
use std::process::Command;

use reptransfer::harness::{run_experiment, ExperimentConfig, RunManifest};
use reptransfer::transfer::TransferReport;

const BIN: &str = env!("CARGO_BIN_EXE_reptransfer");

const TINY: &str = r#"
name = "tiny"
seeds = [0, 1]
algorithms = ["O-RepTransfer", "G-RepTransfer", "oracle", "scratch"]

[suite]
family = "shared-emission"
sources = 2
horizon = 3
actions = 3

[budgets]
n_rf = 200
n_lsvi = 100
n = 100
t_deploy = 300

[beta]
deploy = 1.0
eps = 1.0
"#;

fn tiny(output: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(TINY).unwrap();
    cfg.output = Some(output.to_path_buf());
    cfg
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&tiny(a.path()), Some(2)).unwrap();
    run_experiment(&tiny(b.path()), Some(1)).unwrap();
    let (da, db) = (a.path().join("tiny"), b.path().join("tiny"));
    let files = files_under(&da);
    assert_eq!(files, files_under(&db));
    for f in files.iter().filter(|f| f.as_str() != "manifest.json") {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn manifest_is_consistent_with_reports() {
    let out = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&tiny(out.path()), None).unwrap();
    let dir = out.path().join("tiny");
    assert_eq!(RunManifest::load(&dir.join("manifest.json")).unwrap(), manifest);
    assert_eq!(manifest.failures(), 0);
    assert_eq!(manifest.runs.len(), 8);
    let (mut resets, mut steps, mut gen, mut target) = (0, 0, 0, 0);
    for run in &manifest.runs {
        for f in &run.files {
            assert!(dir.join(f).is_file(), "{f} missing");
        }
        let text = std::fs::read_to_string(dir.join(&run.dir).join("report.json")).unwrap();
        let report: TransferReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report.target_episodes_to_solve(), run.target_episodes_to_solve);
        assert!(report.sources_revoked);
        resets += report.source_access.iter().map(|c| c.resets).sum::<usize>();
        steps += report.source_access.iter().map(|c| c.online_steps).sum::<usize>();
        gen += report.source_access.iter().map(|c| c.generative_calls).sum::<usize>();
        target += run.target_episodes;
    }
    assert_eq!(manifest.accounting.source_resets, resets);
    assert_eq!(manifest.accounting.source_online_steps, steps);
    assert_eq!(manifest.accounting.source_generative_calls, gen);
    assert_eq!(manifest.accounting.target_episodes, target);
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.lines().count() >= 2);
}

fn exit_code(args: &[&str]) -> i32 {
    Command::new(BIN).args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, TINY).unwrap();
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, format!("{TINY}\n[extra]\nkey = 1\n")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, TINY.replace("seeds = [0, 1]", "seeds = []")).unwrap();
    assert_eq!(exit_code(&["validate-config", good.to_str().unwrap()]), 0);
    assert_eq!(exit_code(&["validate-config", unknown.to_str().unwrap()]), 2);
    assert_eq!(exit_code(&["validate-config", bad.to_str().unwrap()]), 2);
    assert_eq!(exit_code(&["validate-config", dir.path().join("missing.toml").to_str().unwrap()]), 2);
    assert_eq!(exit_code(&["verify-lower-bound"]), 0);
}

#[test]
fn cli_run_summarize_and_viz() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap(), "--seeds", "3", "--algorithms", "oracle,G-RepTransfer"])
        .env("REPTRANSFER_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    let exp = out.join("tiny");
    let manifest = RunManifest::load(&exp.join("manifest.json")).unwrap();
    assert_eq!(manifest.runs.len(), 2);
    let summary = dir.path().join("summary");
    let out_arg = summary.to_str().unwrap();
    assert_eq!(exit_code(&["summarize", exp.to_str().unwrap(), "--out", out_arg]), 0);
    assert!(summary.join("summary.txt").is_file());
    let run_dir = exp.join(&manifest.runs.iter().find(|r| r.column() == "G-RepTransfer").unwrap().dir);
    std::fs::remove_dir_all(run_dir.join("viz")).unwrap();
    assert_eq!(exit_code(&["viz", run_dir.to_str().unwrap()]), 0);
    assert!(run_dir.join("viz").join("latent_0.csv").is_file());
}
