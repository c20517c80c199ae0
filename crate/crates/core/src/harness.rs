//! Experiment orchestration: TOML configs, per-seed runs on a worker pool, result files,
//! summary tables and decoder visualisations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{
    build_comblock, build_partitioned_suite, build_shared_emission_suite, self_transfer_suite, TransferSuite,
    DEFAULT_SIGMA,
};
use crate::error::{Error, Result};
use crate::explore::EpsConfig;
use crate::features::{FeatureMap, HypothesisClass};
use crate::lsvi::SolveRule;
use crate::mdp::{BlockMdp, EmissionMode};
use crate::rng::{Rng, Streams};
use crate::transfer::{
    oracle_baseline, rep_transfer_generative, rep_transfer_online, scratch_baseline, source_only_baseline,
    DeployConfig, TransferConfig, TransferReport,
};

/// Observations drawn per latent for decoder visualisation.
pub const VIZ_SAMPLES: usize = 30;
/// ℓ∞ distance under which two latents' decoded columns count as collapsed.
pub const COLLAPSE_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "source-only")]
    SourceOnly,
    #[serde(rename = "O-RepTransfer")]
    Online,
    #[serde(rename = "G-RepTransfer")]
    Generative,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "scratch")]
    Scratch,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::SourceOnly, Algorithm::Online, Algorithm::Generative, Algorithm::Oracle, Algorithm::Scratch];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SourceOnly => "source-only",
            Algorithm::Online => "O-RepTransfer",
            Algorithm::Generative => "G-RepTransfer",
            Algorithm::Oracle => "oracle",
            Algorithm::Scratch => "scratch",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SharedEmission,
    Partitioned,
    SelfTransfer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionKind {
    Decodable,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub family: Family,
    #[serde(default = "one")]
    pub sources: usize,
    pub horizon: usize,
    pub actions: usize,
    #[serde(default = "decodable")]
    pub emission: EmissionKind,
    #[serde(default)]
    pub sigma: Option<f64>,
}

fn one() -> usize {
    1
}

fn decodable() -> EmissionKind {
    EmissionKind::Decodable
}

impl SuiteSpec {
    pub fn mode(&self) -> EmissionMode {
        match self.emission {
            EmissionKind::Decodable => EmissionMode::Decodable,
            EmissionKind::Noisy => EmissionMode::Noisy { sigma: self.sigma.unwrap_or(DEFAULT_SIGMA) },
        }
    }

    pub fn build(&self, rng: &mut Rng) -> Result<TransferSuite> {
        match self.family {
            Family::SharedEmission => {
                build_shared_emission_suite(self.sources, self.horizon, self.actions, self.mode(), rng)
            }
            Family::Partitioned => build_partitioned_suite(self.sources, self.horizon, self.actions, self.mode(), rng),
            Family::SelfTransfer => {
                Ok(self_transfer_suite(build_comblock(self.horizon, self.actions, self.mode(), rng)?))
            }
        }
    }

    pub fn label(&self) -> String {
        let family = match self.family {
            Family::SharedEmission => "shared-emission",
            Family::Partitioned => "partitioned",
            Family::SelfTransfer => "self-transfer",
        };
        let mode = match self.mode() {
            EmissionMode::Decodable => "decodable".to_string(),
            EmissionMode::Noisy { sigma } => format!("noisy(σ={sigma})"),
        };
        format!("{family} K={} H={} A={} {mode}", self.sources, self.horizon, self.actions)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub n_rf: usize,
    pub n_lsvi: usize,
    /// Tuples per cross dataset.
    pub n: usize,
    pub t_deploy: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSettings {
    /// Deployment β; the theoretical value when absent.
    #[serde(default)]
    pub deploy: Option<f64>,
    /// Exploratory-search β; the theoretical value when absent.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Deployment β values run as separate sweep points.
    #[serde(default)]
    pub sweep: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub suite: SuiteSpec,
    pub budgets: Budgets,
    #[serde(default)]
    pub beta: BetaSettings,
}

fn default_delta() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let b = &self.budgets;
        if b.n_rf < 2 || b.n_lsvi == 0 || b.n == 0 || b.t_deploy == 0 {
            return bad("budgets must be positive (n_rf >= 2)");
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a non-empty path component");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        let s = &self.suite;
        if s.horizon == 0 || s.actions < 2 {
            return bad("suite needs horizon >= 1 and actions >= 2");
        }
        match s.family {
            Family::Partitioned if s.sources < 2 => return bad("partitioned suites need sources >= 2"),
            Family::SelfTransfer if s.sources != 1 => return bad("self-transfer suites have one source"),
            _ if s.sources == 0 => return bad("sources must be positive"),
            _ => {}
        }
        if s.sigma.is_some_and(|x| !(x > 0.0)) {
            return bad("sigma must be positive");
        }
        let betas = self.beta.deploy.iter().chain(&self.beta.eps).chain(&self.beta.sweep);
        if betas.into_iter().any(|x| !(*x > 0.0)) {
            return bad("beta values must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_root(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Deployment β per sweep point: the sweep values, or the single configured value.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        if self.beta.sweep.is_empty() {
            vec![self.beta.deploy]
        } else {
            self.beta.sweep.iter().map(|b| Some(*b)).collect()
        }
    }

    pub fn transfer_config(&self, deploy_beta: Option<f64>) -> TransferConfig {
        let mut eps = EpsConfig::new(self.budgets.n_rf, self.budgets.n_lsvi);
        eps.delta = self.delta;
        eps.reward_free.delta = self.delta;
        eps.beta = self.beta.eps;
        TransferConfig {
            n: self.budgets.n,
            deploy: DeployConfig {
                episodes: self.budgets.t_deploy,
                delta: self.delta,
                beta: deploy_beta,
                stop_when_solved: true,
                solve: SolveRule::default(),
            },
            eps,
        }
    }
}

/// Command-line overrides; each field mirrors a config key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigOverrides {
    pub name: Option<String>,
    pub output: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub delta: Option<f64>,
    pub n_rf: Option<usize>,
    pub n_lsvi: Option<usize>,
    pub n: Option<usize>,
    pub t_deploy: Option<usize>,
    pub beta_deploy: Option<f64>,
    pub beta_eps: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(v) = &self.output {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.algorithms {
            cfg.algorithms = v.clone();
        }
        cfg.delta = self.delta.unwrap_or(cfg.delta);
        let b = &mut cfg.budgets;
        b.n_rf = self.n_rf.unwrap_or(b.n_rf);
        b.n_lsvi = self.n_lsvi.unwrap_or(b.n_lsvi);
        b.n = self.n.unwrap_or(b.n);
        b.t_deploy = self.t_deploy.unwrap_or(b.t_deploy);
        if self.beta_deploy.is_some() {
            cfg.beta.deploy = self.beta_deploy;
        }
        if self.beta_eps.is_some() {
            cfg.beta.eps = self.beta_eps;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One algorithm at one sweep point for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub beta: Option<f64>,
    /// Directory relative to the experiment directory.
    pub dir: String,
    /// Files written, relative to the experiment directory.
    pub files: Vec<String>,
    pub target_episodes_to_solve: Option<usize>,
    pub target_episodes: usize,
    pub source_resets: usize,
    pub source_online_steps: usize,
    pub source_generative_calls: usize,
    pub error: Option<String>,
}

impl RunEntry {
    pub fn column(&self) -> String {
        column_label(self.algorithm, self.beta, false)
    }
}

fn column_label(alg: Algorithm, beta: Option<f64>, swept: bool) -> String {
    match beta {
        Some(b) if swept => format!("{} β={b}", alg.name()),
        _ => alg.name().to_string(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountingTotals {
    pub target_episodes: usize,
    pub source_resets: usize,
    pub source_online_steps: usize,
    pub source_generative_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub setting: String,
    pub config_hash: String,
    pub code_version: String,
    pub swept: bool,
    pub runs: Vec<RunEntry>,
    pub accounting: AccountingTotals,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Executes one algorithm on a built suite.
pub fn run_algorithm(
    alg: Algorithm,
    suite: &TransferSuite,
    class: &HypothesisClass,
    cfg: &TransferConfig,
    streams: &Streams,
) -> Result<TransferReport> {
    match alg {
        Algorithm::Generative => rep_transfer_generative(suite, None, class, cfg, streams),
        Algorithm::Online => rep_transfer_online(suite, class, cfg, streams),
        Algorithm::Oracle => oracle_baseline(&suite.target, &cfg.deploy, streams),
        Algorithm::Scratch => scratch_baseline(&suite.target, class, &cfg.eps.reward_free, &cfg.deploy, streams),
        Algorithm::SourceOnly => source_only_baseline(suite, class, cfg, streams),
    }
}

fn jobs_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs.filter(|j| *j > 0) {
        b = b.num_threads(j);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

fn write_report(dir: &Path, report: &TransferReport, target: &BlockMdp) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join("viz"))?;
    let mut files = Vec::new();
    let regret = dir.join("regret.csv");
    report.trace.write_csv(&regret)?;
    files.push(regret);
    let json = dir.join("report.json");
    fs::write(&json, report.to_json()?)?;
    files.push(json);
    for (h, m) in report.confusion.iter().enumerate() {
        let p = dir.join(format!("confusion_h{h}.csv"));
        write_matrix(&p, m)?;
        files.push(p);
    }
    if let Some(phi) = &report.phi {
        let mut rng = Streams::new(target.seed().unwrap_or(0)).stream("viz");
        let viz = emit_decoder_viz(phi, target, 0..target.horizon(), &mut rng)?;
        files.extend(viz.write(&dir.join("viz"))?);
    }
    Ok(files)
}

fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

struct Task {
    seed: u64,
    alg: Algorithm,
    beta: Option<f64>,
    dir: String,
}

/// Runs every (seed, algorithm, sweep point) of `config` on a pool of `jobs` workers
/// (all logical cores when `None`) and writes results under `<output>/<name>/`.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let root = config.output_root().join(&config.name);
    fs::create_dir_all(&root)?;
    let sweep = config.sweep_points();
    let swept = !config.beta.sweep.is_empty();
    let mut tasks = Vec::new();
    for &seed in &config.seeds {
        for &alg in &config.algorithms {
            for &beta in &sweep {
                let leaf = match beta {
                    Some(b) if swept => format!("{}-beta{b}", alg.name()),
                    _ => alg.name().to_string(),
                };
                tasks.push(Task { seed, alg, beta, dir: format!("{seed}/{leaf}") });
            }
        }
    }
    let pool = jobs_pool(jobs)?;
    let runs: Vec<RunEntry> = pool.install(|| tasks.par_iter().map(|t| execute(config, &root, t)).collect());
    let accounting = runs.iter().fold(AccountingTotals::default(), |acc, r| AccountingTotals {
        target_episodes: acc.target_episodes + r.target_episodes,
        source_resets: acc.source_resets + r.source_resets,
        source_online_steps: acc.source_online_steps + r.source_online_steps,
        source_generative_calls: acc.source_generative_calls + r.source_generative_calls,
    });
    let manifest = RunManifest {
        name: config.name.clone(),
        setting: config.suite.label(),
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        swept,
        runs,
        accounting,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let summary = emit_summary(std::slice::from_ref(&manifest));
    summary.write(&root)?;
    Ok(manifest)
}

fn execute(config: &ExperimentConfig, root: &Path, task: &Task) -> RunEntry {
    let mut entry = RunEntry {
        seed: task.seed,
        algorithm: task.alg,
        beta: task.beta,
        dir: task.dir.clone(),
        files: Vec::new(),
        target_episodes_to_solve: None,
        target_episodes: 0,
        source_resets: 0,
        source_online_steps: 0,
        source_generative_calls: 0,
        error: None,
    };
    let result = (|| -> Result<TransferReport> {
        let streams = Streams::new(task.seed);
        let suite = config.suite.build(&mut streams.env())?;
        let class = HypothesisClass::all_partitions(&suite.target)?;
        let cfg = config.transfer_config(task.beta);
        let report = run_algorithm(task.alg, &suite, &class, &cfg, &streams.child(task.alg.name()))?;
        let dir = root.join(&task.dir);
        let files = write_report(&dir, &report, &suite.target)?;
        let target = dir.join("target.json");
        fs::write(&target, suite.target.to_json()?)?;
        entry.files = files
            .iter()
            .chain(std::iter::once(&target))
            .map(|p| p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect();
        Ok(report)
    })();
    match result {
        Ok(r) => {
            entry.target_episodes_to_solve = r.target_episodes_to_solve();
            entry.target_episodes = r.target_pretrain_episodes + r.deploy_episodes_run;
            for c in &r.source_access {
                entry.source_resets += c.resets;
                entry.source_online_steps += c.online_steps;
                entry.source_generative_calls += c.generative_calls;
            }
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    entry
}

/// Aggregate of one (setting, column) cell over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub setting: String,
    pub column: String,
    pub seeds: usize,
    pub finite: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub columns: Vec<String>,
    pub cells: Vec<SummaryCell>,
}

fn trim_number(x: f64) -> String {
    let s = format!("{x:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// Formats `values` (None = unsolved) as `mean (std)` with population std. The cell is
/// `∞ [k/n]` when most seeds are unsolved; a finite cell with unsolved seeds carries the
/// same `[k/n]` annotation.
pub fn summary_cell(values: &[Option<usize>]) -> (Option<f64>, Option<f64>, String) {
    let finite: Vec<f64> = values.iter().flatten().map(|v| *v as f64).collect();
    let n = values.len();
    let k = finite.len();
    if n == 0 {
        return (None, None, String::new());
    }
    if 2 * k <= n {
        return (None, None, if k == 0 { "∞".to_string() } else { format!("∞ [{k}/{n}]") });
    }
    let mean = finite.iter().sum::<f64>() / k as f64;
    let std = (finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    let mut text = format!("{} ({std:.2})", trim_number(mean));
    if k < n {
        let _ = write!(text, " [{k}/{n}]");
    }
    (Some(mean), Some(std), text)
}

/// Rows = suite settings, columns = algorithms (and sweep points).
pub fn emit_summary(manifests: &[RunManifest]) -> Summary {
    let mut columns: Vec<String> = Vec::new();
    let mut cells = Vec::new();
    for m in manifests {
        let mut groups: BTreeMap<(usize, String), Vec<Option<usize>>> = BTreeMap::new();
        for r in &m.runs {
            let col = column_label(r.algorithm, r.beta, m.swept);
            let order = Algorithm::ALL.iter().position(|a| *a == r.algorithm).unwrap_or(0);
            groups.entry((order, col)).or_default().push(r.target_episodes_to_solve);
        }
        for ((_, col), values) in groups {
            if !columns.contains(&col) {
                columns.push(col.clone());
            }
            let (mean, std, text) = summary_cell(&values);
            cells.push(SummaryCell {
                setting: m.setting.clone(),
                column: col,
                seeds: values.len(),
                finite: values.iter().flatten().count(),
                mean,
                std,
                text,
            });
        }
    }
    Summary { columns, cells }
}

impl Summary {
    pub fn get(&self, setting: &str, column: &str) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.setting == setting && c.column == column)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["setting", "algorithm", "seeds", "finite", "mean", "std", "cell"])?;
        for c in &self.cells {
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                c.setting.clone(),
                c.column.clone(),
                c.seeds.to_string(),
                c.finite.to_string(),
                opt(c.mean),
                opt(c.std),
                c.text.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let mut settings: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !settings.contains(&c.setting.as_str()) {
                settings.push(&c.setting);
            }
        }
        let mut rows = vec![std::iter::once("setting".to_string()).chain(self.columns.iter().cloned()).collect::<Vec<_>>()];
        for s in settings {
            let mut row = vec![s.to_string()];
            for col in &self.columns {
                row.push(self.get(s, col).map(|c| c.text.clone()).unwrap_or_else(|| "-".into()));
            }
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("summary.csv"), self.to_csv()?)?;
        fs::write(dir.join("summary.txt"), self.to_text())?;
        Ok(())
    }
}

/// Mean one-hot decoder output per latent and step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderViz {
    /// `grids[z][label][h]`; `None` where latent `z` does not exist at step `h`.
    pub grids: Vec<Vec<Vec<Option<f64>>>>,
    pub steps: Vec<usize>,
    /// `(h, z1, z2)` with decoded columns within [`COLLAPSE_TOLERANCE`].
    pub collapses: Vec<(usize, usize, usize)>,
}

/// Draws [`VIZ_SAMPLES`] observations per `(latent, h)` and averages the decoded one-hot labels.
pub fn emit_decoder_viz(
    phi: &FeatureMap,
    env: &BlockMdp,
    steps: std::ops::Range<usize>,
    rng: &mut Rng,
) -> Result<DecoderViz> {
    let steps: Vec<usize> = steps.filter(|h| *h < phi.horizon()).collect();
    let labels = steps.iter().map(|&h| phi.steps[h].num_labels).max().unwrap_or(0);
    let latents = steps.iter().map(|&h| env.latent_count(h)).max().unwrap_or(0);
    let mut grids = vec![vec![vec![None; steps.len()]; labels]; latents];
    let mut collapses = Vec::new();
    for (col, &h) in steps.iter().enumerate() {
        let mut columns = Vec::with_capacity(env.latent_count(h));
        for z in 0..env.latent_count(h) {
            let mut mean = vec![0.0; labels];
            for _ in 0..VIZ_SAMPLES {
                let obs = env.emit(h, z, rng);
                mean[phi.label(h, obs.code())?] += 1.0;
            }
            mean.iter_mut().for_each(|m| *m /= VIZ_SAMPLES as f64);
            for (l, m) in mean.iter().enumerate() {
                grids[z][l][col] = Some(*m);
            }
            columns.push(mean);
        }
        for z1 in 0..columns.len() {
            for z2 in z1 + 1..columns.len() {
                let dist = columns[z1].iter().zip(&columns[z2]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if dist <= COLLAPSE_TOLERANCE {
                    collapses.push((h, z1, z2));
                }
            }
        }
    }
    Ok(DecoderViz { grids, steps, collapses })
}

impl DecoderViz {
    /// Writes `latent_<z>.csv` (labels × steps) and `collapses.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (z, grid) in self.grids.iter().enumerate() {
            let p = dir.join(format!("latent_{z}.csv"));
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(std::iter::once("label".to_string()).chain(self.steps.iter().map(|h| format!("h{h}"))))?;
            for (l, row) in grid.iter().enumerate() {
                w.write_record(
                    std::iter::once(l.to_string()).chain(row.iter().map(|x| x.map(|v| v.to_string()).unwrap_or_default())),
                )?;
            }
            w.flush()?;
            files.push(p);
        }
        let p = dir.join("collapses.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["h", "latent_a", "latent_b"])?;
        for (h, a, b) in &self.collapses {
            w.write_record([h.to_string(), a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        files.push(p);
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
name = "tiny"
seeds = [0, 1]
algorithms = ["oracle", "G-RepTransfer"]

[suite]
family = "shared-emission"
sources = 2
horizon = 3
actions = 2

[budgets]
n_rf = 50
n_lsvi = 50
n = 200
t_deploy = 600

[beta]
deploy = 1.0
eps = 1.0
"#;

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        assert_eq!(cfg.algorithms, vec![Algorithm::Oracle, Algorithm::Generative]);
        let bad = CONFIG.replace("actions = 2", "actions = 2\ncolour = 3");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = CONFIG.replace("seeds = [0, 1]", "seeds = []");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = CONFIG.replace("n = 200", "n = 0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn summary_cells() {
        let v: Vec<Option<usize>> = (1..=5).map(Some).collect();
        assert_eq!(summary_cell(&v).2, "3 (1.41)");
        assert_eq!(summary_cell(&[Some(250)]).2, "250 (0.00)");
        assert_eq!(summary_cell(&[None, None, Some(3)]).2, "∞ [1/3]");
        assert_eq!(summary_cell(&[None, None]).2, "∞");
        assert_eq!(summary_cell(&[Some(2), Some(4), None]).2, "3 (1.00) [2/3]");
    }

    #[test]
    fn ground_truth_viz_has_no_collapse() {
        let env = build_comblock(4, 3, EmissionMode::Decodable, &mut Streams::new(1).env()).unwrap();
        let viz = emit_decoder_viz(&FeatureMap::ground_truth(&env), &env, 0..4, &mut Streams::new(1).policy()).unwrap();
        assert!(viz.collapses.is_empty());
        for (z, grid) in viz.grids.iter().enumerate() {
            for (l, row) in grid.iter().enumerate() {
                for cell in row.iter().flatten() {
                    assert_eq!(*cell, if l == z { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn merged_latents_collapse() {
        let env = build_comblock(3, 2, EmissionMode::Decodable, &mut Streams::new(2).env()).unwrap();
        let mut phi = FeatureMap::ground_truth(&env);
        for l in phi.steps[1].labels.iter_mut() {
            if *l == 1 {
                *l = 0;
            }
        }
        let viz = emit_decoder_viz(&phi, &env, 0..3, &mut Streams::new(2).policy()).unwrap();
        assert_eq!(viz.collapses, vec![(1, 0, 1)]);
    }
}
