//! Finite decoder classes, learned linear-MDP models and maximum-likelihood selection.
//!
//! A candidate feature map relabels the codewords of each step into at most `L_h` groups
//! and sets `φ_h(s, a) = e_{(ψ_h(s), a)}`. For a fixed decoder the likelihood-maximising
//! `μ` is the smoothed conditional frequency of `s′` given `(ψ_h(s), a)` in the task that
//! generated `s′`, so selection only enumerates decoders.

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::envs::SpanCoefficients;
use crate::error::{Error, Result};
use crate::mdp::{sample_dense, BlockMdp, MarkovPolicy, Observation, Policy, World};
use crate::rng::Rng;

/// Additive smoothing per count cell.
pub const SMOOTHING: f64 = 1e-6;
/// Relative tolerance used to report likelihood ties.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Largest per-step decoder class enumerated exhaustively.
pub const MAX_CLASS_SIZE: u128 = 250_000;

/// Relabeling of the codewords of one step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepDecoder {
    pub labels: Vec<usize>,
    pub num_labels: usize,
}

impl StepDecoder {
    pub fn new(labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        if labels.iter().any(|l| *l >= num_labels) {
            return Err(Error::InvalidParameter("decoder label out of range".into()));
        }
        Ok(Self { labels, num_labels })
    }

    pub fn label(&self, code: usize) -> Option<usize> {
        self.labels.get(code).copied()
    }

    /// Canonical form (first-occurrence relabeling) identifying the induced partition.
    pub fn canonical(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.num_labels];
        let mut next = 0;
        self.labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect()
    }
}

/// `φ_h(s, a) = one-hot(ψ_h(s)·A + a)` for `h < H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub num_actions: usize,
    pub steps: Vec<StepDecoder>,
}

impl FeatureMap {
    pub fn new(num_actions: usize, steps: Vec<StepDecoder>) -> Self {
        Self { num_actions, steps }
    }

    pub fn ground_truth(env: &BlockMdp) -> Self {
        let steps = (0..env.horizon())
            .map(|h| StepDecoder {
                labels: env.codebook(h).latent_of.clone(),
                num_labels: env.latent_count(h),
            })
            .collect();
        Self { num_actions: env.num_actions(), steps }
    }

    pub fn from_labels(num_actions: usize, labels: &[Vec<usize>], num_labels: &[usize]) -> Result<Self> {
        let steps = labels
            .iter()
            .zip(num_labels)
            .map(|(l, n)| StepDecoder::new(l.clone(), *n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { num_actions, steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn dim(&self, h: usize) -> usize {
        self.steps[h].num_labels * self.num_actions
    }

    pub fn label(&self, h: usize, code: usize) -> Result<usize> {
        self.steps
            .get(h)
            .ok_or(Error::StepOutOfRange { h, horizon: self.steps.len() })?
            .label(code)
            .ok_or(Error::UnknownObservation { h, code })
    }

    pub fn index(&self, h: usize, code: usize, a: usize) -> Result<usize> {
        Ok(self.label(h, code)? * self.num_actions + a)
    }

    pub fn phi(&self, h: usize, code: usize, a: usize) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.dim(h));
        v[self.index(h, code, a)?] = 1.0;
        Ok(v)
    }

    pub fn check_world(&self, world: &impl World) -> Result<()> {
        if world.horizon() != self.horizon() || world.num_actions() != self.num_actions {
            return Err(Error::DimensionMismatch(format!(
                "features cover H={} A={}, world has H={} A={}",
                self.horizon(),
                self.num_actions,
                world.horizon(),
                world.num_actions()
            )));
        }
        for h in 0..self.horizon() {
            if self.steps[h].labels.len() != world.num_codes(h) {
                return Err(Error::DimensionMismatch(format!("decoder at step {h} covers {} codes, world has {}",
                    self.steps[h].labels.len(), world.num_codes(h))));
            }
        }
        Ok(())
    }
}

/// Candidate decoders for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepClass {
    pub candidates: Vec<StepDecoder>,
}

/// Finite class Φ as a product of per-step candidate lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisClass {
    pub num_actions: usize,
    pub steps: Vec<StepClass>,
    pub realizable: bool,
}

fn stirling_upto(n: usize, k: usize) -> u128 {
    // Σ_{j≤k} S(n, j)
    let mut s = vec![vec![0u128; k + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for j in 1..=k.min(i) {
            s[i][j] = s[i - 1][j - 1].saturating_add((j as u128).saturating_mul(s[i - 1][j]));
        }
    }
    s[n].iter().fold(0u128, |a, b| a.saturating_add(*b))
}

/// All set partitions of `n` codes into at most `k` labels, as restricted-growth strings.
pub fn enumerate_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, k: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        let upper = if i == 0 { 0 } else { (max + 1).min(k - 1) };
        for l in 0..=upper {
            cur.push(l);
            rec(i + 1, n, k, max.max(l), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 || k == 0 {
        return out;
    }
    rec(0, n, k, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

impl HypothesisClass {
    /// Every partition of each step's codewords into at most `L_h` groups.
    pub fn all_partitions(env: &BlockMdp) -> Result<Self> {
        let mut steps = Vec::with_capacity(env.horizon());
        for h in 0..env.horizon() {
            let (n, k) = (env.num_codes(h), env.latent_count(h));
            if stirling_upto(n, k) > MAX_CLASS_SIZE {
                return Err(Error::InvalidParameter(format!(
                    "decoder class at step {h} exceeds {MAX_CLASS_SIZE} candidates"
                )));
            }
            let candidates = enumerate_partitions(n, k)
                .into_iter()
                .map(|labels| StepDecoder { labels, num_labels: k })
                .collect();
            steps.push(StepClass { candidates });
        }
        let mut class = Self { num_actions: env.num_actions(), steps, realizable: false };
        class.realizable = class.contains(&FeatureMap::ground_truth(env));
        Ok(class)
    }

    pub fn singleton(phi: &FeatureMap) -> Self {
        Self {
            num_actions: phi.num_actions,
            steps: phi.steps.iter().map(|s| StepClass { candidates: vec![s.clone()] }).collect(),
            realizable: false,
        }
    }

    /// Per-step candidates taken from the listed feature maps.
    pub fn from_feature_maps(maps: &[FeatureMap]) -> Result<Self> {
        let first = maps.first().ok_or(Error::InvalidParameter("empty class".into()))?;
        let steps = (0..first.horizon())
            .map(|h| {
                let mut candidates: Vec<StepDecoder> = Vec::new();
                for m in maps {
                    if !candidates.contains(&m.steps[h]) {
                        candidates.push(m.steps[h].clone());
                    }
                }
                StepClass { candidates }
            })
            .collect();
        Ok(Self { num_actions: first.num_actions, steps, realizable: false })
    }

    pub fn with_realizability(mut self, env: &BlockMdp) -> Self {
        self.realizable = self.contains(&FeatureMap::ground_truth(env));
        self
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn contains(&self, phi: &FeatureMap) -> bool {
        phi.steps.iter().zip(&self.steps).all(|(d, class)| {
            let c = d.canonical();
            class.candidates.iter().any(|x| x.canonical() == c)
        })
    }

    /// `ln |Φ|` for the product class.
    pub fn ln_size(&self) -> f64 {
        self.steps.iter().map(|s| (s.candidates.len() as f64).ln()).sum()
    }

    pub fn max_step_size(&self) -> usize {
        self.steps.iter().map(|s| s.candidates.len()).max().unwrap_or(1)
    }
}

/// `(ln(|Φ|/δ) + K·ln|Υ|)/n` from log-sizes.
pub fn mle_bound_zeta(n: usize, ln_phi: f64, ln_upsilon: f64, k: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    Ok((ln_phi - delta.ln() + k as f64 * ln_upsilon) / n as f64)
}

/// Dense `(s, a, s′)` counts of one task at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCounts {
    pub num_codes: usize,
    pub num_actions: usize,
    pub num_next: usize,
    pub counts: Vec<f64>,
}

impl StepCounts {
    pub fn new(num_codes: usize, num_actions: usize, num_next: usize) -> Self {
        Self { num_codes, num_actions, num_next, counts: vec![0.0; num_codes * num_actions * num_next] }
    }

    fn idx(&self, s: usize, a: usize, s_next: usize) -> usize {
        (s * self.num_actions + a) * self.num_next + s_next
    }

    pub fn add(&mut self, s: usize, a: usize, s_next: usize, w: f64) -> Result<()> {
        if s >= self.num_codes || a >= self.num_actions || s_next >= self.num_next {
            return Err(Error::UnknownObservation { h: usize::MAX, code: s.max(s_next) });
        }
        let i = self.idx(s, a, s_next);
        self.counts[i] += w;
        Ok(())
    }

    pub fn add_dataset(&mut self, d: &TransitionDataset) -> Result<()> {
        for t in &d.tuples {
            self.add(t.s, t.a, t.s_next, 1.0).map_err(|_| Error::UnknownObservation {
                h: d.h,
                code: if t.s >= self.num_codes { t.s } else { t.s_next },
            })?;
        }
        Ok(())
    }

    pub fn get(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.counts[self.idx(s, a, s_next)]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Codes observed as next states.
    pub fn support(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_next];
        for (i, c) in self.counts.iter().enumerate() {
            if *c > 0.0 {
                seen[i % self.num_next] = true;
            }
        }
        (0..self.num_next).filter(|c| seen[*c]).collect()
    }

    /// Counts aggregated to `[label·A + a][s′]` under a decoder.
    fn grouped(&self, dec: &StepDecoder) -> Vec<Vec<f64>> {
        let a_n = self.num_actions;
        let mut g = vec![vec![0.0; self.num_next]; dec.num_labels * a_n];
        for s in 0..self.num_codes {
            let l = dec.labels[s];
            for a in 0..a_n {
                let base = (s * a_n + a) * self.num_next;
                let row = &mut g[l * a_n + a];
                for (x, c) in row.iter_mut().zip(&self.counts[base..base + self.num_next]) {
                    *x += c;
                }
            }
        }
        g
    }
}

/// Smoothed log-likelihood of one task's counts under a decoder.
fn log_likelihood(counts: &StepCounts, dec: &StepDecoder, eps: f64) -> f64 {
    let support = counts.support().len() as f64;
    let mut ll = 0.0;
    for row in counts.grouped(dec) {
        let n: f64 = row.iter().sum();
        if n == 0.0 {
            continue;
        }
        let denom = n + eps * support;
        for c in row {
            if c > 0.0 {
                ll += c * ((c + eps) / denom).ln();
            }
        }
    }
    ll
}

/// `μ_h(s′)` of one task as an explicit table over `[label·A + a][support index]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionEmbedding {
    pub num_labels: usize,
    pub num_actions: usize,
    /// Next-state codes with a column in the table.
    pub support: Vec<usize>,
    pub table: Vec<Vec<f64>>,
    /// Raw counts behind the table, when it was fit from data.
    #[serde(default)]
    pub counts: Option<Vec<Vec<f64>>>,
}

impl EmissionEmbedding {
    pub fn dim(&self) -> usize {
        self.num_labels * self.num_actions
    }

    pub fn from_counts(counts: &StepCounts, dec: &StepDecoder, eps: f64) -> Self {
        let support = counts.support();
        let grouped = counts.grouped(dec);
        let m = support.len() as f64;
        let table = grouped
            .iter()
            .map(|row| {
                let n: f64 = support.iter().map(|c| row[*c]).sum();
                support
                    .iter()
                    .map(|c| if n + eps * m > 0.0 { (row[*c] + eps) / (n + eps * m) } else { 1.0 / m })
                    .collect()
            })
            .collect();
        let raw = grouped.iter().map(|row| support.iter().map(|c| row[*c]).collect()).collect();
        Self { num_labels: dec.num_labels, num_actions: counts.num_actions, support, table, counts: Some(raw) }
    }

    pub fn column(&self, s_next: usize) -> Option<usize> {
        self.support.binary_search(&s_next).ok()
    }

    /// `μ_h(s′) ∈ R^d`.
    pub fn mu(&self, s_next: usize) -> DVector<f64> {
        match self.column(s_next) {
            Some(j) => DVector::from_iterator(self.dim(), self.table.iter().map(|r| r[j])),
            None => DVector::zeros(self.dim()),
        }
    }

    /// Dense row `φᵀμ(·)` for feature index `idx` over `num_next` codes.
    pub fn kernel_row(&self, idx: usize, num_next: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_next];
        for (j, c) in self.support.iter().enumerate() {
            out[*c] = self.table[idx][j];
        }
        out
    }

    /// `‖Σ_s g(s) μ(s)‖₂` for `g` given on the support.
    pub fn integral_norm(&self, g: impl Fn(usize) -> f64) -> f64 {
        let mut acc = vec![0.0; self.dim()];
        for (j, c) in self.support.iter().enumerate() {
            let w = g(*c);
            for (i, row) in self.table.iter().enumerate() {
                acc[i] += w * row[j];
            }
        }
        acc.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// A learned model `(φ̂, μ̂)` of one task, simulatable over its finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMdpModel {
    pub phi: FeatureMap,
    pub mu: Vec<EmissionEmbedding>,
    /// Empirical start-state distribution over step-0 codes.
    pub initial: Vec<f64>,
    /// Codebook sizes for steps `0..=H`.
    pub num_codes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    model: LinearMdpModel,
}

impl LinearMdpModel {
    /// The exact model of `env`: ψ* and the true `μ*` (no smoothing).
    pub fn from_env(env: &BlockMdp) -> Self {
        let phi = FeatureMap::ground_truth(env);
        let a_n = env.num_actions();
        let mu = (0..env.horizon())
            .map(|h| {
                let support: Vec<usize> = (0..env.num_codes(h + 1)).collect();
                let mut table = Vec::with_capacity(env.feature_dim(h));
                for z in 0..env.latent_count(h) {
                    for a in 0..a_n {
                        table.push(env.latent_kernel(h, z, a));
                    }
                }
                EmissionEmbedding {
                    num_labels: env.latent_count(h),
                    num_actions: a_n,
                    support,
                    table,
                    counts: None,
                }
            })
            .collect();
        let mut initial = vec![0.0; env.num_codes(0)];
        for (z, p) in env.initial().iter().enumerate() {
            for (c, o) in env.emission(0, z) {
                initial[*c] += p * o;
            }
        }
        let num_codes = (0..=env.horizon()).map(|h| env.num_codes(h)).collect();
        Self { phi, mu, initial, num_codes }
    }

    /// Model whose counts are the exact expected counts under `policy` in `env` (with a
    /// uniform action at each step when `uniform_action`).
    pub fn expected_counts(
        env: &BlockMdp,
        phi: &FeatureMap,
        policy: &Policy,
        uniform_action: bool,
    ) -> Result<Self> {
        let a_n = env.num_actions();
        let mut mu = Vec::with_capacity(env.horizon());
        for h in 0..env.horizon() {
            let mut counts = StepCounts::new(env.num_codes(h), a_n, env.num_codes(h + 1));
            let w = code_action_occupancy(env, policy, h, uniform_action);
            for (s, row) in w.iter().enumerate() {
                for (a, p) in row.iter().enumerate() {
                    if *p > 0.0 {
                        for (s2, q) in env.kernel(h, s, a)?.iter().enumerate() {
                            if *q > 0.0 {
                                counts.add(s, a, s2, p * q)?;
                            }
                        }
                    }
                }
            }
            mu.push(EmissionEmbedding::from_counts(&counts, &phi.steps[h], 0.0));
        }
        let mut model = Self::from_env(env);
        model.phi = phi.clone();
        model.mu = mu;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument { version: 1, model: self.clone() })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.version != 1 {
            return Err(Error::InvalidParameter(format!("unsupported model version {}", doc.version)));
        }
        Ok(doc.model)
    }

    /// `P̂_h(·|s, a)` as a dense vector over step-`h+1` codes.
    pub fn kernel(&self, h: usize, code: usize, a: usize) -> Result<Vec<f64>> {
        let idx = self.phi.index(h, code, a)?;
        Ok(self.mu[h].kernel_row(idx, self.num_codes[h + 1]))
    }

    pub fn support(&self, h: usize) -> &[usize] {
        &self.mu[h].support
    }
}

impl World for LinearMdpModel {
    fn horizon(&self) -> usize {
        self.mu.len()
    }

    fn num_actions(&self) -> usize {
        self.phi.num_actions
    }

    fn num_codes(&self, h: usize) -> usize {
        self.num_codes[h]
    }

    fn reset(&self, rng: &mut Rng) -> Result<Observation> {
        if self.initial.iter().all(|p| *p <= 0.0) {
            return Err(Error::PlanningSupportEmpty(0));
        }
        Ok(Observation::from_code(sample_dense(&self.initial, rng)))
    }

    fn step(&self, h: usize, obs: &Observation, a: usize, rng: &mut Rng) -> Result<Observation> {
        let mu = self.mu.get(h).ok_or(Error::StepOutOfRange { h, horizon: self.mu.len() })?;
        if mu.support.is_empty() {
            return Err(Error::PlanningSupportEmpty(h));
        }
        let idx = self.phi.index(h, obs.code(), a)?;
        let j = sample_dense(&mu.table[idx], rng);
        Ok(Observation::from_code(mu.support[j]))
    }
}

/// Outcome of decoder selection at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    pub selected: usize,
    pub log_likelihoods: Vec<f64>,
    /// Candidates whose likelihood ties the maximum (including `selected`).
    pub ties: Vec<usize>,
}

impl StepFit {
    pub fn is_tied(&self) -> bool {
        self.ties.len() > 1
    }
}

/// Selects the decoder maximising `Σ_k LL_k` at one step; ties go to the lowest index.
pub fn select_decoder(class: &StepClass, counts: &[StepCounts], h: usize) -> Result<StepFit> {
    if counts.iter().all(|c| c.total() == 0.0) {
        return Err(Error::EmptyDataset(h));
    }
    let lls: Vec<f64> = class
        .candidates
        .par_iter()
        .map(|dec| counts.iter().map(|c| log_likelihood(c, dec, SMOOTHING)).sum())
        .collect();
    if lls.iter().all(|l| !l.is_finite()) {
        return Err(Error::LikelihoodDegenerate(h));
    }
    let mut best = 0;
    for (i, l) in lls.iter().enumerate() {
        if *l > lls[best] {
            best = i;
        }
    }
    let top = lls[best];
    let tol = TIE_TOLERANCE * top.abs().max(1.0);
    let mut selected = best;
    let ties: Vec<usize> = (0..lls.len()).filter(|i| (lls[*i] - top).abs() <= tol).collect();
    if let Some(first) = ties.first() {
        selected = *first;
    }
    Ok(StepFit { selected, log_likelihoods: lls, ties })
}

/// Shared decoder and per-task `μ̂_k` fit by multi-task maximum likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskFit {
    pub phi: FeatureMap,
    /// `mu[k][h]`.
    pub mu: Vec<Vec<EmissionEmbedding>>,
    pub fits: Vec<StepFit>,
    /// Empirical step-0 distribution per task.
    pub initial: Vec<Vec<f64>>,
}

impl MultiTaskFit {
    pub fn any_tie(&self) -> bool {
        self.fits.iter().any(|f| f.is_tied())
    }

    pub fn model(&self, k: usize, num_codes: Vec<usize>) -> LinearMdpModel {
        LinearMdpModel {
            phi: self.phi.clone(),
            mu: self.mu[k].clone(),
            initial: self.initial[k].clone(),
            num_codes,
        }
    }
}

/// Counts per generating task at one step; `num_codes` covers steps `0..=H`.
pub fn counts_by_task(
    datasets: &[&TransitionDataset],
    num_tasks: usize,
    num_codes: &[usize],
    num_actions: usize,
    h: usize,
) -> Result<Vec<StepCounts>> {
    let mut counts: Vec<StepCounts> =
        (0..num_tasks).map(|_| StepCounts::new(num_codes[h], num_actions, num_codes[h + 1])).collect();
    for d in datasets.iter().filter(|d| d.h == h) {
        let g = d.task.generator();
        let other = match d.task {
            crate::dataset::TaskTag::Pair { j, .. } => j,
            crate::dataset::TaskTag::Single(k) => k,
        };
        if g >= num_tasks || other >= num_tasks {
            return Err(Error::MismatchedTasks { index: g.max(other), tasks: num_tasks });
        }
        counts[g].add_dataset(d)?;
    }
    Ok(counts)
}

/// Maximises `Σ_{i,j} E_{D_ij}[log φ(s,a)ᵀμ_i(s′)]` over the class, step by step.
pub fn mle_multitask(
    datasets: &[TransitionDataset],
    class: &HypothesisClass,
    num_tasks: usize,
    num_codes: &[usize],
) -> Result<MultiTaskFit> {
    let a_n = class.num_actions;
    let refs: Vec<&TransitionDataset> = datasets.iter().collect();
    let mut steps = Vec::with_capacity(class.horizon());
    let mut fits = Vec::with_capacity(class.horizon());
    let mut mu = vec![Vec::with_capacity(class.horizon()); num_tasks];
    for h in 0..class.horizon() {
        let counts = counts_by_task(&refs, num_tasks, num_codes, a_n, h)?;
        let fit = select_decoder(&class.steps[h], &counts, h)?;
        let dec = class.steps[h].candidates[fit.selected].clone();
        for (k, c) in counts.iter().enumerate() {
            mu[k].push(EmissionEmbedding::from_counts(c, &dec, SMOOTHING));
        }
        steps.push(dec);
        fits.push(fit);
    }
    let initial = (0..num_tasks)
        .map(|k| {
            let mut init = vec![0.0; num_codes[0]];
            for d in datasets.iter().filter(|d| d.h == 0 && d.task.generator() == k) {
                for t in &d.tuples {
                    init[t.s] += 1.0;
                }
            }
            let s: f64 = init.iter().sum();
            if s > 0.0 {
                init.iter_mut().for_each(|x| *x /= s);
            }
            init
        })
        .collect();
    Ok(MultiTaskFit { phi: FeatureMap::new(a_n, steps), mu, fits, initial })
}

/// Single-task MLE: the `K = 1` case of [`mle_multitask`].
pub fn mle_single_task(
    datasets: &[TransitionDataset],
    class: &HypothesisClass,
    num_codes: &[usize],
) -> Result<(LinearMdpModel, Vec<StepFit>)> {
    let relabeled: Vec<TransitionDataset> = datasets
        .iter()
        .map(|d| TransitionDataset { task: crate::dataset::TaskTag::Single(0), ..d.clone() })
        .collect();
    let fit = mle_multitask(&relabeled, class, 1, num_codes)?;
    let model = fit.model(0, num_codes.to_vec());
    Ok((model, fit.fits))
}

/// Per-code action distribution of a Markov policy (mixing over codes of latent `z`).
pub(crate) fn code_action_probs(pi: &MarkovPolicy, h: usize, z: usize, code: usize, a_n: usize) -> Vec<f64> {
    match pi {
        MarkovPolicy::Uniform { .. } => vec![1.0 / a_n as f64; a_n],
        MarkovPolicy::Latent(p) => p.probs[h][z].clone(),
        MarkovPolicy::Greedy(g) => {
            let mut v = vec![0.0; a_n];
            v[g.action(h, code)] = 1.0;
            v
        }
    }
}

/// Exact occupancy `d_h(s, a)` over codes, `[code][a]`.
pub fn code_action_occupancy(env: &BlockMdp, policy: &Policy, h: usize, uniform_action: bool) -> Vec<Vec<f64>> {
    let a_n = env.num_actions();
    let mut out = vec![vec![0.0; a_n]; env.num_codes(h)];
    for (w, pi) in policy.components() {
        let d = &crate::mdp::markov_state_occupancies(env, pi)[h];
        for (z, dz) in d.iter().enumerate() {
            if *dz == 0.0 {
                continue;
            }
            for (c, o) in env.emission(h, z) {
                let probs = if uniform_action {
                    vec![1.0 / a_n as f64; a_n]
                } else {
                    code_action_probs(pi, h, z, *c, a_n)
                };
                for (a, p) in probs.iter().enumerate() {
                    out[*c][a] += w * dz * o * p;
                }
            }
        }
    }
    out
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Per-step `E_{d^π_h}‖P̂_h(s,a) − P*_h(s,a)‖_TV` for an arbitrary kernel.
pub fn kernel_tv_error(
    env: &BlockMdp,
    policy: &Policy,
    kernel: impl Fn(usize, usize, usize) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    if !env.is_decodable() {
        return Err(Error::UnsupportedInNoisyMode);
    }
    let mut out = Vec::with_capacity(env.horizon());
    for h in 0..env.horizon() {
        let occ = code_action_occupancy(env, policy, h, false);
        let mut err = 0.0;
        for (s, row) in occ.iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                if *p > 0.0 {
                    err += p * tv(&kernel(h, s, a)?, &env.kernel(h, s, a)?);
                }
            }
        }
        out.push(err);
    }
    Ok(out)
}

pub fn model_tv_error(model: &LinearMdpModel, env: &BlockMdp, policy: &Policy) -> Result<Vec<f64>> {
    kernel_tv_error(env, policy, |h, s, a| model.kernel(h, s, a))
}

/// `μ̃_h(s′) = Σ_k α_{k;h}(s′) μ̂_{k;h}(s′)` over the union of the task supports.
pub fn target_span_model(
    mu_hats: &[Vec<EmissionEmbedding>],
    span: Option<&SpanCoefficients>,
) -> Result<Vec<EmissionEmbedding>> {
    let span = span.ok_or(Error::CoefficientsAbsent)?;
    let horizon = mu_hats.first().map(|m| m.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut support: Vec<usize> = mu_hats.iter().flat_map(|m| m[h].support.iter().copied()).collect();
        support.sort_unstable();
        support.dedup();
        let dim = mu_hats[0][h].dim();
        let mut table = vec![vec![0.0; support.len()]; dim];
        for (k, m) in mu_hats.iter().enumerate() {
            for (j, c) in support.iter().enumerate() {
                let alpha = span.get(h, k, *c);
                if alpha == 0.0 {
                    continue;
                }
                if let Some(col) = m[h].column(*c) {
                    for (i, row) in table.iter_mut().enumerate() {
                        row[j] += alpha * m[h].table[i][col];
                    }
                }
            }
        }
        out.push(EmissionEmbedding {
            num_labels: mu_hats[0][h].num_labels,
            num_actions: mu_hats[0][h].num_actions,
            support,
            table,
            counts: None,
        });
    }
    Ok(out)
}

/// `sup_π Σ_h E_{d^π_target}‖φ̂ᵀμ̃ − P*_target‖_TV` over `num_policies` random latent policies.
pub fn span_model_error(
    phi: &FeatureMap,
    mu_tilde: &[EmissionEmbedding],
    target: &BlockMdp,
    num_policies: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..num_policies {
        let pi = Policy::latent(crate::mdp::LatentPolicy::random(target, rng));
        let errs = kernel_tv_error(target, &pi, |h, s, a| {
            Ok(mu_tilde[h].kernel_row(phi.index(h, s, a)?, target.num_codes(h + 1)))
        })?;
        worst = worst.max(errs.iter().sum());
    }
    Ok(worst)
}

/// Row-stochastic `[latent][label]` frequencies of the decoder under `env`'s emissions.
pub fn confusion_matrix(env: &BlockMdp, phi: &FeatureMap, h: usize) -> Vec<Vec<f64>> {
    let labels = phi.steps[h].num_labels;
    (0..env.latent_count(h))
        .map(|z| {
            let mut row = vec![0.0; labels];
            for (c, p) in env.emission(h, z) {
                row[phi.steps[h].labels[*c]] += p;
            }
            row
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Off-diagonal mass of a confusion matrix after the best latent-to-label matching,
/// averaged over latents.
pub fn aligned_off_diagonal_mass(confusion: &[Vec<f64>]) -> f64 {
    let l = confusion.len();
    let labels = confusion.first().map(|r| r.len()).unwrap_or(0);
    if l == 0 || labels < l {
        return 0.0;
    }
    let best = permutations(labels)
        .into_iter()
        .map(|p| (0..l).map(|z| confusion[z][p[z]]).sum::<f64>())
        .fold(0.0, f64::max);
    1.0 - best / l as f64
}

/// Random binary test functions for the normalisation check.
pub fn random_binary_function(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
}
