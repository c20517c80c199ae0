//! Finite-latent episodic Block MDPs with codeword observations.
//!
//! Each step `h ∈ 0..=H` owns a codebook of observations. Every codeword is emitted by
//! exactly one latent state (the Block MDP property), which is recorded in
//! [`Codebook::latent_of`] and plays the role of the ground-truth decoder ψ*. Tasks in a
//! transfer suite share the codebook, so a single decoder is valid for all of them.
//!
//! Latent layer `H` exists only so that the last step has a transition; episodes stop
//! after the action at step `H-1`.

mod dp;
mod policy;

pub use dp::*;
pub use policy::*;

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const PROB_TOL: f64 = 1e-12;

/// Reward that pays `value` with probability `prob`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Reward {
    pub value: f64,
    pub prob: f64,
}

impl Reward {
    pub const ZERO: Reward = Reward { value: 0.0, prob: 1.0 };

    pub fn certain(value: f64) -> Self {
        Self { value, prob: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.value * self.prob
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        if self.prob >= 1.0 || rng.random::<f64>() < self.prob {
            self.value
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmissionMode {
    /// Observations are exact codewords.
    Decodable,
    /// Observations are codeword vectors plus isotropic Gaussian noise of scale `sigma`.
    Noisy { sigma: f64 },
}

/// Observation codebook of one step.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Codebook {
    /// Latent state emitting each codeword.
    pub latent_of: Vec<usize>,
    /// Observation block each codeword lives in.
    pub block_of: Vec<usize>,
    /// Width of one block in the vector layout.
    pub block_width: usize,
    /// Mixed codeword vectors (block `k` occupies coordinates `k*w..(k+1)*w`).
    pub vectors: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.latent_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latent_of.is_empty()
    }

    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, w) in self.vectors.iter().enumerate() {
            let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }
}

/// Zero-sized capability that gates access to hidden latent ids.
#[derive(Clone, Copy, Debug)]
pub struct Diagnostics(());

impl Diagnostics {
    pub fn enable() -> Self {
        Diagnostics(())
    }
}

/// What a learner sees at one step: a codeword index (the nearest codeword in noisy
/// mode) and, in noisy mode, the raw vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    code: usize,
    latent: Option<usize>,
    vector: Option<Arc<[f64]>>,
}

impl Observation {
    /// An observation known only by its codeword, e.g. when sampled from a learned model.
    pub fn from_code(code: usize) -> Self {
        Self { code, latent: None, vector: None }
    }

    pub fn code(&self) -> usize {
        self.code
    }

    pub fn vector(&self) -> Option<&[f64]> {
        self.vector.as_deref()
    }

    pub fn latent(&self, _cap: Diagnostics) -> Option<usize> {
        self.latent
    }

    pub(crate) fn hidden_latent(&self) -> Option<usize> {
        self.latent
    }
}

/// Anything that can be rolled out over codeword observations.
pub trait World {
    fn horizon(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn num_codes(&self, h: usize) -> usize;
    fn reset(&self, rng: &mut Rng) -> Result<Observation>;
    fn step(&self, h: usize, obs: &Observation, action: usize, rng: &mut Rng)
        -> Result<Observation>;
}

/// Serializable description of a Block MDP; validated into a [`BlockMdp`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockMdpParts {
    pub horizon: usize,
    pub num_actions: usize,
    /// Latent counts for layers `0..=H`.
    pub latent_counts: Vec<usize>,
    /// `transitions[h][(z*A + a)*L_{h+1} + z']` for `h < H`.
    pub transitions: Vec<Vec<f64>>,
    pub codebooks: Vec<Codebook>,
    /// `emissions[h][z]` is a sparse categorical over codewords of layer `h`.
    pub emissions: Vec<Vec<Vec<(usize, f64)>>>,
    /// `rewards[h][z*A + a]` for `h < H`.
    pub rewards: Vec<Vec<Reward>>,
    pub initial: Vec<f64>,
    pub mode: EmissionMode,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockMdpParts", into = "BlockMdpParts")]
pub struct BlockMdp {
    parts: BlockMdpParts,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidDistribution(format!("{what}: negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!("{what}: sums to {s}")));
    }
    Ok(())
}

impl TryFrom<BlockMdpParts> for BlockMdp {
    type Error = Error;

    fn try_from(parts: BlockMdpParts) -> Result<Self> {
        BlockMdp::new(parts)
    }
}

impl From<BlockMdp> for BlockMdpParts {
    fn from(env: BlockMdp) -> Self {
        env.parts
    }
}

/// Versioned JSON envelope for environment files.
#[derive(Serialize, Deserialize)]
struct EnvDocument {
    version: u32,
    env: BlockMdp,
}

pub const ENV_FORMAT_VERSION: u32 = 1;

impl BlockMdp {
    pub fn new(parts: BlockMdpParts) -> Result<Self> {
        let h_len = parts.horizon;
        let a = parts.num_actions;
        if h_len == 0 || a == 0 {
            return Err(Error::InvalidDimensions("horizon and actions must be positive".into()));
        }
        if parts.latent_counts.len() != h_len + 1 || parts.latent_counts.contains(&0) {
            return Err(Error::InvalidDimensions(
                "latent_counts must list H+1 positive counts".into(),
            ));
        }
        if parts.transitions.len() != h_len
            || parts.rewards.len() != h_len
            || parts.codebooks.len() != h_len + 1
            || parts.emissions.len() != h_len + 1
        {
            return Err(Error::InvalidDimensions("per-step tables have wrong lengths".into()));
        }
        for h in 0..h_len {
            let (l, ln) = (parts.latent_counts[h], parts.latent_counts[h + 1]);
            let t = &parts.transitions[h];
            if t.len() != l * a * ln {
                return Err(Error::InvalidDimensions(format!("transition table at step {h}")));
            }
            for row in t.chunks(ln) {
                check_distribution(row, &format!("transition row at step {h}"))?;
            }
            if parts.rewards[h].len() != l * a {
                return Err(Error::InvalidDimensions(format!("reward table at step {h}")));
            }
            for r in &parts.rewards[h] {
                if !(0.0..=1.0).contains(&r.value) || !(0.0..=1.0).contains(&r.prob) {
                    return Err(Error::InvalidParameter(format!("reward out of [0,1] at step {h}")));
                }
            }
        }
        for h in 0..=h_len {
            let cb = &parts.codebooks[h];
            let l = parts.latent_counts[h];
            if cb.is_empty()
                || cb.block_of.len() != cb.len()
                || cb.latent_of.iter().any(|z| *z >= l)
                || !(cb.vectors.is_empty() || cb.vectors.len() == cb.len())
            {
                return Err(Error::InvalidDimensions(format!("codebook at step {h}")));
            }
            if parts.emissions[h].len() != l {
                return Err(Error::InvalidDimensions(format!("emission table at step {h}")));
            }
            for (z, em) in parts.emissions[h].iter().enumerate() {
                let probs: Vec<f64> = em.iter().map(|(_, p)| *p).collect();
                check_distribution(&probs, &format!("emission of latent {z} at step {h}"))?;
                for (c, p) in em {
                    if *c >= cb.len() {
                        return Err(Error::InvalidDimensions(format!("emission code {c} at step {h}")));
                    }
                    if *p > 0.0 && cb.latent_of[*c] != z {
                        return Err(Error::Construction(format!(
                            "code {c} at step {h} is emitted by latent {z} but decodes to {}",
                            cb.latent_of[*c]
                        )));
                    }
                }
            }
        }
        if parts.initial.len() != parts.latent_counts[0] {
            return Err(Error::InvalidDimensions("initial distribution length".into()));
        }
        check_distribution(&parts.initial, "initial distribution")?;
        if let EmissionMode::Noisy { sigma } = parts.mode {
            if !(sigma >= 0.0) || parts.codebooks.iter().any(|cb| cb.vectors.is_empty()) {
                return Err(Error::InvalidParameter("noisy mode needs codeword vectors".into()));
            }
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &BlockMdpParts {
        &self.parts
    }

    pub fn into_parts(self) -> BlockMdpParts {
        self.parts
    }

    pub fn horizon(&self) -> usize {
        self.parts.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.parts.num_actions
    }

    pub fn latent_count(&self, h: usize) -> usize {
        self.parts.latent_counts[h]
    }

    pub fn mode(&self) -> EmissionMode {
        self.parts.mode
    }

    pub fn is_decodable(&self) -> bool {
        matches!(self.parts.mode, EmissionMode::Decodable)
    }

    pub fn seed(&self) -> Option<u64> {
        self.parts.seed
    }

    pub fn codebook(&self, h: usize) -> &Codebook {
        &self.parts.codebooks[h]
    }

    pub fn num_codes(&self, h: usize) -> usize {
        self.parts.codebooks[h].len()
    }

    /// Ground-truth feature dimension `L_h × A`.
    pub fn feature_dim(&self, h: usize) -> usize {
        self.parts.latent_counts[h] * self.parts.num_actions
    }

    pub fn transition(&self, h: usize, z: usize, a: usize) -> &[f64] {
        let ln = self.parts.latent_counts[h + 1];
        let start = (z * self.parts.num_actions + a) * ln;
        &self.parts.transitions[h][start..start + ln]
    }

    pub fn emission(&self, h: usize, z: usize) -> &[(usize, f64)] {
        &self.parts.emissions[h][z]
    }

    /// Dense emission probability `o_h(code | z)`.
    pub fn emission_prob(&self, h: usize, z: usize, code: usize) -> f64 {
        self.parts.emissions[h][z].iter().filter(|(c, _)| *c == code).map(|(_, p)| *p).sum()
    }

    pub fn reward(&self, h: usize, z: usize, a: usize) -> Reward {
        self.parts.rewards[h][z * self.parts.num_actions + a]
    }

    pub fn rewards(&self) -> RewardTable {
        RewardTable::new(self.parts.rewards.clone())
    }

    pub fn initial(&self) -> &[f64] {
        &self.parts.initial
    }

    /// Ground-truth decoder ψ* applied to a codeword.
    pub fn decode(&self, h: usize, code: usize) -> Result<usize> {
        if h > self.parts.horizon {
            return Err(Error::StepOutOfRange { h, horizon: self.parts.horizon });
        }
        self.parts.codebooks[h]
            .latent_of
            .get(code)
            .copied()
            .ok_or(Error::UnknownObservation { h, code })
    }

    /// The known reward lifted to codewords.
    pub fn code_rewards(&self) -> CodeRewards {
        let a = self.parts.num_actions;
        let table = (0..self.parts.horizon)
            .map(|h| {
                let cb = &self.parts.codebooks[h];
                let mut row = Vec::with_capacity(cb.len() * a);
                for &z in &cb.latent_of {
                    for act in 0..a {
                        row.push(self.reward(h, z, act).mean());
                    }
                }
                row
            })
            .collect();
        CodeRewards { num_actions: a, table }
    }

    pub fn emit(&self, h: usize, z: usize, rng: &mut Rng) -> Observation {
        let em = &self.parts.emissions[h][z];
        let code = sample_sparse(em, rng);
        match self.parts.mode {
            EmissionMode::Decodable => Observation { code, latent: Some(z), vector: None },
            EmissionMode::Noisy { sigma } => {
                let cb = &self.parts.codebooks[h];
                let mut v = cb.vectors[code].clone();
                let block = cb.block_of[code];
                let w = cb.block_width;
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("valid sigma");
                    for x in v.iter_mut().skip(block * w).take(w) {
                        *x += normal.sample(rng);
                    }
                }
                let nearest = cb.nearest(&v);
                Observation { code: nearest, latent: Some(z), vector: Some(v.into()) }
            }
        }
    }

    pub fn reset(&self, rng: &mut Rng) -> Observation {
        let z = sample_dense(&self.parts.initial, rng);
        self.emit(0, z, rng)
    }

    pub fn sample_next_latent(&self, h: usize, z: usize, a: usize, rng: &mut Rng) -> usize {
        sample_dense(self.transition(h, z, a), rng)
    }

    /// Reset to `(h, s, a)` and sample `s′ ~ P*_h(·|s,a)` by decoding `s`.
    pub fn generative_step(
        &self,
        h: usize,
        s: &Observation,
        a: usize,
        rng: &mut Rng,
    ) -> Result<Observation> {
        if h >= self.parts.horizon {
            return Err(Error::StepOutOfRange { h, horizon: self.parts.horizon });
        }
        if a >= self.parts.num_actions {
            return Err(Error::InvalidParameter(format!("action {a} out of range")));
        }
        let z = self.decode(h, s.code)?;
        let z_next = self.sample_next_latent(h, z, a, rng);
        Ok(self.emit(h + 1, z_next, rng))
    }

    /// Exact next-observation distribution `P*_h(·|code, a)` over codewords of layer `h+1`.
    pub fn kernel(&self, h: usize, code: usize, a: usize) -> Result<Vec<f64>> {
        let z = self.decode(h, code)?;
        Ok(self.latent_kernel(h, z, a))
    }

    pub fn latent_kernel(&self, h: usize, z: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_codes(h + 1)];
        for (z2, t) in self.transition(h, z, a).iter().enumerate() {
            if *t == 0.0 {
                continue;
            }
            for (c, p) in &self.parts.emissions[h + 1][z2] {
                out[*c] += t * p;
            }
        }
        out
    }

    /// Roll out one episode; latent ids travel inside the observations.
    pub fn sample_episode(&self, policy: &Policy, rng: &mut Rng) -> Trajectory {
        let markov = policy.begin_episode(rng);
        let mut steps = Vec::with_capacity(self.parts.horizon);
        let mut obs = self.reset(rng);
        for h in 0..self.parts.horizon {
            let a = markov.act(h, &obs, rng);
            let z = obs.latent.expect("environment observations carry latents");
            let reward = self.reward(h, z, a).sample(rng);
            let next = if h + 1 < self.parts.horizon {
                let z2 = self.sample_next_latent(h, z, a, rng);
                Some(self.emit(h + 1, z2, rng))
            } else {
                None
            };
            steps.push(Step { h, observation: obs, action: a, reward });
            match next {
                Some(n) => obs = n,
                None => break,
            }
        }
        Trajectory { steps, terminal: true }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvDocument {
            version: ENV_FORMAT_VERSION,
            env: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: EnvDocument = serde_json::from_str(s)?;
        if doc.version != ENV_FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!("unsupported env version {}", doc.version)));
        }
        Ok(doc.env)
    }

    /// Ground-truth embeddings φ*, μ* of the low-rank factorisation.
    pub fn ground_truth(&self) -> GroundTruthFeatures<'_> {
        GroundTruthFeatures { env: self }
    }
}

impl World for BlockMdp {
    fn horizon(&self) -> usize {
        self.parts.horizon
    }

    fn num_actions(&self) -> usize {
        self.parts.num_actions
    }

    fn num_codes(&self, h: usize) -> usize {
        self.parts.codebooks[h].len()
    }

    fn reset(&self, rng: &mut Rng) -> Result<Observation> {
        Ok(BlockMdp::reset(self, rng))
    }

    fn step(&self, h: usize, obs: &Observation, a: usize, rng: &mut Rng) -> Result<Observation> {
        match obs.latent {
            Some(z) if h < self.parts.horizon => {
                let z2 = self.sample_next_latent(h, z, a, rng);
                Ok(self.emit(h + 1, z2, rng))
            }
            _ => self.generative_step(h, obs, a, rng),
        }
    }
}

/// φ*_h(s,a) = e_{(ψ*(s), a)} and μ*_h(s′)_{(z,a)} = Σ_{z′} T_h(z′|z,a)·o_{h+1}(s′|z′).
pub struct GroundTruthFeatures<'a> {
    env: &'a BlockMdp,
}

impl GroundTruthFeatures<'_> {
    pub fn dim(&self, h: usize) -> usize {
        self.env.feature_dim(h)
    }

    pub fn phi_index(&self, h: usize, code: usize, a: usize) -> Result<usize> {
        Ok(self.env.decode(h, code)? * self.env.num_actions() + a)
    }

    pub fn phi(&self, h: usize, code: usize, a: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim(h)];
        v[self.phi_index(h, code, a)?] = 1.0;
        Ok(v)
    }

    pub fn mu(&self, h: usize, next_code: usize) -> Vec<f64> {
        let env = self.env;
        let a_n = env.num_actions();
        let z2 = env.codebook(h + 1).latent_of[next_code];
        let o = env.emission_prob(h + 1, z2, next_code);
        let mut v = vec![0.0; self.dim(h)];
        for z in 0..env.latent_count(h) {
            for a in 0..a_n {
                v[z * a_n + a] = env.transition(h, z, a)[z2] * o;
            }
        }
        v
    }
}

/// Known mean rewards indexed by codeword: `table[h][code*A + a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeRewards {
    pub num_actions: usize,
    pub table: Vec<Vec<f64>>,
}

impl CodeRewards {
    pub fn zero(world: &impl World) -> Self {
        let a = world.num_actions();
        let table = (0..world.horizon()).map(|h| vec![0.0; world.num_codes(h) * a]).collect();
        Self { num_actions: a, table }
    }

    pub fn get(&self, h: usize, code: usize, a: usize) -> f64 {
        self.table[h].get(code * self.num_actions + a).copied().unwrap_or(0.0)
    }

    pub fn row(&self, h: usize, code: usize) -> &[f64] {
        let a = self.num_actions;
        &self.table[h][code * a..(code + 1) * a]
    }
}

/// One step of a rollout.
#[derive(Clone, Debug)]
pub struct Step {
    pub h: usize,
    pub observation: Observation,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn latents(&self, cap: Diagnostics) -> Vec<Option<usize>> {
        self.steps.iter().map(|s| s.observation.latent(cap)).collect()
    }
}

pub(crate) fn sample_dense(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, x) in p.iter().enumerate() {
        if *x <= 0.0 {
            continue;
        }
        acc += x;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub(crate) fn sample_sparse(p: &[(usize, f64)], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = p.first().map(|(c, _)| *c).unwrap_or(0);
    for (c, x) in p {
        if *x <= 0.0 {
            continue;
        }
        acc += x;
        last = *c;
        if u < acc {
            return *c;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state_env() -> BlockMdp {
        // 2 latents, 2 actions, H = 2; one code per latent.
        let cb = |n: usize| Codebook {
            latent_of: (0..n).collect(),
            block_of: vec![0; n],
            block_width: n,
            vectors: Vec::new(),
        };
        let em = |n: usize| (0..n).map(|z| vec![(z, 1.0)]).collect::<Vec<_>>();
        BlockMdp::new(BlockMdpParts {
            horizon: 2,
            num_actions: 2,
            latent_counts: vec![2, 2, 2],
            transitions: vec![
                vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 1.0, 0.0],
                vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            ],
            codebooks: vec![cb(2), cb(2), cb(2)],
            emissions: vec![em(2), em(2), em(2)],
            rewards: vec![
                vec![Reward::ZERO; 4],
                vec![Reward::certain(1.0), Reward::ZERO, Reward::ZERO, Reward::certain(0.5)],
            ],
            initial: vec![0.5, 0.5],
            mode: EmissionMode::Decodable,
            seed: None,
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let mut parts = two_state_env().into_parts();
        parts.transitions[0][0] = 0.9;
        assert!(matches!(BlockMdp::new(parts), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn rejects_emission_outside_decoder() {
        let mut parts = two_state_env().into_parts();
        parts.emissions[1][0] = vec![(1, 1.0)];
        assert!(matches!(BlockMdp::new(parts), Err(Error::Construction(_))));
    }

    #[test]
    fn horizon_one_episode_has_one_step() {
        let mut parts = two_state_env().into_parts();
        parts.horizon = 1;
        parts.latent_counts.pop();
        parts.transitions.pop();
        parts.rewards.pop();
        parts.codebooks.pop();
        parts.emissions.pop();
        let env = BlockMdp::new(parts).unwrap();
        let mut rng = crate::rng::Streams::new(1).policy();
        let t = env.sample_episode(&Policy::uniform(2), &mut rng);
        assert_eq!(t.steps.len(), 1);
        assert!(t.terminal);
    }

    #[test]
    fn generative_step_rejects_unknown_code() {
        let env = two_state_env();
        let mut rng = crate::rng::Streams::new(1).policy();
        let err = env.generative_step(0, &Observation::from_code(9), 0, &mut rng);
        assert!(matches!(err, Err(Error::UnknownObservation { h: 0, code: 9 })));
    }

    #[test]
    fn latent_is_gated_behind_capability() {
        let env = two_state_env();
        let mut rng = crate::rng::Streams::new(1).policy();
        let obs = env.reset(&mut rng);
        assert_eq!(obs.latent(Diagnostics::enable()), Some(obs.code()));
    }

    #[test]
    fn json_round_trip() {
        let env = two_state_env();
        let s = env.to_json().unwrap();
        let back = BlockMdp::from_json(&s).unwrap();
        assert_eq!(back, env);
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn kernel_validity() {
        let env = two_state_env();
        let gt = env.ground_truth();
        for h in 0..2 {
            for c in 0..2 {
                for a in 0..2 {
                    let phi = gt.phi(h, c, a).unwrap();
                    let total: f64 = (0..env.num_codes(h + 1))
                        .map(|c2| gt.mu(h, c2).iter().zip(&phi).map(|(m, p)| m * p).sum::<f64>())
                        .sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
