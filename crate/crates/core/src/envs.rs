//! Environment families: combination locks, transfer suites built from them, and the
//! two-source lower-bound family.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{BlockMdp, BlockMdpParts, Codebook, EmissionMode, Reward};
use crate::rng::Rng;

/// Noise scale of the noisy emission mode.
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Anti-shaped decoy reward paid on the first transition into the bad latent.
pub const ANTI_SHAPED: Reward = Reward { value: 0.1, prob: 0.5 };

const GOOD: [usize; 2] = [0, 1];
const BAD: usize = 2;

/// Latent dynamics of a combination lock.
///
/// Step 0 has only the two good latents (the bad latent is unreachable there); steps
/// `1..=H` have `z0, z1` (good) and `z2` (bad).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comblock {
    pub horizon: usize,
    pub num_actions: usize,
    /// `optimal_actions[h][g]` for good latent `g` at step `h < H`.
    pub optimal_actions: Vec<[usize; 2]>,
}

impl Comblock {
    pub fn random(horizon: usize, num_actions: usize, rng: &mut Rng) -> Result<Self> {
        if horizon == 0 || num_actions < 2 {
            return Err(Error::InvalidDimensions(
                "comblock needs H >= 1 and at least 2 actions".into(),
            ));
        }
        let optimal_actions = (0..horizon)
            .map(|_| [rng.random_range(0..num_actions), rng.random_range(0..num_actions)])
            .collect();
        Ok(Self { horizon, num_actions, optimal_actions })
    }

    pub fn latent_counts(&self) -> Vec<usize> {
        (0..=self.horizon).map(|h| if h == 0 { 2 } else { 3 }).collect()
    }

    pub fn transitions(&self) -> Vec<Vec<f64>> {
        let a_n = self.num_actions;
        let counts = self.latent_counts();
        (0..self.horizon)
            .map(|h| {
                let ln = counts[h + 1];
                let mut t = vec![0.0; counts[h] * a_n * ln];
                for z in 0..counts[h] {
                    for a in 0..a_n {
                        let row = &mut t[(z * a_n + a) * ln..(z * a_n + a + 1) * ln];
                        if z != BAD && a == self.optimal_actions[h][z] {
                            row[GOOD[0]] = 0.5;
                            row[GOOD[1]] = 0.5;
                        } else {
                            row[BAD] = 1.0;
                        }
                    }
                }
                t
            })
            .collect()
    }

    /// Reward 1 on arrival in a good latent at the last step, whatever the final action.
    pub fn rewards(&self) -> Vec<Vec<Reward>> {
        let a_n = self.num_actions;
        let counts = self.latent_counts();
        (0..self.horizon)
            .map(|h| {
                let mut r = vec![Reward::ZERO; counts[h] * a_n];
                for g in GOOD {
                    for a in 0..a_n {
                        r[g * a_n + a] = if h + 1 == self.horizon {
                            Reward::certain(1.0)
                        } else if a != self.optimal_actions[h][g] {
                            ANTI_SHAPED
                        } else {
                            Reward::ZERO
                        };
                    }
                }
                r
            })
            .collect()
    }
}

fn hadamard(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![1.0]];
    while m.len() < n {
        let k = m.len();
        let mut next = vec![vec![0.0; 2 * k]; 2 * k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = m[i][j];
                next[i][j + k] = m[i][j];
                next[i + k][j] = m[i][j];
                next[i + k][j + k] = -m[i][j];
            }
        }
        m = next;
    }
    let s = (n as f64).sqrt();
    m.into_iter().map(|row| row.into_iter().map(|x| x / s).collect()).collect()
}

/// Codeword layout shared by every task of a suite.
#[derive(Clone, Debug)]
struct Layout {
    /// `code_of[h][block][z]`.
    code_of: Vec<Vec<Vec<usize>>>,
    codebooks: Vec<Codebook>,
}

impl Layout {
    fn new(latent_counts: &[usize], num_blocks: usize, mode: EmissionMode, rng: &mut Rng) -> Self {
        let horizon = latent_counts.len() - 1;
        let max_latents = latent_counts.iter().copied().max().unwrap_or(1);
        let width = (max_latents + horizon + 1).next_power_of_two();
        let mix = matches!(mode, EmissionMode::Noisy { .. }).then(|| hadamard(width));
        let mut code_of = Vec::with_capacity(horizon + 1);
        let mut codebooks = Vec::with_capacity(horizon + 1);
        for (h, &l) in latent_counts.iter().enumerate() {
            let mut perm: Vec<usize> = (0..num_blocks * l).collect();
            perm.shuffle(rng);
            let mut latent_of = vec![0; num_blocks * l];
            let mut block_of = vec![0; num_blocks * l];
            let mut vectors = vec![Vec::new(); num_blocks * l];
            let mut per_block = vec![vec![0; l]; num_blocks];
            for b in 0..num_blocks {
                for z in 0..l {
                    let c = perm[b * l + z];
                    per_block[b][z] = c;
                    latent_of[c] = z;
                    block_of[c] = b;
                    let mut base = vec![0.0; width];
                    base[z] = 1.0;
                    base[max_latents + h] = 1.0;
                    let local = match &mix {
                        Some(hm) => hm
                            .iter()
                            .map(|row| row.iter().zip(&base).map(|(x, y)| x * y).sum())
                            .collect(),
                        None => base,
                    };
                    let mut v = vec![0.0; num_blocks * width];
                    v[b * width..(b + 1) * width].copy_from_slice(&local);
                    vectors[c] = v;
                }
            }
            code_of.push(per_block);
            codebooks.push(Codebook { latent_of, block_of, block_width: width, vectors });
        }
        Self { code_of, codebooks }
    }

    /// Emission tables from per-(h, z) block weights.
    fn emissions(&self, weights: impl Fn(usize, usize) -> Vec<(usize, f64)>) -> Vec<Vec<Vec<(usize, f64)>>> {
        self.code_of
            .iter()
            .enumerate()
            .map(|(h, blocks)| {
                (0..blocks[0].len())
                    .map(|z| weights(h, z).into_iter().map(|(b, w)| (blocks[b][z], w)).collect())
                    .collect()
            })
            .collect()
    }
}

fn comblock_env(
    cb: &Comblock,
    layout: &Layout,
    emissions: Vec<Vec<Vec<(usize, f64)>>>,
    mode: EmissionMode,
) -> Result<BlockMdp> {
    BlockMdp::new(BlockMdpParts {
        horizon: cb.horizon,
        num_actions: cb.num_actions,
        latent_counts: cb.latent_counts(),
        transitions: cb.transitions(),
        codebooks: layout.codebooks.clone(),
        emissions,
        rewards: cb.rewards(),
        initial: vec![0.5, 0.5],
        mode,
        seed: None,
    })
}

pub fn build_comblock(
    horizon: usize,
    num_actions: usize,
    mode: EmissionMode,
    rng: &mut Rng,
) -> Result<BlockMdp> {
    let cb = Comblock::random(horizon, num_actions, rng)?;
    let layout = Layout::new(&cb.latent_counts(), 1, mode, rng);
    comblock_env(&cb, &layout, layout.emissions(|_, _| vec![(0, 1.0)]), mode)
}

/// Random decodable Block MDP: `latents` states per layer, `codes_per_latent` codewords per
/// state, Dirichlet(1) transitions and Bernoulli rewards with uniform means. Emission and
/// initial weights are drawn from `[1, 2]` before normalising, so no codeword is rare.
pub fn build_random_block_mdp(
    latents: usize,
    codes_per_latent: usize,
    horizon: usize,
    num_actions: usize,
    rng: &mut Rng,
) -> Result<BlockMdp> {
    if latents == 0 || codes_per_latent == 0 || horizon == 0 || num_actions == 0 {
        return Err(Error::Construction("random Block MDP needs positive sizes".into()));
    }
    let simplex = |n: usize, rng: &mut Rng| {
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect::<Vec<f64>>()
    };
    let bounded = |n: usize, rng: &mut Rng| {
        let w: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect::<Vec<f64>>()
    };
    let n_codes = latents * codes_per_latent;
    let mut codebooks = Vec::with_capacity(horizon + 1);
    let mut emissions = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let mut perm: Vec<usize> = (0..n_codes).collect();
        perm.shuffle(rng);
        let mut latent_of = vec![0; n_codes];
        let mut em = Vec::with_capacity(latents);
        for z in 0..latents {
            let codes = &perm[z * codes_per_latent..(z + 1) * codes_per_latent];
            codes.iter().for_each(|&c| latent_of[c] = z);
            em.push(codes.iter().copied().zip(bounded(codes_per_latent, rng)).collect());
        }
        codebooks.push(Codebook { latent_of, block_of: vec![0; n_codes], block_width: n_codes, vectors: Vec::new() });
        emissions.push(em);
    }
    let transitions = (0..horizon)
        .map(|_| (0..latents * num_actions).flat_map(|_| simplex(latents, rng)).collect())
        .collect();
    let rewards = (0..horizon)
        .map(|_| (0..latents * num_actions).map(|_| Reward { value: 1.0, prob: rng.random() }).collect())
        .collect();
    BlockMdp::new(BlockMdpParts {
        horizon,
        num_actions,
        latent_counts: vec![latents; horizon + 1],
        transitions,
        codebooks,
        emissions,
        rewards,
        initial: bounded(latents, rng),
        mode: EmissionMode::Decodable,
        seed: None,
    })
}

/// Exact record of the linear-span coefficients `alpha[h][k][s′]` for `h < H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanCoefficients {
    pub alpha: Vec<Vec<Vec<f64>>>,
}

impl SpanCoefficients {
    pub fn get(&self, h: usize, k: usize, next_code: usize) -> f64 {
        self.alpha[h][k][next_code]
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha.iter().flatten().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn alpha_bar(&self) -> f64 {
        self.alpha
            .iter()
            .map(|per_k| {
                per_k.iter().map(|row| row.iter().fold(0.0f64, |m, x| m.max(x.abs()))).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteFamily {
    SharedEmission,
    Partitioned,
    Mixture,
    SelfTransfer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferSuite {
    pub family: SuiteFamily,
    pub sources: Vec<BlockMdp>,
    pub target: BlockMdp,
    pub span: Option<SpanCoefficients>,
}

#[derive(Serialize, Deserialize)]
struct SuiteDocument {
    version: u32,
    suite: TransferSuite,
}

impl TransferSuite {
    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn horizon(&self) -> usize {
        self.target.horizon()
    }

    pub fn num_actions(&self) -> usize {
        self.target.num_actions()
    }

    pub fn alpha_bar(&self) -> Option<f64> {
        self.span.as_ref().map(|s| s.alpha_bar())
    }

    pub fn alpha_max(&self) -> Option<f64> {
        self.span.as_ref().map(|s| s.alpha_max())
    }

    /// Shared H, A, latent counts and decoder across every task.
    pub fn check_shared_features(&self) -> Result<()> {
        let t = self.target.parts();
        for (k, s) in self.sources.iter().enumerate() {
            let p = s.parts();
            if p.horizon != t.horizon || p.num_actions != t.num_actions || p.latent_counts != t.latent_counts {
                return Err(Error::Construction(format!("source {k} differs in shape from the target")));
            }
            for h in 0..=t.horizon {
                if p.codebooks[h].latent_of != t.codebooks[h].latent_of {
                    return Err(Error::Construction(format!("source {k} decoder differs at step {h}")));
                }
            }
        }
        Ok(())
    }

    /// `max |P_target(s′|s,a) − Σ_k α_k(s′) P_k(s′|s,a)|` over every `(h, s, a, s′)`.
    pub fn span_residual(&self) -> Result<f64> {
        let span = self.span.as_ref().ok_or(Error::CoefficientsAbsent)?;
        let mut worst: f64 = 0.0;
        for h in 0..self.horizon() {
            for s in 0..self.target.num_codes(h) {
                for a in 0..self.num_actions() {
                    let target = self.target.kernel(h, s, a)?;
                    let mut mix = vec![0.0; target.len()];
                    for (k, src) in self.sources.iter().enumerate() {
                        for (c, p) in src.kernel(h, s, a)?.iter().enumerate() {
                            mix[c] += span.get(h, k, c) * p;
                        }
                    }
                    for (x, y) in target.iter().zip(&mix) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SuiteDocument { version: 1, suite: self.clone() })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SuiteDocument = serde_json::from_str(s)?;
        if doc.version != 1 {
            return Err(Error::InvalidParameter(format!("unsupported suite version {}", doc.version)));
        }
        doc.suite.check_shared_features()?;
        Ok(doc.suite)
    }
}

/// Sources are independent comblocks over one emission process; the target copies the
/// step-`h` dynamics of a random source whose two good latents have distinct optimal
/// actions. Sources are redrawn when some step has no such source.
pub fn build_shared_emission_suite(
    k: usize,
    horizon: usize,
    num_actions: usize,
    mode: EmissionMode,
    rng: &mut Rng,
) -> Result<TransferSuite> {
    if k < 2 {
        return Err(Error::InvalidParameter("a transfer suite needs at least two sources".into()));
    }
    let probe = Comblock::random(horizon, num_actions, rng)?;
    let layout = Layout::new(&probe.latent_counts(), 1, mode, rng);
    let emissions = layout.emissions(|_, _| vec![(0, 1.0)]);
    let (combs, chosen) = loop {
        let combs = (0..k)
            .map(|_| Comblock::random(horizon, num_actions, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut chosen = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let ok: Vec<usize> =
                (0..k).filter(|&i| combs[i].optimal_actions[h][0] != combs[i].optimal_actions[h][1]).collect();
            match ok.choose(rng) {
                Some(&i) => chosen.push(i),
                None => break,
            }
        }
        if chosen.len() == horizon {
            break (combs, chosen);
        }
    };
    let target_cb = Comblock {
        horizon,
        num_actions,
        optimal_actions: chosen.iter().enumerate().map(|(h, &i)| combs[i].optimal_actions[h]).collect(),
    };
    let sources = combs
        .iter()
        .map(|cb| comblock_env(cb, &layout, emissions.clone(), mode))
        .collect::<Result<Vec<_>>>()?;
    let target = comblock_env(&target_cb, &layout, emissions, mode)?;
    let alpha = (0..horizon)
        .map(|h| {
            (0..k)
                .map(|i| vec![if chosen[h] == i { 1.0 } else { 0.0 }; target.num_codes(h + 1)])
                .collect()
        })
        .collect();
    Ok(TransferSuite {
        family: SuiteFamily::SharedEmission,
        sources,
        target,
        span: Some(SpanCoefficients { alpha }),
    })
}

/// Sources share one comblock's dynamics but source `k` emits only into block `k`; the
/// target emits each `(h, z)` from a uniformly chosen block.
pub fn build_partitioned_suite(
    k: usize,
    horizon: usize,
    num_actions: usize,
    mode: EmissionMode,
    rng: &mut Rng,
) -> Result<TransferSuite> {
    if k < 2 {
        return Err(Error::InvalidParameter("a transfer suite needs at least two sources".into()));
    }
    let cb = Comblock::random(horizon, num_actions, rng)?;
    let counts = cb.latent_counts();
    let layout = Layout::new(&counts, k, mode, rng);
    let sources = (0..k)
        .map(|b| comblock_env(&cb, &layout, layout.emissions(|_, _| vec![(b, 1.0)]), mode))
        .collect::<Result<Vec<_>>>()?;
    let block_choice: Vec<Vec<usize>> =
        counts.iter().map(|&l| (0..l).map(|_| rng.random_range(0..k)).collect()).collect();
    let target = comblock_env(&cb, &layout, layout.emissions(|h, z| vec![(block_choice[h][z], 1.0)]), mode)?;
    let alpha = (0..horizon)
        .map(|h| {
            let cbk = &layout.codebooks[h + 1];
            (0..k)
                .map(|i| {
                    (0..cbk.len())
                        .map(|c| {
                            let hit = cbk.block_of[c] == i && block_choice[h + 1][cbk.latent_of[c]] == i;
                            if hit { 1.0 } else { 0.0 }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(TransferSuite {
        family: SuiteFamily::Partitioned,
        sources,
        target,
        span: Some(SpanCoefficients { alpha }),
    })
}

/// Target kernel `Σ_k p_k P_k`. Sources must share either their latent transitions
/// (emissions are mixed) or their emissions (transitions are mixed).
pub fn build_mixture_target(sources: Vec<BlockMdp>, weights: &[f64]) -> Result<TransferSuite> {
    if sources.is_empty() || weights.len() != sources.len() {
        return Err(Error::InvalidParameter("one weight per source is required".into()));
    }
    let s: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution("mixture weights".into()));
    }
    let first = sources[0].parts().clone();
    let same_t = sources.iter().all(|e| e.parts().transitions == first.transitions);
    let same_o = sources.iter().all(|e| e.parts().emissions == first.emissions);
    let mut parts = first.clone();
    if same_t {
        for h in 0..=first.horizon {
            for z in 0..first.latent_counts[h] {
                let mut dense = vec![0.0; first.codebooks[h].len()];
                for (env, w) in sources.iter().zip(weights) {
                    for (c, p) in env.emission(h, z) {
                        dense[*c] += w * p;
                    }
                }
                parts.emissions[h][z] =
                    dense.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect();
            }
        }
    } else if same_o {
        for h in 0..first.horizon {
            for (i, x) in parts.transitions[h].iter_mut().enumerate() {
                *x = sources.iter().zip(weights).map(|(e, w)| w * e.parts().transitions[h][i]).sum();
            }
        }
    } else {
        return Err(Error::Construction(
            "mixture sources must share transitions or emissions".into(),
        ));
    }
    // Renormalise rows against rounding.
    for h in 0..=first.horizon {
        for em in parts.emissions[h].iter_mut() {
            let s: f64 = em.iter().map(|(_, p)| p).sum();
            em.iter_mut().for_each(|(_, p)| *p /= s);
        }
    }
    let target = BlockMdp::new(parts)?;
    let alpha = (0..first.horizon)
        .map(|h| weights.iter().map(|w| vec![*w; target.num_codes(h + 1)]).collect())
        .collect();
    let suite = TransferSuite {
        family: SuiteFamily::Mixture,
        sources,
        target,
        span: Some(SpanCoefficients { alpha }),
    };
    suite.check_shared_features()?;
    Ok(suite)
}

/// Degenerate one-task suite whose target is the source itself.
pub fn self_transfer_suite(env: BlockMdp) -> TransferSuite {
    let alpha = (0..env.horizon()).map(|h| vec![vec![1.0; env.num_codes(h + 1)]]).collect();
    TransferSuite {
        family: SuiteFamily::SelfTransfer,
        sources: vec![env.clone()],
        target: env,
        span: Some(SpanCoefficients { alpha }),
    }
}

/// Two sources with disjoint R/B emission blocks, identical latent dynamics, and the
/// target mixing both blocks with weight 1/2.
#[derive(Clone, Debug)]
pub struct LowerBoundFamily {
    pub suite: TransferSuite,
    /// Decoder labels `[h][code]` for `h < H`; `psi_correct` is ψ*.
    pub psi_correct: Vec<Vec<usize>>,
    /// Agrees with `psi_correct` on R codes and swaps the B codes.
    pub psi_permuted: Vec<Vec<usize>>,
}

/// Codes at steps 0 and 1 are `[R1, R2, B1, B2]` (latents `[0, 1, 0, 1]`); the terminal
/// layer has one latent with codes `[R, B]`.
pub fn build_lower_bound_family() -> LowerBoundFamily {
    let cb = |latents: Vec<usize>, blocks: Vec<usize>| Codebook {
        block_width: latents.len() / 2,
        vectors: Vec::new(),
        latent_of: latents,
        block_of: blocks,
    };
    let codebooks = vec![
        cb(vec![0, 1, 0, 1], vec![0, 0, 1, 1]),
        cb(vec![0, 1, 0, 1], vec![0, 0, 1, 1]),
        cb(vec![0, 0], vec![0, 1]),
    ];
    // z1 -a1-> z3, z1 -a2-> z4, z2 -a1-> z4, z2 -a2-> z3.
    let transitions = vec![vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0], vec![1.0; 4]];
    let rewards = vec![vec![Reward::ZERO; 4], vec![
        Reward::certain(1.0),
        Reward::certain(1.0),
        Reward::ZERO,
        Reward::ZERO,
    ]];
    let emissions_for = |block: usize| -> Vec<Vec<Vec<(usize, f64)>>> {
        vec![
            vec![vec![(2 * block, 1.0)], vec![(2 * block + 1, 1.0)]],
            vec![vec![(2 * block, 1.0)], vec![(2 * block + 1, 1.0)]],
            vec![vec![(block, 1.0)]],
        ]
    };
    let make = |emissions| {
        BlockMdp::new(BlockMdpParts {
            horizon: 2,
            num_actions: 2,
            latent_counts: vec![2, 2, 1],
            transitions: transitions.clone(),
            codebooks: codebooks.clone(),
            emissions,
            rewards: rewards.clone(),
            initial: vec![0.5, 0.5],
            mode: EmissionMode::Decodable,
            seed: None,
        })
        .expect("fixed construction is valid")
    };
    let sources = vec![make(emissions_for(0)), make(emissions_for(1))];
    let suite = build_mixture_target(sources, &[0.5, 0.5]).expect("sources share dynamics");
    LowerBoundFamily {
        suite,
        psi_correct: vec![vec![0, 1, 0, 1]; 2],
        psi_permuted: vec![vec![0, 1, 1, 0]; 2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{latent_occupancy, optimal_value, Policy};
    use crate::rng::Streams;

    fn rng(seed: u64) -> Rng {
        Streams::new(seed).env()
    }

    #[test]
    fn comblock_value_is_one() {
        let env = build_comblock(5, 10, EmissionMode::Decodable, &mut rng(0)).unwrap();
        assert!((optimal_value(&env, &env.rewards()).value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn comblock_is_deterministic() {
        let a = build_comblock(4, 4, EmissionMode::Decodable, &mut rng(3)).unwrap();
        let b = build_comblock(4, 4, EmissionMode::Decodable, &mut rng(3)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn comblock_rejects_one_action() {
        assert!(build_comblock(3, 1, EmissionMode::Decodable, &mut rng(0)).is_err());
    }

    #[test]
    fn noisy_codewords_are_unit_and_separated() {
        let env = build_comblock(3, 4, EmissionMode::Noisy { sigma: 0.1 }, &mut rng(1)).unwrap();
        let cb = env.codebook(1);
        for v in &cb.vectors {
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 2.0).abs() < 1e-12);
        }
        assert_eq!(cb.vectors[0].len(), 8);
    }

    #[test]
    fn shared_suite_alpha_bar_is_one() {
        let s = build_shared_emission_suite(5, 6, 4, EmissionMode::Decodable, &mut rng(2)).unwrap();
        assert_eq!(s.alpha_bar(), Some(1.0));
        assert!(s.span_residual().unwrap() < 1e-12);
        s.check_shared_features().unwrap();
    }

    #[test]
    fn partitioned_sources_are_disjoint() {
        let s = build_partitioned_suite(2, 4, 4, EmissionMode::Decodable, &mut rng(4)).unwrap();
        for h in 0..=4 {
            for z in 0..s.target.latent_count(h) {
                let a: Vec<usize> = s.sources[0].emission(h, z).iter().map(|x| x.0).collect();
                let b: Vec<usize> = s.sources[1].emission(h, z).iter().map(|x| x.0).collect();
                assert!(a.iter().all(|c| !b.contains(c)));
            }
        }
        assert!(s.span_residual().unwrap() < 1e-12);
        assert_eq!(s.target.codebook(1).vectors[0].len(), 2 * 8);
    }

    #[test]
    fn lower_bound_target_value() {
        let fam = build_lower_bound_family();
        let t = &fam.suite.target;
        assert!((optimal_value(t, &t.rewards()).value - 1.0).abs() < 1e-12);
        for src in &fam.suite.sources {
            let occ = latent_occupancy(src, &Policy::uniform(2), 0, false);
            assert!(occ.iter().all(|p| (*p - 0.25).abs() < 1e-12));
        }
        assert!(fam.suite.span_residual().unwrap() < 1e-12);
    }

    #[test]
    fn suite_json_round_trip() {
        let s = build_partitioned_suite(2, 3, 4, EmissionMode::Decodable, &mut rng(5)).unwrap();
        let back = TransferSuite::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
