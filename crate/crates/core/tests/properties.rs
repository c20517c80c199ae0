use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use reptransfer::dataset::{read_csv, write_csv, SamplingMode, TaskTag, TransitionDataset};
use reptransfer::envs::{build_comblock, build_mixture_target, build_random_block_mdp, build_shared_emission_suite};
use reptransfer::features::{enumerate_partitions, mle_bound_zeta, model_tv_error, FeatureMap, LinearMdpModel};
use reptransfer::harness::{summary_cell, ExperimentConfig};
use reptransfer::linalg::{elliptical_bonus, invert_spd, rank_one_update};
use reptransfer::mdp::{latent_occupancy, optimal_value, policy_value, EmissionMode, LatentPolicy, Policy};
use reptransfer::rng::Streams;

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim)
}

fn stirling2(n: usize, k: usize) -> u128 {
    let mut s = vec![vec![0u128; k + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for j in 1..=k.min(i) {
            s[i][j] = j as u128 * s[i - 1][j] + s[i - 1][j - 1];
        }
    }
    (1..=k).map(|j| s[n][j]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_are_distributions(seed in 0u64..1000, latents in 1usize..4, codes in 1usize..3, h in 1usize..4, a in 2usize..4) {
        let env = build_random_block_mdp(latents, codes, h, a, &mut Streams::new(seed).env()).unwrap();
        for t in 0..h {
            for c in 0..env.num_codes(t) {
                for act in 0..a {
                    let row = env.kernel(t, c, act).unwrap();
                    prop_assert!(row.iter().all(|p| *p >= 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn occupancy_sums_to_one_and_value_is_bounded(seed in 0u64..1000, h in 1usize..5) {
        let env = build_random_block_mdp(3, 2, h, 3, &mut Streams::new(seed).env()).unwrap();
        let pi = Policy::latent(LatentPolicy::random(&env, &mut Streams::new(seed).policy()));
        for t in 0..h {
            let occ = latent_occupancy(&env, &pi, t, false);
            prop_assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let v = policy_value(&env, &pi, &env.rewards());
        let v_star = optimal_value(&env, &env.rewards()).value;
        prop_assert!(v >= 0.0 && v <= v_star + 1e-12 && v_star <= h as f64);
    }

    #[test]
    fn comblock_optimum_is_one(seed in 0u64..1000, h in 1usize..8, a in 2usize..8) {
        let env = build_comblock(h, a, EmissionMode::Decodable, &mut Streams::new(seed).env()).unwrap();
        prop_assert!((optimal_value(&env, &env.rewards()).value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_tv_error_is_bounded(seed in 0u64..1000) {
        let env = build_random_block_mdp(3, 2, 3, 2, &mut Streams::new(seed).env()).unwrap();
        let labels: Vec<Vec<usize>> = (0..3).map(|h| (0..env.num_codes(h)).map(|c| (c + seed as usize) % 3).collect()).collect();
        let phi = FeatureMap::from_labels(2, &labels, &[3, 3, 3]).unwrap();
        let model = LinearMdpModel::expected_counts(&env, &phi, &Policy::uniform(2), false).unwrap();
        for e in model_tv_error(&model, &env, &Policy::uniform(2)).unwrap() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&e));
        }
    }

    #[test]
    fn sherman_morrison_matches_direct_inverse(vs in prop::collection::vec(vector(6), 1..12)) {
        let mut lambda = DMatrix::<f64>::identity(6, 6);
        let mut inv = DMatrix::<f64>::identity(6, 6);
        for v in &vs {
            let phi = DVector::from_vec(v.clone());
            lambda += &phi * phi.transpose();
            inv = rank_one_update(&inv, &phi);
        }
        let direct = invert_spd(&lambda).unwrap();
        assert_relative_eq!(inv, direct, epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn bonus_never_increases_with_data(x in vector(5), vs in prop::collection::vec(vector(5), 1..8)) {
        let phi = DVector::from_vec(x);
        let mut inv = DMatrix::<f64>::identity(5, 5);
        let mut last = elliptical_bonus(&phi, &inv);
        for v in &vs {
            inv = rank_one_update(&inv, &DVector::from_vec(v.clone()));
            let b = elliptical_bonus(&phi, &inv);
            prop_assert!(b <= last + 1e-9);
            last = b;
        }
    }

    #[test]
    fn zeta_halves_when_n_doubles(n in 1usize..100_000, ln_phi in 0.0f64..50.0, k in 0usize..10, delta in 0.001f64..0.999) {
        let a = mle_bound_zeta(n, ln_phi, ln_phi, k, delta).unwrap();
        let b = mle_bound_zeta(2 * n, ln_phi, ln_phi, k, delta).unwrap();
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn partition_count_is_stirling_sum(n in 1usize..8, k in 1usize..5) {
        let parts = enumerate_partitions(n, k);
        prop_assert_eq!(parts.len() as u128, stirling2(n, k));
        for p in &parts {
            let mut next = 0;
            for &l in p {
                prop_assert!(l <= next && l < k);
                next = next.max(l + 1);
            }
        }
    }

    #[test]
    fn summary_cell_follows_majority_rule(values in prop::collection::vec(prop::option::of(1usize..10_000), 1..10)) {
        let (mean, std, text) = summary_cell(&values);
        let finite: Vec<f64> = values.iter().flatten().map(|v| *v as f64).collect();
        let (k, n) = (finite.len(), values.len());
        if 2 * k <= n {
            prop_assert!(mean.is_none() && std.is_none());
            prop_assert!(text.starts_with('∞'));
            prop_assert_eq!(text.contains('['), k > 0);
        } else {
            let m = mean.unwrap();
            let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
            prop_assert!(std.unwrap() >= 0.0);
            prop_assert_eq!(text.ends_with(&format!("[{k}/{n}]")), k < n);
        }
    }

    #[test]
    fn mixture_targets_lie_in_the_span(w in prop::collection::vec(0.05f64..1.0, 3), seed in 0u64..100) {
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let base = build_shared_emission_suite(3, 3, 3, EmissionMode::Decodable, &mut Streams::new(seed).env()).unwrap();
        let mix = build_mixture_target(base.sources, &w).unwrap();
        prop_assert!(mix.span_residual().unwrap() < 1e-9);
    }

    #[test]
    fn config_toml_round_trip(seeds in prop::collection::vec(0u64..100, 1..6), n in 1usize..5000, t in 1usize..5000, beta in prop::option::of(0.1f64..10.0)) {
        let text = include_str!("../../../configs/shared_emission.toml");
        let mut cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.seeds = seeds;
        cfg.budgets.n = n;
        cfg.budgets.t_deploy = t;
        cfg.beta.deploy = beta;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn dataset_csv_round_trip(tuples in prop::collection::vec((0usize..6, 0usize..3, 0usize..6), 1..40), pair in any::<bool>()) {
        let task = if pair { TaskTag::Pair { i: 1, j: 0 } } else { TaskTag::Single(2) };
        let mode = if pair { SamplingMode::Cross } else { SamplingMode::OnPolicy };
        let mut d = TransitionDataset::new(3, task, mode);
        for (s, a, s2) in &tuples {
            d.push(*s, *a, *s2);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(std::slice::from_ref(&d), &path).unwrap();
        prop_assert_eq!(read_csv(&path).unwrap(), vec![d]);
    }
}
