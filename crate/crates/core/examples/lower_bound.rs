//! The two-source construction where per-source models cannot pin down the target decoder.

use reptransfer::envs::build_lower_bound_family;
use reptransfer::features::{model_tv_error, FeatureMap, LinearMdpModel};
use reptransfer::mdp::Policy;
use reptransfer::transfer::verify_lower_bound;

fn main() -> reptransfer::Result<()> {
    let fam = build_lower_bound_family();
    let uniform = Policy::uniform(2);
    for (name, labels) in [("correct", &fam.psi_correct), ("permuted", &fam.psi_permuted)] {
        let phi = FeatureMap::from_labels(2, labels, &[2, 2])?;
        let src: Vec<String> = fam
            .suite
            .sources
            .iter()
            .map(|env| {
                let model = LinearMdpModel::expected_counts(env, &phi, &uniform, false)?;
                let err: f64 = model_tv_error(&model, env, &uniform)?.iter().sum();
                Ok(format!("{err:.3}"))
            })
            .collect::<reptransfer::Result<_>>()?;
        let target = LinearMdpModel::expected_counts(&fam.suite.target, &phi, &uniform, false)?;
        let t_err: f64 = model_tv_error(&target, &fam.suite.target, &uniform)?.iter().sum();
        let check = verify_lower_bound(&fam, &phi)?;
        println!(
            "{name:<9} source model errors [{}]  target model error {t_err:.3}  value gap {:.3} over {} policies",
            src.join(", "),
            check.gap,
            check.policies_evaluated
        );
    }
    Ok(())
}
