//! Decoder visualisation on a partitioned suite: the true decoder against one with a
//! block-permuted labelling.

use reptransfer::envs::build_partitioned_suite;
use reptransfer::features::FeatureMap;
use reptransfer::harness::emit_decoder_viz;
use reptransfer::mdp::EmissionMode;
use reptransfer::rng::Streams;

fn main() -> reptransfer::Result<()> {
    let streams = Streams::new(1);
    let suite = build_partitioned_suite(2, 4, 3, EmissionMode::Decodable, &mut streams.env())?;
    let target = &suite.target;
    let truth = FeatureMap::ground_truth(target);
    let second = &suite.sources[1];
    let labels: Vec<Vec<usize>> = (0..target.horizon())
        .map(|h| {
            let block: Vec<usize> =
                (0..second.latent_count(h)).flat_map(|z| second.emission(h, z).iter().map(|(c, _)| *c)).collect();
            (0..target.num_codes(h))
                .map(|c| {
                    let l = truth.label(h, c).expect("ground truth covers every code");
                    if block.contains(&c) && l < 2 { 1 - l } else { l }
                })
                .collect()
        })
        .collect();
    let dims: Vec<usize> = truth.steps.iter().map(|s| s.num_labels).collect();
    let permuted = FeatureMap::from_labels(3, &labels, &dims)?;
    for (name, phi) in [("ground truth", &truth), ("block-permuted", &permuted)] {
        let viz = emit_decoder_viz(phi, target, 0..target.horizon(), &mut streams.policy())?;
        println!("{name}: {} collapse(s)", viz.collapses.len());
        for (z, grid) in viz.grids.iter().enumerate() {
            for (label, row) in grid.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| v.map_or("  -  ".into(), |x| format!("{x:.2} "))).collect();
                println!("  latent {z} label {label}: {}", cells.join(""));
            }
        }
    }
    Ok(())
}
