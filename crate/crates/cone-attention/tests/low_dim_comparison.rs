//! Low-dimension ranking comparison: trained cone attention against
//! trained dot-product ranking at d = 4 on the depth-5 binary tree,
//! reported as a table and asserted within the run-to-run spread.

use cone_attention::hierarchy::{generate_tree, train_toy, TreeKind};
use cone_attention::kernels::{KernelConfig, KernelKind};

#[test]
fn trained_cone_ranking_matches_or_beats_dot_at_low_dimension() {
    let tree = generate_tree(TreeKind::CompleteBinary, 63, 0).unwrap();
    let seeds = [1u64, 2, 3];
    let mut means = Vec::new();
    println!("kernel       seed  agreement  spearman");
    for kind in [KernelKind::Umbral, KernelKind::Penumbral, KernelKind::Dot] {
        let cfg = KernelConfig::new(kind);
        let mut mean = 0.0;
        for &seed in &seeds {
            let out = train_toy(&tree, &cfg, 4, 2000, 0.2, seed).unwrap();
            println!(
                "{:12} {:4}  {:9.4}  {:8.4}",
                kind.name(),
                seed,
                out.final_scores.triple_agreement,
                out.final_scores.spearman
            );
            mean += out.final_scores.triple_agreement;
        }
        means.push(mean / seeds.len() as f64);
    }
    let [umbral, penumbral, dot] = means[..] else { unreachable!() };
    println!("means: umbral {umbral:.4}, penumbral {penumbral:.4}, dot {dot:.4}");
    // 0.03 is roughly twice the seed-to-seed spread of the difference
    // observed across this protocol
    let ci = 0.03;
    assert!(umbral >= dot - ci, "umbral {umbral} vs dot {dot}");
    assert!(penumbral >= dot - ci, "penumbral {penumbral} vs dot {dot}");
}
