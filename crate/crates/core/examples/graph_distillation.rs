//! Runs one distillation unit on random pooled features and prints the edge
//! weights, discrepancies and the weighted loss.

use dmd::graph_distillation::{run_unit, Space};
use dmd::params::Bound;
use dmd::{ModelConfig, ParamStore, Tape, Tensor};

fn main() -> dmd::Result<()> {
    let cfg = ModelConfig {
        d: 4,
        ..ModelConfig::default()
    };
    // Jitter moves the zero-initialized edge scorer away from uniform weights.
    let store = ParamStore::init(&cfg, 1).jittered(1, 0.5);
    let mut tape = Tape::new();
    let mut p = Bound::new(&store);
    let feats = [
        vec![1.0, 0.5, -0.2, 0.3],
        vec![-0.4, 0.9, 0.1, 0.0],
        vec![0.2, -0.3, 0.8, -1.0],
    ]
    .map(|v| tape.constant(Tensor::vector(v)));
    let unit = run_unit(&mut tape, &mut p, &cfg, Space::Homo, &feats)?;
    let g = unit.graph(&tape);

    println!("logits L {:+.4}  V {:+.4}  A {:+.4}", g.logits[0], g.logits[1], g.logits[2]);
    println!("W[source][target]:");
    for (name, row) in ["L", "V", "A"].iter().zip(&g.w) {
        println!("  {name}  {:.4} {:.4} {:.4}", row[0], row[1], row[2]);
    }
    for j in 0..3 {
        println!("column {j} sums to {:.12}", g.column_sum(j));
    }
    println!("loss {:.6}", tape.item(unit.loss));
    Ok(())
}
