//! Crossmodal attention from a short visual sequence into a longer language
//! sequence, with the visual stream padded by two rows that must be ignored.

use dmd::crossmodal::crossmodal_attend;
use dmd::params::Bound;
use dmd::{Modality, ModelConfig, ParamStore, Tape, Tensor};

fn main() -> dmd::Result<()> {
    let cfg = ModelConfig {
        d: 4,
        heads: 2,
        ..ModelConfig::default()
    };
    let store = ParamStore::init(&cfg, 2);
    let mut tape = Tape::new();
    let mut p = Bound::new(&store);
    let lang = tape.constant(Tensor::from_rows(&[
        vec![0.1, 0.2, 0.3, 0.4],
        vec![0.0, -0.5, 0.5, 1.0],
        vec![1.0, 1.0, -1.0, 0.0],
        vec![-0.3, 0.2, 0.0, 0.7],
    ])?);
    let visual = tape.constant(Tensor::from_rows(&[
        vec![0.5, 0.0, 0.0, -0.5],
        vec![0.2, 0.9, -0.1, 0.3],
        vec![0.0; 4],
        vec![0.0; 4],
    ])?);
    let out = crossmodal_attend(&mut tape, &mut p, &cfg, Modality::V, Modality::L, visual, 2, lang)?;
    println!("output shape {:?}", tape.shape(out.output));
    for (h, a) in out.attention.iter().enumerate() {
        let t = tape.value(*a);
        println!("head {h} attention (rows: language steps, cols: visual steps):");
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:.3}")).collect();
            println!("  {}", row.join(" "));
        }
    }
    Ok(())
}
