//! Splits one synthetic sample into shared and private features, decodes it
//! back, and prints every decoupling loss term.

use dmd::data::{generate, SynthConfig};
use dmd::decoupling::{decouple, loss_cyc, loss_margin, loss_ort, loss_rec, shallow_encode, synthesize};
use dmd::params::Bound;
use dmd::{Modality, ModelConfig, ParamStore, Tape};

fn main() -> dmd::Result<()> {
    let cfg = ModelConfig {
        d: 8,
        raw_dims: SynthConfig::small().raw_dims,
        heads: 2,
        ..ModelConfig::default()
    };
    let store = ParamStore::init(&cfg, 0);
    let sample = &generate(1, 0, &SynthConfig::small())?[0];

    let mut tape = Tape::new();
    let mut p = Bound::new(&store);
    let mut rec = Vec::new();
    let mut cyc = Vec::new();
    let mut pooled = Vec::new();
    let mut pairs = Vec::new();
    for m in Modality::ALL {
        let len = sample.seq(m).rows();
        let raw = tape.constant(sample.seq(m).clone());
        let x = shallow_encode(&mut tape, &mut p, &cfg, m, raw)?;
        let pair = decouple(&mut tape, &mut p, x, m, len)?;
        let synth = synthesize(&mut tape, &mut p, &pair, m)?;
        rec.push(loss_rec(&mut tape, x, synth, len)?);
        cyc.push(loss_cyc(&mut tape, &mut p, &pair, synth, m, len)?);
        pooled.push(pair.homo_pooled);
        pairs.push((pair.homo_pooled, pair.hetero_pooled));
        println!("{m}: {len} steps, shared {:?}", tape.shape(pair.homo));
    }
    // Same class everywhere: one sample has no negatives, so the margin is 0.
    let classes = vec![0; 3];
    let mar = loss_margin(&mut tape, &pooled, &Modality::ALL, &classes, 0.2)?;
    let ort = loss_ort(&mut tape, &pairs)?;
    for m in Modality::ALL {
        let i = m.index();
        println!("{m}: rec {:.4}  cyc {:.4}", tape.item(rec[i]), tape.item(cyc[i]));
    }
    println!("margin {:.4}  orthogonality {:.4}", tape.item(mar), tape.item(ort));
    Ok(())
}
