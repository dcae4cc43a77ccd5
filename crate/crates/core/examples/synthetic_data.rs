//! Generates a synthetic dataset, writes it as CSV and loads it back.
//!
//! ```text
//! cargo run --example synthetic_data -- /tmp/dmd-data
//! ```

use std::path::PathBuf;

use dmd::data::{generate, load_features, split, SynthConfig};

fn main() -> dmd::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "dmd-data".into()).into();
    let cfg = SynthConfig::default();
    let samples = generate(200, 0, &cfg)?;
    let manifest = dmd::data::write_dataset(&out, &samples)?;
    let loaded = load_features(&manifest, cfg.raw_dims)?;
    assert_eq!(loaded, samples);

    let s = split(&loaded, 0);
    println!("wrote {} ({} samples)", manifest.display(), loaded.len());
    println!("split: {} train / {} val / {} test", s.train.len(), s.val.len(), s.test.len());
    let mut counts = [0usize; 7];
    for x in &loaded {
        counts[(dmd::fusion::sentiment_class(x.label) + 3) as usize] += 1;
    }
    println!("class counts -3..3: {counts:?}");
    let first = &loaded[0];
    println!("{}: label {:+.3}, lengths {:?}", first.id, first.label, first.lens());
    Ok(())
}
