//! Trains each component configuration briefly in both alignment modes and
//! prints test MAE.

use dmd::data::{generate, split, SynthConfig};
use dmd::harness::{evaluate, train};
use dmd::{AlignMode, Toggles, TrainConfig};

fn main() -> dmd::Result<()> {
    let data = generate(200, 1, &SynthConfig::default())?;
    let s = split(&data, 1);
    for mode in [AlignMode::Aligned, AlignMode::Unaligned] {
        println!("{} mode", mode.as_str());
        for toggles in Toggles::ablation_rows() {
            let mut cfg = TrainConfig {
                epochs: 5,
                mode,
                ..TrainConfig::default()
            };
            cfg.model.toggles = toggles;
            let out = train(&cfg, &s.train, &s.val, None)?;
            let m = evaluate(&out.best, &cfg, &s.test)?;
            println!("  {:36} MAE {:.3}  ACC2 {:.3}", toggles.label(), m.mae, m.acc2);
        }
    }
    Ok(())
}
