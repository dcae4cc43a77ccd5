//! Finite-difference check of every loss component on a tiny model.

use dmd::data::{generate, make_batches, SynthConfig};
use dmd::harness::{gradcheck, GradcheckOptions};
use dmd::{AlignMode, ModelConfig, ParamStore, TrainConfig};

fn main() -> dmd::Result<()> {
    let cfg = TrainConfig {
        model: ModelConfig {
            d: 4,
            raw_dims: SynthConfig::small().raw_dims,
            heads: 2,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let samples = generate(3, 0, &SynthConfig::small())?;
    let batch = make_batches(&samples, &[0, 1, 2], 3, AlignMode::Unaligned)?.remove(0);
    let store = ParamStore::init(&cfg.model, 0).jittered(0, 0.1);
    let report = gradcheck(&cfg, &store, &batch, &GradcheckOptions::default())?;
    for c in &report.components {
        let worst = c.worst.as_ref().map_or(String::new(), |p| format!("  worst at {}[{}]", p.param, p.index));
        println!("{:10} {:3} probes  max rel err {:.2e}{worst}", c.component, c.probes, c.max_rel_err);
    }
    println!("teacher-path gradient {}", report.teacher_path_grad);
    println!("{}", if report.passed() { "passed" } else { "FAILED" });
    Ok(())
}
