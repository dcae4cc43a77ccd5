//! Linear probes on learned features: 7-class and modality probes, plus
//! per-modality label probes, with and without feature decoupling.

use dmd::data::{generate, split, SynthConfig};
use dmd::harness::probe::{homo_class_probe, modality_probe, unimodal_probe, DEFAULT_RIDGE};
use dmd::harness::{infer_dataset, train};
use dmd::TrainConfig;

fn main() -> dmd::Result<()> {
    let data = generate(600, 0, &SynthConfig::default())?;
    let s = split(&data, 0);
    let full = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let mut no_fd = full.clone();
    no_fd.model.toggles.fd = false;
    no_fd.model.toggles.ca = false;
    no_fd.model.toggles.hetero_gd = false;

    for (name, cfg) in [("with FD", &full), ("without FD", &no_fd)] {
        let out = train(cfg, &s.train, &s.val, None)?;
        let a = infer_dataset(&out.best, cfg, &s.train)?;
        let b = infer_dataset(&out.best, cfg, &s.test)?;
        let homo7 = homo_class_probe((&a.features, &a.labels), (&b.features, &b.labels), DEFAULT_RIDGE)?;
        let modality = modality_probe(&a.features, &b.features, DEFAULT_RIDGE)?;
        let uni = unimodal_probe((&a.features, &a.labels), (&b.features, &b.labels), DEFAULT_RIDGE)?;
        println!("{name}:");
        println!("  7-class probe on shared features  {homo7:.3}");
        match modality {
            Some(acc) => println!("  modality probe on private features {acc:.3}"),
            None => println!("  modality probe: no private features"),
        }
        let acc2 = uni.per_modality.map(|r| r.acc2);
        println!(
            "  per-modality ACC2 L {:.3} V {:.3} A {:.3}  mean {:.3}  std {:.3}",
            acc2[0], acc2[1], acc2[2], uni.mean_acc2, uni.std_acc2
        );
    }
    Ok(())
}
