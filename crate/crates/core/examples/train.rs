//! Trains the full model on synthetic data with the NDJSON log kept in
//! memory, then reports test metrics.

use dmd::data::{generate, split, SynthConfig};
use dmd::harness::{evaluate, train, LogRecord};
use dmd::TrainConfig;

fn main() -> dmd::Result<()> {
    let data = generate(300, 0, &SynthConfig::default())?;
    let s = split(&data, 0);
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    let out = train(&cfg, &s.train, &s.val, Some(&mut log))?;
    for r in &out.log {
        if let LogRecord::Epoch { epoch, mean_total, val: Some(v), best, .. } = r {
            println!(
                "epoch {epoch:2}  loss {mean_total:9.3}  val MAE {:.3}  ACC7 {:.3}{}",
                v.mae,
                v.acc7,
                if *best { "  *" } else { "" }
            );
        }
    }
    println!("{} steps, {} log bytes", out.steps, log.len());
    let test = evaluate(&out.best, &cfg, &s.test)?;
    println!("test: MAE {:.3}  ACC2 {:.3}  ACC7 {:.3}  F1 {:.3}", test.mae, test.acc2, test.acc7, test.f1);
    Ok(())
}
