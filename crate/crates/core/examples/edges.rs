//! Trains briefly, then dumps per-sample and mean edge weights of both
//! distillation units and reports which modality each graph favours.

use dmd::data::{generate, split, SynthConfig};
use dmd::harness::{dump_edges, train, EdgeDump};
use dmd::TrainConfig;

fn main() -> dmd::Result<()> {
    let data = generate(300, 0, &SynthConfig::default())?;
    let s = split(&data, 0);
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &s.train, &s.val, None)?;
    let dump = dump_edges(&out.best, &cfg, &s.test)?;
    println!("{} per-sample records", dump.records.len());
    for (name, g) in [("homogeneous", &dump.mean_homo), ("heterogeneous", &dump.mean_hetero)] {
        let Some(g) = g else { continue };
        println!("{name} mean W[source][target]:");
        for (m, row) in ["L", "V", "A"].iter().zip(&g.w) {
            println!("  {m}  {:.3} {:.3} {:.3}", row[0], row[1], row[2]);
        }
        let dom = [0, 1, 2].map(|m| EdgeDump::dominance(g, m));
        println!("  outgoing minus incoming: L {:+.3} V {:+.3} A {:+.3}", dom[0], dom[1], dom[2]);
    }
    let mut first = Vec::new();
    dump.write_ndjson(&mut first)?;
    let text = String::from_utf8_lossy(&first);
    println!("first NDJSON line: {}", text.lines().next().unwrap_or(""));
    Ok(())
}
