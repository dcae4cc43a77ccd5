use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Sample;
use crate::error::{DmdError, Result};
use crate::graph_distillation::{DistillGraph, Space};
use crate::params::ParamStore;

use super::evaluate::infer_dataset;

/// One per-sample edge record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub sample_id: String,
    pub space: Space,
    #[serde(flatten)]
    pub graph: DistillGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub records: Vec<EdgeRecord>,
    /// Dataset-mean matrices; `None` when the unit is disabled.
    pub mean_homo: Option<DistillGraph>,
    pub mean_hetero: Option<DistillGraph>,
}

impl EdgeDump {
    /// Mean outgoing weight of `source` minus its mean incoming weight,
    /// summed over the other two modalities.
    pub fn dominance(graph: &DistillGraph, source: usize) -> f64 {
        (0..3)
            .filter(|&j| j != source)
            .map(|j| graph.w[source][j] - graph.w[j][source])
            .sum()
    }

    /// Writes the per-sample records and then the two mean records as
    /// newline-delimited JSON.
    pub fn write_ndjson(&self, w: &mut dyn Write) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{}", to_line(r)?)?;
        }
        for (space, g) in [(Space::Homo, &self.mean_homo), (Space::Hetero, &self.mean_hetero)] {
            if let Some(graph) = g {
                let rec = EdgeRecord {
                    sample_id: "mean".into(),
                    space,
                    graph: graph.clone(),
                };
                writeln!(w, "{}", to_line(&rec)?)?;
            }
        }
        Ok(())
    }
}

fn to_line<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| DmdError::Numeric(e.to_string()))
}

/// Edge matrices of both distillation units for every sample, plus means.
pub fn dump_edges(store: &ParamStore, cfg: &TrainConfig, samples: &[Sample]) -> Result<EdgeDump> {
    if samples.is_empty() {
        return Err(DmdError::Data("cannot dump edges of an empty dataset".into()));
    }
    let inf = infer_dataset(store, cfg, samples)?;
    let mut records = Vec::new();
    for (space, graphs) in [(Space::Homo, &inf.homo_graphs), (Space::Hetero, &inf.hetero_graphs)] {
        for (id, g) in inf.ids.iter().zip(graphs.iter()) {
            records.push(EdgeRecord {
                sample_id: id.clone(),
                space,
                graph: g.clone(),
            });
        }
    }
    let mean = |g: &[DistillGraph]| (!g.is_empty()).then(|| DistillGraph::mean(g));
    Ok(EdgeDump {
        records,
        mean_homo: mean(&inf.homo_graphs),
        mean_hetero: mean(&inf.hetero_graphs),
    })
}
