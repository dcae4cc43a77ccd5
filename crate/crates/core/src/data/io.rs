//! CSV ingestion and dumping.
//!
//! A manifest has the header `id,label,path_L,path_V,path_A`; paths are
//! relative to the manifest's directory. Feature files are headerless, one
//! time step per row. Synthetic dumps add `latents.csv` next to the manifest.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Latent, Sample};
use crate::error::{DmdError, Result};
use crate::modality::Modality;
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    label: f64,
    #[serde(rename = "path_L")]
    path_l: String,
    #[serde(rename = "path_V")]
    path_v: String,
    #[serde(rename = "path_A")]
    path_a: String,
}

const LATENTS_FILE: &str = "latents.csv";

fn csv_err(what: &str, path: &Path, e: csv::Error) -> DmdError {
    DmdError::Data(format!("{what} {}: {e}", path.display()))
}

fn read_matrix(path: &Path, id: &str, m: Modality, expected: usize) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DmdError::Data(format!("sample {id}: cannot read {m} features {}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(&format!("sample {id}: malformed {m} file"), path, e))?;
        if record.len() != expected {
            return Err(DmdError::Data(format!(
                "sample {id}: {m} row {r} has {} columns, expected {expected}",
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                DmdError::Data(format!("sample {id}: {m} row {r} has non-numeric value {field:?}"))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(DmdError::Data(format!("sample {id}: {m} file {} is empty", path.display())));
    }
    Tensor::matrix(rows, expected, data)
}

fn read_latents(path: &Path) -> Result<HashMap<String, Latent>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err("cannot read", path, e))?;
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err("malformed", path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(0).to_string();
        let class: i32 = field(1)
            .parse()
            .map_err(|_| DmdError::Data(format!("latents: bad class for sample {id}")))?;
        let parse_vec = |i: usize| -> Result<Vec<f64>> {
            if field(i).is_empty() {
                return Ok(Vec::new());
            }
            field(i)
                .split(' ')
                .map(|v| v.parse().map_err(|_| DmdError::Data(format!("latents: bad value for sample {id}"))))
                .collect()
        };
        let latent = Latent {
            class,
            z_c: parse_vec(2)?,
            z_m: [parse_vec(3)?, parse_vec(4)?, parse_vec(5)?],
        };
        out.insert(id, latent);
    }
    Ok(out)
}

/// Reads every sample listed in `manifest`, validating widths against
/// `raw_dims` and labels against `[-3, 3]`.
pub fn load_features(manifest: &Path, raw_dims: [usize; 3]) -> Result<Vec<Sample>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest).map_err(|e| csv_err("cannot read manifest", manifest, e))?;
    let latents = {
        let p = base.join(LATENTS_FILE);
        if p.exists() {
            read_latents(&p)?
        } else {
            HashMap::new()
        }
    };
    let mut samples = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| csv_err("malformed manifest", manifest, e))?;
        let paths = [&row.path_l, &row.path_v, &row.path_a];
        let mut seqs = Vec::with_capacity(3);
        for m in Modality::ALL {
            seqs.push(read_matrix(&base.join(paths[m.index()]), &row.id, m, raw_dims[m.index()])?);
        }
        let sample = Sample {
            latent: latents.get(&row.id).cloned(),
            id: row.id,
            seqs: seqs.try_into().expect("three modalities"),
            label: row.label,
        };
        sample.validate(raw_dims)?;
        samples.push(sample);
    }
    if samples.is_empty() {
        log::warn!("manifest {} lists no samples", manifest.display());
    }
    Ok(samples)
}

fn write_matrix(path: &Path, t: &Tensor) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err("cannot write", path, e))?;
    for r in 0..t.rows() {
        w.write_record(t.row(r).iter().map(|v| v.to_string()))
            .map_err(|e| csv_err("cannot write", path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `manifest.csv`, one feature file per sample and modality under
/// `features/`, and `latents.csv` when latents are present. Returns the
/// manifest path.
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<PathBuf> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir)?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| csv_err("cannot write", &manifest, e))?;
    for s in samples {
        let rel = Modality::ALL.map(|m| format!("features/{}_{m}.csv", s.id));
        for m in Modality::ALL {
            write_matrix(&dir.join(&rel[m.index()]), s.seq(m))?;
        }
        let [path_l, path_v, path_a] = rel;
        w.serialize(ManifestRow {
            id: s.id.clone(),
            label: s.label,
            path_l,
            path_v,
            path_a,
        })
        .map_err(|e| csv_err("cannot write", &manifest, e))?;
    }
    w.flush()?;
    if samples.iter().any(|s| s.latent.is_some()) {
        let path = dir.join(LATENTS_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err("cannot write", &path, e))?;
        w.write_record(["id", "class", "z_c", "z_L", "z_V", "z_A"])
            .map_err(|e| csv_err("cannot write", &path, e))?;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for s in samples {
            if let Some(l) = &s.latent {
                w.write_record([
                    s.id.clone(),
                    l.class.to_string(),
                    join(&l.z_c),
                    join(&l.z_m[0]),
                    join(&l.z_m[1]),
                    join(&l.z_m[2]),
                ])
                .map_err(|e| csv_err("cannot write", &path, e))?;
            }
        }
        w.flush()?;
    }
    Ok(manifest)
}
