//! Versioned text checkpoints.
//!
//! ```text
//! DMD-CHECKPOINT 1
//! [config]
//! d=32
//! ...
//! [params] 57
//! enc_com.w1 2 32 32
//! <values, space separated>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is bit-exact.

use std::fs;
use std::path::Path;

use crate::config::TrainConfig;
use crate::error::{DmdError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &str = "DMD-CHECKPOINT";
const VERSION: u32 = 1;

pub fn to_text(cfg: &TrainConfig, store: &ParamStore) -> String {
    let mut s = format!("{MAGIC} {VERSION}\n[config]\n");
    s.push_str(&cfg.to_text());
    s.push_str(&format!("[params] {}\n", store.len()));
    for (name, t) in store.iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("{name} {} {}\n", t.rank(), dims.join(" ")));
        let values: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
        s.push_str(&values.join(" "));
        s.push('\n');
    }
    s
}

fn bad(msg: impl Into<String>) -> DmdError {
    DmdError::Data(format!("checkpoint: {}", msg.into()))
}

pub fn from_text(text: &str) -> Result<(TrainConfig, ParamStore)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad(format!("missing {MAGIC} header")))?;
    if version != VERSION.to_string() {
        return Err(bad(format!("unsupported version {version}")));
    }
    if lines.next() != Some("[config]") {
        return Err(bad("missing [config] section"));
    }
    let mut config_text = String::new();
    let count = loop {
        let line = lines.next().ok_or_else(|| bad("missing [params] section"))?;
        if let Some(rest) = line.strip_prefix("[params]") {
            break rest
                .trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("bad parameter count {rest:?}")))?;
        }
        config_text.push_str(line);
        config_text.push('\n');
    };
    let cfg = TrainConfig::parse_text(&config_text)?;
    let mut store = ParamStore::default();
    for _ in 0..count {
        let head = lines.next().ok_or_else(|| bad("truncated parameter list"))?;
        let mut parts = head.split_whitespace();
        let name = parts.next().ok_or_else(|| bad("empty parameter header"))?;
        let rank: usize = parts
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| bad(format!("bad rank for {name}")))?;
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| bad(format!("bad dimension for {name}"))))
            .collect::<Result<_>>()?;
        if shape.len() != rank {
            return Err(bad(format!("{name}: rank {rank} with {} dimensions", shape.len())));
        }
        let values: Vec<f64> = lines
            .next()
            .ok_or_else(|| bad(format!("missing values for {name}")))?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad(format!("bad value {v:?} in {name}"))))
            .collect::<Result<_>>()?;
        let t = Tensor::new(shape, values).map_err(|e| bad(format!("{name}: {e}")))?;
        store.insert(name, t);
    }
    store.check_against(&cfg.model)?;
    Ok((cfg, store))
}

pub fn save(path: &Path, cfg: &TrainConfig, store: &ParamStore) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, to_text(cfg, store))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(TrainConfig, ParamStore)> {
    let text = fs::read_to_string(path)
        .map_err(|e| DmdError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    from_text(&text)
}
