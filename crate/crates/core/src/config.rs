//! Model and training configuration, with a flat `key=value` text form.
//!
//! ```text
//! # comments and blank lines are ignored
//! d=32
//! lambda1=0.1
//! fd=true
//! mode=unaligned
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{DmdError, Result};

/// Component switches mirroring the ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    /// Feature decoupling (shared/private encoders and the decoupling loss).
    pub fd: bool,
    pub homo_gd: bool,
    /// Crossmodal attention in the heterogeneous branch.
    pub ca: bool,
    pub hetero_gd: bool,
}

impl Toggles {
    pub const ALL_ON: Toggles = Toggles {
        fd: true,
        homo_gd: true,
        ca: true,
        hetero_gd: true,
    };
    pub const ALL_OFF: Toggles = Toggles {
        fd: false,
        homo_gd: false,
        ca: false,
        hetero_gd: false,
    };

    /// The six component configurations of the ablation table, full model first.
    pub fn ablation_rows() -> [Toggles; 6] {
        let t = |fd, homo_gd, ca, hetero_gd| Toggles {
            fd,
            homo_gd,
            ca,
            hetero_gd,
        };
        [
            t(true, true, true, true),
            t(true, true, true, false),
            t(true, true, false, true),
            t(true, true, false, false),
            t(true, false, false, false),
            t(false, false, false, false),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.hetero_gd && !self.fd {
            return Err(DmdError::Config(
                "hetero_gd requires feature decoupling (fd=true)".into(),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let f = |b: bool| if b { '+' } else { '-' };
        format!(
            "FD{} HomoGD{} CA{} HeteroGD{}",
            f(self.fd),
            f(self.homo_gd),
            f(self.ca),
            f(self.hetero_gd)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    Aligned,
    Unaligned,
}

impl FromStr for AlignMode {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(AlignMode::Aligned),
            "unaligned" => Ok(AlignMode::Unaligned),
            other => Err(DmdError::Config(format!(
                "mode must be aligned or unaligned, got {other:?}"
            ))),
        }
    }
}

impl AlignMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignMode::Aligned => "aligned",
            AlignMode::Unaligned => "unaligned",
        }
    }
}

/// How the logit discrepancy on a distillation edge is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discrepancy {
    Squared,
    Absolute,
}

impl FromStr for Discrepancy {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Discrepancy::Squared),
            "abs" | "absolute" => Ok(Discrepancy::Absolute),
            other => Err(DmdError::Config(format!(
                "discrepancy must be squared or abs, got {other:?}"
            ))),
        }
    }
}

impl Discrepancy {
    pub fn as_str(self) -> &'static str {
        match self {
            Discrepancy::Squared => "squared",
            Discrepancy::Absolute => "abs",
        }
    }
}

/// Learning-rate schedule over the planned number of optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `lr` to zero.
    Cosine,
}

impl FromStr for LrSchedule {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            other => Err(DmdError::Config(format!(
                "lr_schedule must be constant or cosine, got {other:?}"
            ))),
        }
    }
}

impl LrSchedule {
    pub fn as_str(self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        }
    }

    /// Learning rate for 0-based `step` out of `total` planned steps.
    pub fn lr_at(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac.min(1.0)).cos())
            }
        }
    }
}

/// Architecture of the network; everything that fixes parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Common feature dimension after shallow encoding.
    pub d: usize,
    /// Raw input dimensions for L, V, A.
    pub raw_dims: [usize; 3],
    /// Temporal convolution width (odd).
    pub kernel_width: usize,
    pub heads: usize,
    pub ca_layers: usize,
    pub positional: bool,
    pub discrepancy: Discrepancy,
    /// Stop gradients through the source (teacher) logit of each edge.
    pub detach_teacher: bool,
    pub toggles: Toggles,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            raw_dims: [300, 35, 74],
            kernel_width: 3,
            heads: 4,
            ca_layers: 1,
            positional: false,
            discrepancy: Discrepancy::Squared,
            detach_teacher: true,
            toggles: Toggles::ALL_ON,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(DmdError::Config("d must be positive".into()));
        }
        if self.raw_dims.contains(&0) {
            return Err(DmdError::Config("raw dimensions must be positive".into()));
        }
        if self.kernel_width.is_multiple_of(2) {
            return Err(DmdError::Config(format!(
                "kernel_width must be odd, got {}",
                self.kernel_width
            )));
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(DmdError::Config(format!(
                "d ({}) must be divisible by heads ({})",
                self.d, self.heads
            )));
        }
        if self.ca_layers == 0 {
            return Err(DmdError::Config("ca_layers must be at least 1".into()));
        }
        self.toggles.validate()
    }

    pub fn fused_dim(&self) -> usize {
        9 * self.d
    }
}

/// Weights of the objective terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    /// Cosine margin of the triplet term.
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.05,
            gamma: 0.1,
            alpha: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DmdError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(DmdError::Config(format!(
                "alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps; training stops early when reached.
    pub max_steps: Option<usize>,
    /// Peak learning rate.
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub mode: AlignMode,
    /// Record GD edge matrices in the step log.
    pub log_edges: bool,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            batch_size: 16,
            epochs: 30,
            max_steps: None,
            lr: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            seed: 0,
            mode: AlignMode::Unaligned,
            log_edges: true,
            data: None,
            checkpoint: None,
            log: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| DmdError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(DmdError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(DmdError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DmdError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key.trim() {
            "d" => m.d = parse(key, value)?,
            "raw_dim_l" => m.raw_dims[0] = parse(key, value)?,
            "raw_dim_v" => m.raw_dims[1] = parse(key, value)?,
            "raw_dim_a" => m.raw_dims[2] = parse(key, value)?,
            "kernel_width" => m.kernel_width = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "ca_layers" => m.ca_layers = parse(key, value)?,
            "positional" => m.positional = parse_bool(key, value)?,
            "discrepancy" => m.discrepancy = value.trim().parse()?,
            "detach_teacher" => m.detach_teacher = parse_bool(key, value)?,
            "fd" => m.toggles.fd = parse_bool(key, value)?,
            "homogd" => m.toggles.homo_gd = parse_bool(key, value)?,
            "ca" => m.toggles.ca = parse_bool(key, value)?,
            "heterogd" => m.toggles.hetero_gd = parse_bool(key, value)?,
            "lambda1" => self.weights.lambda1 = parse(key, value)?,
            "lambda2" => self.weights.lambda2 = parse(key, value)?,
            "gamma" => self.weights.gamma = parse(key, value)?,
            "alpha" => self.weights.alpha = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_steps" => {
                self.max_steps = match value.trim() {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "lr_schedule" => self.lr_schedule = value.trim().parse()?,
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = value.trim().parse()?,
            "log_edges" => self.log_edges = parse_bool(key, value)?,
            "data" => self.data = Some(PathBuf::from(value.trim())),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value.trim())),
            "log" => self.log = Some(PathBuf::from(value.trim())),
            other => return Err(DmdError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines on top of the defaults.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                DmdError::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    /// Serializes to `key=value` lines that [`TrainConfig::parse_text`] reads back.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &m.toggles;
        let w = &self.weights;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("d", m.d.to_string());
        kv("raw_dim_l", m.raw_dims[0].to_string());
        kv("raw_dim_v", m.raw_dims[1].to_string());
        kv("raw_dim_a", m.raw_dims[2].to_string());
        kv("kernel_width", m.kernel_width.to_string());
        kv("heads", m.heads.to_string());
        kv("ca_layers", m.ca_layers.to_string());
        kv("positional", m.positional.to_string());
        kv("discrepancy", m.discrepancy.as_str().to_string());
        kv("detach_teacher", m.detach_teacher.to_string());
        kv("fd", t.fd.to_string());
        kv("homogd", t.homo_gd.to_string());
        kv("ca", t.ca.to_string());
        kv("heterogd", t.hetero_gd.to_string());
        kv("lambda1", format!("{:e}", w.lambda1));
        kv("lambda2", format!("{:e}", w.lambda2));
        kv("gamma", format!("{:e}", w.gamma));
        kv("alpha", format!("{:e}", w.alpha));
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv(
            "max_steps",
            self.max_steps.map_or("none".into(), |v| v.to_string()),
        );
        kv("lr", format!("{:e}", self.lr));
        kv("lr_schedule", self.lr_schedule.as_str().to_string());
        kv("seed", self.seed.to_string());
        kv("mode", self.mode.as_str().to_string());
        kv("log_edges", self.log_edges.to_string());
        if let Some(p) = &self.data {
            kv("data", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint {
            kv("checkpoint", p.display().to_string());
        }
        if let Some(p) = &self.log {
            kv("log", p.display().to_string());
        }
        s
    }
}
