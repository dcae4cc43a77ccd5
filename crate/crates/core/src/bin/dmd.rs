use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dmd::config::AlignMode;
use dmd::data::{generate, load_features, make_batches, split, write_dataset, Sample, SynthConfig};
use dmd::harness::evaluate::write_predictions;
use dmd::harness::{checkpoint, dump_edges, gradcheck, infer_dataset, metrics, probe_unimodal, train, GradcheckOptions};
use dmd::{DmdError, ModelConfig, ParamStore, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "dmd", version, about = "Decoupled multimodal distillation for sentiment regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (manifest, feature CSVs, latents).
    GenData {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Equal sequence lengths across modalities.
        #[arg(long)]
        aligned: bool,
        /// Small raw dimensions (12, 6, 8) for quick experiments.
        #[arg(long)]
        small: bool,
        #[arg(long)]
        world_seed: Option<u64>,
    },
    /// Train on a manifest split 70/15/15 and save the best checkpoint.
    Train(Overrides),
    /// Evaluate a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate only the held-out test part of the standard split.
        #[arg(long)]
        test_split: bool,
        /// Also write per-sample predictions as CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Finite-difference check of every loss component on a tiny model.
    Gradcheck {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Per-sample and mean distillation edge weights as newline-delimited JSON.
    DumpEdges {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear probes of the label on each modality's pooled homogeneous features.
    ProbeUnimodal {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Newline-delimited JSON training log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    no_fd: bool,
    #[arg(long)]
    no_homogd: bool,
    #[arg(long)]
    no_ca: bool,
    #[arg(long)]
    no_heterogd: bool,
    #[arg(long)]
    mode: Option<AlignMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other config key, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| DmdError::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| DmdError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        let w = &mut cfg.weights;
        for (slot, value) in [
            (&mut w.lambda1, self.lambda1),
            (&mut w.lambda2, self.lambda2),
            (&mut w.gamma, self.gamma),
            (&mut w.alpha, self.alpha),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        let t = &mut cfg.model.toggles;
        t.fd &= !self.no_fd;
        t.homo_gd &= !self.no_homogd;
        t.ca &= !self.no_ca;
        t.hetero_gd &= !self.no_heterogd;
        if self.no_fd {
            t.ca = false;
            t.hetero_gd = false;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.data {
            cfg.data = Some(p.clone());
        }
        if let Some(p) = &self.checkpoint {
            cfg.checkpoint = Some(p.clone());
        }
        if let Some(p) = &self.log {
            cfg.log = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| DmdError::Numeric(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn load(manifest: &Path, cfg: &TrainConfig) -> Result<Vec<Sample>> {
    let samples = load_features(manifest, cfg.model.raw_dims)?;
    if samples.is_empty() {
        return Err(DmdError::Data(format!("{} lists no samples", manifest.display())));
    }
    Ok(samples)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            n,
            seed,
            out,
            aligned,
            small,
            world_seed,
        } => {
            let mut sc = if small { SynthConfig::small() } else { SynthConfig::default() };
            sc.aligned = aligned;
            if let Some(w) = world_seed {
                sc.world_seed = w;
            }
            let samples = generate(n, seed, &sc)?;
            let manifest = write_dataset(&out, &samples)?;
            println!("{}", manifest.display());
        }
        Command::Train(o) => {
            let cfg = o.resolve(TrainConfig::default())?;
            let manifest = cfg
                .data
                .clone()
                .ok_or_else(|| DmdError::Config("train needs --data or data= in the config".into()))?;
            let s = split(&load(&manifest, &cfg)?, cfg.seed);
            let mut sink: Option<Box<dyn Write>> = match &cfg.log {
                Some(p) => Some(Box::new(BufWriter::new(File::create(p)?))),
                None => None,
            };
            let out = train(&cfg, &s.train, &s.val, sink.as_mut().map(|w| w.as_mut() as &mut dyn Write))?;
            if let Some(w) = sink.as_mut() {
                w.flush()?;
            }
            if cfg.checkpoint.is_none() {
                log::warn!("no checkpoint path given; trained parameters are discarded");
            }
            let test = if s.test.is_empty() {
                None
            } else {
                Some(dmd::harness::evaluate(&out.best, &cfg, &s.test)?)
            };
            #[derive(Serialize)]
            struct Summary {
                steps: usize,
                best_epoch: usize,
                test: Option<dmd::harness::MetricsReport>,
            }
            print_json(&Summary {
                steps: out.steps,
                best_epoch: out.best_epoch,
                test,
            })?;
        }
        Command::Eval {
            checkpoint: path,
            data,
            test_split,
            predictions,
        } => {
            let (cfg, store) = checkpoint::load(&path)?;
            let all = load(&data, &cfg)?;
            let samples = if test_split { split(&all, cfg.seed).test } else { all };
            let inf = infer_dataset(&store, &cfg, &samples)?;
            if let Some(p) = predictions {
                write_predictions(&p, &inf)?;
            }
            print_json(&metrics(&inf.predictions(), &inf.labels)?)?;
        }
        Command::Gradcheck { overrides, probes } => {
            let tiny = TrainConfig {
                model: ModelConfig {
                    d: 4,
                    raw_dims: SynthConfig::small().raw_dims,
                    heads: 2,
                    ..ModelConfig::default()
                },
                ..TrainConfig::default()
            };
            let cfg = overrides.resolve(tiny)?;
            let sc = SynthConfig {
                raw_dims: cfg.model.raw_dims,
                ..SynthConfig::small()
            };
            let samples = generate(3, cfg.seed, &sc)?;
            let batch = make_batches(&samples, &[0, 1, 2], 3, cfg.mode)?.remove(0);
            let store = ParamStore::init(&cfg.model, cfg.seed).jittered(cfg.seed, 0.1);
            let opts = GradcheckOptions {
                n_probes: probes,
                seed: cfg.seed,
                ..GradcheckOptions::default()
            };
            let report = gradcheck(&cfg, &store, &batch, &opts)?;
            print_json(&report)?;
            if !report.passed() {
                return Err(DmdError::Numeric(format!(
                    "gradient check failed:\n{}",
                    report.failures.join("\n")
                )));
            }
        }
        Command::DumpEdges {
            checkpoint: path,
            data,
            out,
        } => {
            let (cfg, store) = checkpoint::load(&path)?;
            let dump = dump_edges(&store, &cfg, &load(&data, &cfg)?)?;
            match out {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    dump.write_ndjson(&mut w)?;
                    w.flush()?;
                }
                None => dump.write_ndjson(&mut io::stdout().lock())?,
            }
        }
        Command::ProbeUnimodal { checkpoint: path, data } => {
            let (cfg, store) = checkpoint::load(&path)?;
            let s = split(&load(&data, &cfg)?, cfg.seed);
            let report = probe_unimodal(&store, &cfg, &s.train, &s.test)?;
            print_json(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
