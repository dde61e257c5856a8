//! Command-line front end.
//!
//! Every command resolves its settings from flags, an optional `--config`
//! file and defaults (in that order), writes the result to
//! `<out>/resolved.cfg`, and can be re-run from that file alone.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{
    attribute_correlation, attribute_vector, circle_directions, contour_distances,
    distance_preservation, interp_quality, interpolate, latent_pairs, median, metric_stats,
    model_attribute, posterior_samples, riemannian_length, smoothness_pairs, EvalReport, Interp,
};
use crate::data::{
    attribute_values, load_binary, load_sequences, percentile_band_split, random_split,
    save_binary, save_sequences, synth_toy_corpus, Attribute, Band, DatasetSplit,
};
use crate::error::{Error, Result};
use crate::flatness::FlatnessConfig;
use crate::jam::{serve, ServeConfig};
use crate::kv::KvMap;
use crate::model::FmVae;
use crate::objective::{train, write_log, TrainConfig, TrainState};
use crate::seq::{ModelConfig, SequenceBatch, SequenceKind};
use crate::tensor::Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "fmvae", version, about = "Flat-manifold music VAE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Settings file (`key = value`); flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; falls back to FMJ_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<SequenceKind>,
        #[arg(long)]
        n: Option<usize>,
        /// Frames per sequence.
        #[arg(long)]
        steps: Option<usize>,
        /// jsonl or bin.
        #[arg(long)]
        format: Option<String>,
    },
    /// Train a model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model and training preset.
        #[arg(long)]
        preset: Option<String>,
        /// Standard normal prior instead of the hierarchical one.
        #[arg(long)]
        no_vhp: bool,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// none, random, middle-10 or middle-50.
        #[arg(long)]
        split: Option<String>,
        /// Attribute for band splits.
        #[arg(long)]
        attr: Option<Attribute>,
        /// Extra `key=value` overrides.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Smoothness and geometry of decoded interpolations.
    EvalSmoothness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        io: ModelData,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        interior: Option<usize>,
        #[arg(long)]
        interp: Option<Interp>,
    },
    /// Interpolation quality on a held-out attribute band.
    EvalQuality {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        io: ModelData,
        #[arg(long)]
        band: Option<Band>,
        #[arg(long)]
        attr: Option<Attribute>,
    },
    /// Attribute vector and its correlation with the decoded attribute.
    Attr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        io: ModelData,
        #[arg(long)]
        attr: Option<Attribute>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Decode a path between two sequences of the data set.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        io: ModelData,
        #[arg(long)]
        from: Option<usize>,
        #[arg(long)]
        to: Option<usize>,
        /// Interior points.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        interp: Option<Interp>,
    },
    /// Equal path-length contours around a latent point.
    Contours {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        io: ModelData,
        /// Data index whose posterior mean is the centre.
        #[arg(long)]
        center: Option<usize>,
        #[arg(long)]
        directions: Option<usize>,
        /// Reference radius fixing the target length.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Run the jam broker.
    JamServe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        /// WebSocket listen address, or `none`.
        #[arg(long)]
        ws_addr: Option<String>,
        #[arg(long)]
        std: Option<f64>,
    },
}

#[derive(Args, Debug, Clone)]
struct ModelData {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
}

impl FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "lerp" => Ok(Interp::Linear),
            "slerp" => Ok(Interp::Slerp),
            other => Err(Error::invalid(format!("unknown interpolation `{other}`"))),
        }
    }
}

impl Display for Interp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Interp::Linear => "linear",
            Interp::Slerp => "slerp",
        })
    }
}

/// Settings gathered from flags, the config file and defaults, recorded in
/// resolution order.
struct Resolver {
    file: KvMap,
    snapshot: KvMap,
}

impl Resolver {
    fn new(command: &str, common: &Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => KvMap::load(p)?,
            None => KvMap::new(),
        };
        if let Some(c) = file.raw("command") {
            if c != command {
                return Err(Error::invalid(format!(
                    "config was written by `{c}`, not `{command}`"
                )));
            }
        }
        let mut snapshot = KvMap::new();
        snapshot.set("command", command);
        let mut r = Self { file, snapshot };
        let env_seed = match std::env::var("FMJ_SEED") {
            Ok(s) => Some(
                s.parse::<u64>()
                    .map_err(|_| Error::invalid(format!("FMJ_SEED `{s}` is not a u64")))?,
            ),
            Err(_) => None,
        };
        let seed = r.file.get::<u64>("seed")?.or(env_seed).unwrap_or(0);
        r.snapshot.set("seed", common.seed.unwrap_or(seed));
        Ok(r)
    }

    fn seed(&self) -> u64 {
        self.snapshot.get("seed").ok().flatten().unwrap_or(0)
    }

    fn pick<T>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match cli {
            Some(v) => v,
            None => self.file.get(key)?.unwrap_or(default),
        };
        self.snapshot.set(key, &v);
        Ok(v)
    }

    fn require<T>(&mut self, key: &str, cli: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match cli {
            Some(v) => v,
            None => self
                .file
                .get(key)?
                .ok_or_else(|| Error::invalid(format!("missing --{}", key.replace('_', "-"))))?,
        };
        self.snapshot.set(key, &v);
        Ok(v)
    }

    fn existing_path(&mut self, key: &str, cli: Option<PathBuf>) -> Result<PathBuf> {
        let p: PathBuf = match cli {
            Some(p) => p,
            None => self
                .file
                .raw(key)
                .map(PathBuf::from)
                .ok_or_else(|| Error::invalid(format!("missing --{key}")))?,
        };
        let p = p
            .canonicalize()
            .map_err(|e| Error::invalid(format!("{key} `{}`: {e}", p.display())))?;
        self.snapshot.set(key, p.display());
        Ok(p)
    }

    fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("resolved.cfg"), self.snapshot.render())?;
        Ok(())
    }
}

/// Why a command failed, mapped to the exit code.
enum Failure {
    Invalid(Error),
    Runtime(Error),
}

fn invalid<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Invalid)
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

/// Parse `argv` (including the program name) and run the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_INVALID,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_data(path: &Path, kind: SequenceKind) -> Result<SequenceBatch> {
    let x = if path.extension().is_some_and(|e| e == "bin") {
        load_binary(path)?
    } else {
        load_sequences(path, kind)?
    };
    if x.kind() != kind {
        return Err(Error::invalid(format!(
            "data holds {} sequences, model expects {kind}",
            x.kind()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid(format!(
            "no sequences in {}",
            path.display()
        )));
    }
    Ok(x)
}

/// Model and matching data for the evaluation commands.
fn model_and_data(r: &mut Resolver, io: ModelData) -> Result<(FmVae, SequenceBatch)> {
    let model_path = r.existing_path("model", io.model)?;
    let data_path = r.existing_path("data", io.data)?;
    let model = FmVae::load(&model_path)?;
    let data = load_data(&data_path, model.config().kind)?;
    if data.n_steps() != model.config().n_s {
        return Err(Error::invalid(format!(
            "data has {} frames per sequence, model expects {}",
            data.n_steps(),
            model.config().n_s
        )));
    }
    Ok((model, data))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn report(r: &Resolver, metric: &str, values: serde_json::Value) -> EvalReport {
    let config: serde_json::Map<String, serde_json::Value> = r
        .snapshot
        .keys()
        .map(|k| (k.to_string(), json!(r.snapshot.raw(k).unwrap_or_default())))
        .collect();
    EvalReport {
        metric: metric.into(),
        config: serde_json::Value::Object(config),
        values,
        seed: r.seed(),
    }
}

fn split_for(
    data: &SequenceBatch,
    policy: &str,
    attr: Attribute,
    rng: &mut Rng,
) -> Result<Option<DatasetSplit>> {
    match policy {
        "none" => Ok(None),
        "random" => Ok(Some(random_split(data.len(), rng))),
        band => {
            let band: Band = band.parse()?;
            Ok(Some(percentile_band_split(
                &attribute_values(data, attr)?,
                band,
            )?))
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::GenData {
            common,
            kind,
            n,
            steps,
            format,
        } => {
            let mut r = invalid(Resolver::new("gen-data", &common))?;
            let kind = invalid(r.pick("kind", kind, SequenceKind::Drum))?;
            let n = invalid(r.pick("n", n, 500))?;
            let steps = invalid(r.pick("steps", steps, 32))?;
            let format = invalid(r.pick("format", format, "jsonl".to_string()))?;
            if format != "jsonl" && format != "bin" {
                return Err(Failure::Invalid(Error::invalid(format!(
                    "unknown format `{format}`"
                ))));
            }
            if n == 0 || steps == 0 {
                return Err(Failure::Invalid(Error::invalid(
                    "n and steps must be positive",
                )));
            }
            runtime(r.write(&common.out))?;
            let (x, families) = runtime(synth_toy_corpus(kind, n, steps, &mut Rng::new(r.seed())))?;
            let path = common.out.join(format!("data.{format}"));
            runtime(if format == "bin" {
                save_binary(&path, &x)
            } else {
                save_sequences(&path, &x)
            })?;
            runtime(write_json(&common.out.join("families.json"), &families))?;
            println!("wrote {} {kind} sequences to {}", x.len(), path.display());
            Ok(())
        }
        Command::Train {
            common,
            data,
            preset,
            no_vhp,
            eta,
            kappa,
            steps,
            split,
            attr,
            set,
        } => {
            let mut r = invalid(Resolver::new("train", &common))?;
            let data_path = invalid(r.existing_path("data", data))?;
            let preset = invalid(r.pick("preset", preset, "desk-drum".to_string()))?;
            let mut overrides = KvMap::new();
            for kv in &set {
                let (k, v) = kv.split_once('=').ok_or_else(|| {
                    Failure::Invalid(Error::invalid(format!(
                        "--set expects KEY=VALUE, got `{kv}`"
                    )))
                })?;
                overrides.set(k.trim(), v.trim());
            }
            if let Some(v) = eta {
                overrides.set("eta", v);
            }
            if let Some(v) = kappa {
                overrides.set("kappa", v);
            }
            if let Some(v) = steps {
                overrides.set("steps", v);
            }
            if no_vhp {
                overrides.set("use_vhp", false);
            }
            let mut layered = r.file.clone();
            layered.merge(&overrides);
            let mut model_cfg = invalid(ModelConfig::preset(&preset))?;
            invalid(model_cfg.read_kv(&layered))?;
            invalid(model_cfg.validate())?;
            let mut cfg = invalid(TrainConfig::preset(&preset))?;
            cfg.seed = r.seed();
            invalid(cfg.read_kv(&layered))?;
            invalid(cfg.validate())?;
            let split_policy = invalid(r.pick("split", split, "none".to_string()))?;
            let attr = invalid(r.pick("attr", attr, Attribute::Density))?;
            model_cfg.write_kv(&mut r.snapshot);
            cfg.write_kv(&mut r.snapshot);
            let all = invalid(load_data(&data_path, model_cfg.kind))?;
            if all.n_steps() != model_cfg.n_s {
                return Err(Failure::Invalid(Error::invalid(format!(
                    "data has {} frames per sequence, preset `{preset}` expects {}",
                    all.n_steps(),
                    model_cfg.n_s
                ))));
            }
            let split = invalid(split_for(
                &all,
                &split_policy,
                attr,
                &mut Rng::new(cfg.seed).stream("split"),
            ))?;
            runtime(r.write(&common.out))?;

            let train_set = match &split {
                Some(s) => {
                    runtime(write_json(&common.out.join("split.json"), s))?;
                    all.select(&s.train)
                }
                None => all,
            };
            let model = runtime(FmVae::new(model_cfg, cfg.use_vhp, cfg.seed))?;
            let mut state = TrainState::new(model, &cfg);
            let mut log = BufWriter::new(runtime(
                File::create(common.out.join("train_log.jsonl")).map_err(Error::from),
            )?);
            let t0 = std::time::Instant::now();
            runtime(train(&mut state, &train_set, &cfg, |s, rep| {
                write_log(&mut log, rep)?;
                if rep.step % 100 == 0 || rep.step + 1 == cfg.steps {
                    log::info!(
                        "step {:>6}  C {:.5}  F {:.4}  fm {:.4}  lambda {:.4e}  {:.0}s",
                        rep.step,
                        rep.recon,
                        rep.kl,
                        rep.fm,
                        s.lambda,
                        t0.elapsed().as_secs_f64()
                    );
                }
                Ok(())
            }))?;
            drop(log);
            runtime(state.model.save(&common.out.join("model.fmv")))?;
            println!("saved {}", common.out.join("model.fmv").display());
            Ok(())
        }
        Command::EvalSmoothness {
            common,
            io,
            pairs,
            interior,
            interp,
        } => {
            let mut r = invalid(Resolver::new("eval-smoothness", &common))?;
            let (model, data) = invalid(model_and_data(&mut r, io))?;
            let pairs = invalid(r.pick("pairs", pairs, 100))?;
            let interior = invalid(r.pick("interior", interior, 20))?;
            let interp = invalid(r.pick("interp", interp, Interp::Linear))?;
            runtime(r.write(&common.out))?;
            let mut rng = Rng::new(r.seed());
            let (mean, _) = runtime(model.posterior(&data))?;
            let values = runtime(smoothness_pairs(
                &model, &mean, pairs, interior, interp, &mut rng,
            ))?;
            let z = runtime(posterior_samples(&model, &data, 100, &mut rng))?;
            let stats = runtime(metric_stats(
                &model,
                &z,
                &FlatnessConfig::default(),
                &mut rng,
            ))?;
            let dist = runtime(distance_preservation(
                &model,
                &runtime(latent_pairs(&z, 200, &mut rng))?,
                stats.c2.sqrt(),
                interior,
            ))?;
            let med = median(&values);
            let rep = report(
                &r,
                "smoothness",
                json!({
                    "median": med,
                    "per_pair": values,
                    "trace_cv": stats.trace_cv,
                    "off_diagonal": stats.off_diagonal,
                    "c2": stats.c2,
                    "distance_median": dist.median,
                }),
            );
            runtime(rep.write(&common.out.join("smoothness.json")))?;
            println!(
                "median smoothness {med:.4}  trace cv {:.4}  off-diagonal {:.4}  distance error {:.4}",
                stats.trace_cv, stats.off_diagonal, dist.median
            );
            Ok(())
        }
        Command::EvalQuality {
            common,
            io,
            band,
            attr,
        } => {
            let mut r = invalid(Resolver::new("eval-quality", &common))?;
            let (model, data) = invalid(model_and_data(&mut r, io))?;
            let band = invalid(r.pick("band", band, Band::Middle10))?;
            let attr = invalid(r.pick("attr", attr, Attribute::Density))?;
            let attrs = invalid(attribute_values(&data, attr))?;
            let split = invalid(percentile_band_split(&attrs, band))?;
            runtime(r.write(&common.out))?;
            let q = runtime(interp_quality(&model, &data, &attrs, &split))?;
            let rep = report(
                &r,
                "quality",
                serde_json::to_value(&q).map_err(|e| Failure::Runtime(e.into()))?,
            );
            runtime(rep.write(&common.out.join("quality.json")))?;
            println!(
                "delta {:.4} ± {:.4} over {} test sequences",
                q.delta.mean, q.delta.std, q.delta.n
            );
            Ok(())
        }
        Command::Attr {
            common,
            io,
            attr,
            samples,
        } => {
            let mut r = invalid(Resolver::new("attr", &common))?;
            let (model, data) = invalid(model_and_data(&mut r, io))?;
            let attr = invalid(r.pick("attr", attr, Attribute::Density))?;
            let samples = invalid(r.pick("samples", samples, 1000))?;
            let values = invalid(attribute_values(&data, attr))?;
            runtime(r.write(&common.out))?;
            let (mean, _) = runtime(model.posterior(&data))?;
            let vector = runtime(attribute_vector(&mean, &values, attr.as_str()))?;
            let f = model_attribute(&model, attr);
            let corr = runtime(attribute_correlation(
                &f,
                &mean,
                &vector.direction,
                samples,
                &mut Rng::new(r.seed()),
            ))?;
            let rep = report(
                &r,
                "attribute",
                json!({ "vector": vector, "correlation": corr }),
            );
            runtime(rep.write(&common.out.join("attr.json")))?;
            println!(
                "{attr}: r = {:.4} ({} kept, {} discarded)",
                corr.r, corr.retained, corr.discarded
            );
            Ok(())
        }
        Command::Interpolate {
            common,
            io,
            from,
            to,
            steps,
            interp,
        } => {
            let mut r = invalid(Resolver::new("interpolate", &common))?;
            let (model, data) = invalid(model_and_data(&mut r, io))?;
            let from = invalid(r.require("from", from))?;
            let to = invalid(r.require("to", to))?;
            let steps = invalid(r.pick("steps", steps, 7))?;
            let interp = invalid(r.pick("interp", interp, Interp::Linear))?;
            if from >= data.len() || to >= data.len() {
                return Err(Failure::Invalid(Error::invalid(format!(
                    "indices must be below {} (got {from} and {to})",
                    data.len()
                ))));
            }
            runtime(r.write(&common.out))?;
            let (mean, _) = runtime(model.posterior(&data.select(&[from, to])))?;
            let path = runtime(interpolate(
                interp,
                mean.row_slice(0),
                mean.row_slice(1),
                steps,
            ))?;
            let decoded = runtime(model.generate(&path.to_tensor()))?;
            runtime(save_sequences(
                &common.out.join("interpolation.jsonl"),
                &decoded,
            ))?;
            runtime(write_json(&common.out.join("path.json"), &path))?;
            println!(
                "{} interior points between {from} and {to}",
                path.interior()
            );
            Ok(())
        }
        Command::Contours {
            common,
            io,
            center,
            directions,
            radius,
            segments,
        } => {
            let mut r = invalid(Resolver::new("contours", &common))?;
            let (model, data) = invalid(model_and_data(&mut r, io))?;
            let center = invalid(r.pick("center", center, 0))?;
            let count = invalid(r.pick("directions", directions, 16))?;
            let radius = invalid(r.pick("radius", radius, 0.5))?;
            let segments = invalid(r.pick("segments", segments, 16))?;
            if center >= data.len() {
                return Err(Failure::Invalid(Error::invalid(format!(
                    "center must be below {}",
                    data.len()
                ))));
            }
            if !(radius > 0.0) {
                return Err(Failure::Invalid(Error::invalid("radius must be positive")));
            }
            runtime(r.write(&common.out))?;
            let (mean, _) = runtime(model.posterior(&data.select(&[center])))?;
            let c = mean.row_slice(0).to_vec();
            let dirs = circle_directions(c.len(), count, 0.0);
            let mut lengths = Vec::with_capacity(dirs.len());
            for d in &dirs {
                let end: Vec<f64> = c.iter().zip(d).map(|(a, b)| a + radius * b).collect();
                lengths.push(runtime(riemannian_length(&model, &c, &end, segments))?);
            }
            let target = lengths.iter().sum::<f64>() / lengths.len() as f64;
            let contour = runtime(contour_distances(
                &model,
                &c,
                &dirs,
                target,
                20.0 * radius,
                segments,
            ))?;
            let rep = report(&r, "contours", json!({ "center": c, "contour": contour }));
            runtime(rep.write(&common.out.join("contours.json")))?;
            println!(
                "roundness {:.4} at length {:.4}",
                contour.roundness, contour.target
            );
            Ok(())
        }
        Command::JamServe {
            common,
            model,
            addr,
            ws_addr,
            std,
        } => {
            let mut r = invalid(Resolver::new("jam-serve", &common))?;
            let model_path = invalid(r.existing_path("model", model))?;
            let addr = invalid(r.pick("addr", addr, "127.0.0.1:7878".to_string()))?;
            let ws_addr = invalid(r.pick("ws_addr", ws_addr, "127.0.0.1:7879".to_string()))?;
            let std = invalid(r.pick("std", std, crate::jam::DEFAULT_STD))?;
            let model = invalid(FmVae::load(&model_path))?;
            runtime(r.write(&common.out))?;
            let cfg = ServeConfig {
                addr,
                ws_addr: (ws_addr != "none").then_some(ws_addr),
                std,
                seed: r.seed(),
            };
            let handle = invalid(serve(Arc::new(model), &cfg))?;
            println!(
                "listening on {} (websocket: {})",
                handle.local_addr(),
                handle
                    .ws_local_addr()
                    .map_or("off".to_string(), |a| a.to_string())
            );
            handle.wait();
            Ok(())
        }
    }
}
