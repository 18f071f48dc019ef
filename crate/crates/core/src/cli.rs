//! `odvsal` command-line front end.
//!
//! Every command writes its outputs plus a `RunManifest` next to them. Exit
//! codes: 0 success, 1 invalid input or usage, 2 internal failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audio::{aem, clip_attributes, load_bformat, write_bformat, Ordering};
use crate::error::{Error, Result};
use crate::gaze::{self, extract_fixations, fixation_map, read_trace_csv, FixationParams};
use crate::io::{self, parse_grid, read_fixations_csv, read_pfm, write_heatmap_png, write_json, write_pfm};
use crate::maps::FixationMap;
use crate::metrics::{
    consistency_baseline, evaluate_frame, ConsistencyMetric, ConsistencyParams, KldReference, MetricConfig, SubjectFixations,
    Weighting,
};
use crate::model::{param_count, AudioMode, FusionVariant, Model, ModelConfig, TemporalVariant};
use crate::sphere::ErpGrid;
use crate::synth::harness::{
    ablate, ablation_csv, build_dataset, evaluate, train, AblationSpec, AudioChoice, Axis, DataSpec, TrainConfig,
};
use crate::synth::{generate, SceneConfig};
use crate::vattr::{frame_attributes, frame_si, load_frame};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "ODVSAL_THREADS";

#[derive(Parser, Debug)]
#[command(name = "odvsal", version, about = "Omnidirectional audio-visual saliency toolkit")]
struct Cli {
    /// Leave wall-clock fields out of manifests and reports so repeated runs
    /// produce identical files.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract fixations from a head/eye trace into a per-frame CSV.
    Fixations(FixationsArgs),
    /// Smooth fixations into per-frame saliency maps (PFM).
    Salmap(SalmapArgs),
    /// Score a predicted map against fixations.
    Eval(EvalArgs),
    /// Split-half consistency baseline and pairwise mode comparison.
    Consistency(ConsistencyArgs),
    /// SEF, ZCR and the audio energy map of a B-format file.
    AudioFeatures(AudioFeaturesArgs),
    /// Brightness, contrast and SI of a frame sequence.
    VideoAttrs(VideoAttrsArgs),
    /// Write synthetic audio-visual scenes to disk.
    SynthGen(SynthGenArgs),
    /// Train the saliency model on synthetic scenes.
    Train(TrainArgs),
    /// Train and test one configuration per ablation setting.
    Ablate(AblateArgs),
    /// Time forward and training passes.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct TraceArgs {
    /// Angular velocity threshold in deg/s.
    #[arg(long, default_value_t = 75.0)]
    velocity: f64,
    /// Minimum fixation duration in seconds.
    #[arg(long, default_value_t = 0.1)]
    min_duration: f64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Number of frames; defaults to the trace length.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args, Debug)]
struct FixationsArgs {
    #[arg(long)]
    gaze: PathBuf,
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long, default_value = "720x360", value_parser = parse_grid)]
    grid: ErpGrid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SalmapArgs {
    /// Gaze trace (`t,gx,gy,gz,pitch,yaw,roll`).
    #[arg(long, conflicts_with = "fix", required_unless_present = "fix")]
    gaze: Option<PathBuf>,
    /// Fixation CSV (`frame,lat,lon,count`).
    #[arg(long)]
    fix: Option<PathBuf>,
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long, default_value_t = gaze::DEFAULT_SIGMA_DEG)]
    sigma: f64,
    #[arg(long, default_value = "720x360", value_parser = parse_grid)]
    grid: ErpGrid,
    /// Also write a PNG heatmap per frame.
    #[arg(long)]
    png: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    fix: PathBuf,
    /// Ground-truth saliency map; derived from the fixations when absent.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Frame of the fixation CSV to use; all frames are pooled by default.
    #[arg(long)]
    frame: Option<usize>,
    /// Fixation CSVs of other videos, used as shuffled-AUC negatives.
    #[arg(long = "neg")]
    negatives: Vec<PathBuf>,
    #[arg(long, default_value = "sinusoidal")]
    weighting: Weighting,
    #[arg(long, default_value = "fixation")]
    kld_ref: KldReference,
    #[arg(long, default_value_t = gaze::DEFAULT_SIGMA_DEG)]
    sigma: f64,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_S_AUC_SPLITS)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConsistencyArgs {
    /// Directory with one sub-directory of subject files per mode, or the
    /// subject files directly. Files are gaze traces or fixation CSVs.
    #[arg(long)]
    subjects: PathBuf,
    /// Mode order for the pairwise table; defaults to sorted names.
    #[arg(long, value_delimiter = ',')]
    modes: Vec<String>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "nss,sim,cc")]
    metrics: Vec<String>,
    #[arg(long, default_value = "sinusoidal")]
    weighting: Weighting,
    #[arg(long, default_value_t = gaze::DEFAULT_SIGMA_DEG)]
    sigma: f64,
    #[arg(long, default_value = "720x360", value_parser = parse_grid)]
    grid: ErpGrid,
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AudioFeaturesArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long, default_value = "fuma")]
    ordering: Ordering,
    #[arg(long, default_value = "64x32", value_parser = parse_grid)]
    grid: ErpGrid,
    /// Also write the audio energy map as PFM.
    #[arg(long)]
    aem: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VideoAttrsArgs {
    /// Frames in display order (PNG, PPM or PGM).
    #[arg(long, num_args = 1.., required = true)]
    frames: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SceneArgs {
    /// Scene configuration (TOML or JSON); flags below override it.
    #[arg(long)]
    scene_config: Option<PathBuf>,
    #[arg(long)]
    n_blobs: Option<usize>,
    #[arg(long)]
    share: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
}

impl SceneArgs {
    fn resolve(&self) -> Result<SceneConfig> {
        let mut sc: SceneConfig = match &self.scene_config {
            Some(p) => read_config(p)?,
            None => SceneConfig::default(),
        };
        if let Some(v) = self.n_blobs {
            sc.n_blobs = v;
        }
        if let Some(v) = self.share {
            sc.sounding_share = v;
        }
        if let Some(v) = self.duration {
            sc.duration = v;
        }
        Ok(sc)
    }
}

#[derive(Args, Debug)]
struct SynthGenArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value = "64x32", value_parser = parse_grid)]
    grid: ErpGrid,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// `paper` (default sizes) or `desk` (the reduced synthetic setup).
    #[arg(long, default_value = "paper")]
    preset: String,
    /// Model configuration (TOML or JSON); replaces the preset.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    temporal: Option<TemporalVariant>,
    #[arg(long)]
    fusion: Option<FusionVariant>,
    #[arg(long)]
    fusion_levels: Option<usize>,
    #[arg(long)]
    audio_mode: Option<AudioMode>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    frame_step: Option<usize>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelConfig> {
        let mut cfg = match (&self.model_config, self.preset.as_str()) {
            (Some(p), _) => ModelConfig::from_file(p)?,
            (None, "paper") => ModelConfig::default(),
            (None, "desk") => ModelConfig::desk(),
            (None, other) => return Err(Error::config(format!("unknown preset `{other}`"))),
        };
        if let Some(v) = self.temporal {
            cfg.temporal = v;
        }
        if let Some(v) = self.fusion {
            cfg.fusion = v;
        }
        if let Some(v) = self.fusion_levels {
            cfg.fusion_levels = v;
        }
        if let Some(v) = self.audio_mode {
            cfg.audio_mode = v;
        }
        if let Some(v) = self.channels {
            cfg.channels = v;
        }
        if let Some(v) = self.frames {
            cfg.frames = v;
        }
        if let Some(v) = self.frame_step {
            cfg.frame_step = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    lr_min: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    momentum: f64,
    /// Gradient norm cap; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    grad_clip: f64,
    /// Seeds model initialization and batch order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptimArgs {
    fn resolve(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_min: self.lr_min,
            momentum: self.momentum,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, default_value_t = 20)]
    n_train: usize,
    /// Held-out scenes scored after training (0 skips evaluation).
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    /// Also score the test set with audio re-encoded on a silent blob.
    #[arg(long)]
    wrong_audio: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// `axis=v1,v2`; axes: temporal, fusion, fusion_levels, audio_mode,
    /// frame_sampling (values `TxSTEP`). Repeat for several axes.
    #[arg(long = "axis")]
    axes: Vec<String>,
    #[arg(long, default_value_t = 20)]
    n_train: usize,
    #[arg(long, default_value_t = 10)]
    n_test: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

struct Ctx {
    argv: Vec<String>,
    deterministic: bool,
    start: Instant,
}

impl Ctx {
    fn finish(&self, command: &str, config: Value, inputs: &[&Path], outputs: &[PathBuf], seed: Option<u64>, at: &Path) -> Result<()> {
        let m = RunManifest {
            command: command.to_string(),
            argv: self.argv.clone(),
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            version: VERSION.to_string(),
            wall_clock_seconds: (!self.deterministic).then(|| self.start.elapsed().as_secs_f64()),
        };
        write_json(&manifest_path(at), &m)
    }
}

/// `<dir>/manifest.json` for directory outputs, `<file>.manifest.json` otherwise.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(serde_json::from_str(&text)?),
        _ => toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display()))),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| Error::config(format!("{THREADS_ENV}={v} is not a thread count")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let ctx = Ctx { argv: argv[1..].to_vec(), deterministic: cli.deterministic, start: Instant::now() };
    match configure_threads().and_then(|_| dispatch(&ctx, cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(ctx: &Ctx, cmd: Command) -> Result<()> {
    match cmd {
        Command::Fixations(a) => cmd_fixations(ctx, a),
        Command::Salmap(a) => cmd_salmap(ctx, a),
        Command::Eval(a) => cmd_eval(ctx, a),
        Command::Consistency(a) => cmd_consistency(ctx, a),
        Command::AudioFeatures(a) => cmd_audio_features(ctx, a),
        Command::VideoAttrs(a) => cmd_video_attrs(ctx, a),
        Command::SynthGen(a) => cmd_synth_gen(ctx, a),
        Command::Train(a) => cmd_train(ctx, a),
        Command::Ablate(a) => cmd_ablate(ctx, a),
        Command::Bench(a) => cmd_bench(ctx, a),
    }
}

/// Per-frame fixation maps from a gaze trace.
fn trace_maps(path: &Path, t: &TraceArgs, grid: ErpGrid) -> Result<Vec<FixationMap>> {
    let trace = read_trace_csv(path)?;
    let params = FixationParams { velocity_threshold: t.velocity, min_duration: t.min_duration };
    let fx = extract_fixations(&trace, &params)?;
    let n = match t.frames {
        Some(n) => n,
        None => trace.last().map_or(0, |s| (s.t * t.fps).floor() as usize + 1),
    };
    (0..n).map(|f| fixation_map(&fx.fixations, f, t.fps, grid)).collect()
}

fn cmd_fixations(ctx: &Ctx, a: FixationsArgs) -> Result<()> {
    let maps = trace_maps(&a.gaze, &a.trace, a.grid)?;
    io::write_fixations_csv(&a.out, &maps)?;
    let config = json!({
        "grid": a.grid.to_string(), "velocity": a.trace.velocity, "min_duration": a.trace.min_duration,
        "fps": a.trace.fps, "frames": maps.len(),
    });
    ctx.finish("fixations", config, &[&a.gaze], std::slice::from_ref(&a.out), None, &a.out)
}

fn cmd_salmap(ctx: &Ctx, a: SalmapArgs) -> Result<()> {
    let (maps, input) = match (&a.gaze, &a.fix) {
        (Some(g), _) => (trace_maps(g, &a.trace, a.grid)?, g.clone()),
        (None, Some(f)) => {
            let by_frame = read_fixations_csv(f, a.grid)?;
            let n = a.trace.frames.unwrap_or_else(|| by_frame.keys().next_back().map_or(0, |k| k + 1));
            let maps = (0..n).map(|i| by_frame.get(&i).cloned().unwrap_or_else(|| FixationMap::zeros(a.grid, i))).collect();
            (maps, f.clone())
        }
        (None, None) => return Err(Error::invalid("one of --gaze or --fix is required")),
    };
    std::fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    for m in &maps {
        let s = gaze::smooth(m, a.sigma)?;
        let p = a.out.join(format!("frame_{:05}.pfm", m.frame_index));
        write_pfm(&p, &s)?;
        outputs.push(p);
        if a.png {
            let p = a.out.join(format!("frame_{:05}.png", m.frame_index));
            write_heatmap_png(&p, &s)?;
            outputs.push(p);
        }
    }
    let config = json!({ "grid": a.grid.to_string(), "sigma": a.sigma, "fps": a.trace.fps, "frames": maps.len() });
    ctx.finish("salmap", config, &[&input], &outputs, None, &a.out)
}

fn pooled_fixations(path: &Path, grid: ErpGrid, frame: Option<usize>) -> Result<FixationMap> {
    let by_frame = read_fixations_csv(path, grid)?;
    match frame {
        Some(f) => Ok(by_frame.get(&f).cloned().unwrap_or_else(|| FixationMap::zeros(grid, f))),
        None => by_frame.values().try_fold(FixationMap::zeros(grid, 0), |acc, m| acc.merged(m)),
    }
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let pred = read_pfm(&a.pred)?;
    let grid = pred.grid();
    let fix = pooled_fixations(&a.fix, grid, a.frame)?;
    let gt = a.gt.as_deref().map(read_pfm).transpose()?;
    let negatives = a.negatives.iter().map(|p| pooled_fixations(p, grid, None)).collect::<Result<Vec<_>>>()?;
    let cfg = MetricConfig {
        weighting: a.weighting,
        kld_reference: a.kld_ref,
        sigma_deg: a.sigma,
        s_auc_splits: a.splits,
        seed: a.seed,
        ..Default::default()
    };
    let report = evaluate_frame(&pred, &fix, gt.as_ref(), &negatives, &cfg)?;
    write_json(&a.out, &report)?;
    let mut inputs: Vec<&Path> = vec![&a.pred, &a.fix];
    inputs.extend(a.gt.as_deref());
    inputs.extend(a.negatives.iter().map(PathBuf::as_path));
    ctx.finish("eval", serde_json::to_value(cfg)?, &inputs, std::slice::from_ref(&a.out), Some(a.seed), &a.out)
}

fn load_subject(path: &Path, a: &ConsistencyArgs) -> Result<Vec<FixationMap>> {
    let header = std::fs::read_to_string(path)?.lines().next().unwrap_or("").trim().to_string();
    if header.starts_with("frame") {
        let by_frame = read_fixations_csv(path, a.grid)?;
        let n = a.trace.frames.unwrap_or_else(|| by_frame.keys().next_back().map_or(0, |k| k + 1));
        Ok((0..n).map(|i| by_frame.get(&i).cloned().unwrap_or_else(|| FixationMap::zeros(a.grid, i))).collect())
    } else {
        trace_maps(path, &a.trace, a.grid)
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_consistency(ctx: &Ctx, a: ConsistencyArgs) -> Result<()> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&a.subjects)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mode_dirs: Vec<(String, PathBuf)> = if dirs.is_empty() {
        vec![("all".to_string(), a.subjects.clone())]
    } else {
        dirs.into_iter().map(|d| (d.file_name().unwrap().to_string_lossy().into_owned(), d)).collect()
    };
    let mut groups: BTreeMap<String, Vec<SubjectFixations>> = BTreeMap::new();
    let mut inputs = Vec::new();
    for (mode, dir) in &mode_dirs {
        for f in csv_files(dir)? {
            let frames = load_subject(&f, &a)?;
            let subject = f.file_stem().unwrap().to_string_lossy().into_owned();
            groups.entry(mode.clone()).or_default().push(SubjectFixations { subject, frames });
            inputs.push(f);
        }
    }
    // subjects must agree on frame count; pad shorter traces with empty frames
    let n = groups.values().flatten().map(|s| s.frames.len()).max().unwrap_or(0);
    for s in groups.values_mut().flatten() {
        while s.frames.len() < n {
            let i = s.frames.len();
            s.frames.push(FixationMap::zeros(a.grid, i));
        }
    }
    let order = if a.modes.is_empty() { mode_dirs.iter().map(|(m, _)| m.clone()).collect() } else { a.modes.clone() };
    let metrics = a
        .metrics
        .iter()
        .map(|m| {
            ConsistencyMetric::ALL
                .into_iter()
                .find(|c| c.name() == m)
                .ok_or_else(|| Error::invalid(format!("unknown consistency metric `{m}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let params = ConsistencyParams { metrics, repeats: a.repeats, seed: a.seed, weighting: a.weighting, sigma_deg: a.sigma };
    let result = consistency_baseline(&groups, &order, &params)?;
    write_json(&a.out, &result)?;
    let config = json!({
        "modes": order, "repeats": a.repeats, "metrics": a.metrics, "weighting": a.weighting,
        "sigma": a.sigma, "grid": a.grid.to_string(), "frames": n,
    });
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.finish("consistency", config, &inputs, std::slice::from_ref(&a.out), Some(a.seed), &a.out)
}

fn cmd_audio_features(ctx: &Ctx, a: AudioFeaturesArgs) -> Result<()> {
    let clip = load_bformat(&a.wav, a.ordering)?;
    let attrs = clip_attributes(&clip)?;
    let map = aem(&clip, a.grid)?;
    let (r, c) = map.argmax();
    let peak = a.grid.center_of(r, c);
    let report = json!({
        "sef": attrs.sef, "zcr": attrs.zcr, "duration": attrs.duration, "sample_rate": attrs.sample_rate,
        "aem_peak": { "lat": peak.lat(), "lon": peak.lon() },
    });
    write_json(&a.out, &report)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.aem {
        write_pfm(p, &map)?;
        outputs.push(p.clone());
    }
    let config = json!({ "ordering": format!("{:?}", a.ordering).to_lowercase(), "grid": a.grid.to_string() });
    ctx.finish("audio-features", config, &[&a.wav], &outputs, None, &a.out)
}

fn cmd_video_attrs(ctx: &Ctx, a: VideoAttrsArgs) -> Result<()> {
    let frames = a.frames.iter().map(|p| load_frame(p)).collect::<Result<Vec<_>>>()?;
    let per_frame = frames
        .iter()
        .map(|f| {
            let at = frame_attributes(f)?;
            Ok(json!({ "brightness": at.brightness, "contrast": at.contrast, "si": frame_si(f) }))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_frame.len() as f64;
    let mean = |k: &str| per_frame.iter().map(|v| v[k].as_f64().unwrap()).sum::<f64>() / n;
    let report = json!({
        "frames": per_frame, "brightness": mean("brightness"), "contrast": mean("contrast"),
        "si": crate::vattr::si(&frames)?,
    });
    write_json(&a.out, &report)?;
    let inputs: Vec<&Path> = a.frames.iter().map(PathBuf::as_path).collect();
    ctx.finish("video-attrs", json!({}), &inputs, std::slice::from_ref(&a.out), None, &a.out)
}

fn to_rgb8(frame: &[f64]) -> Vec<u8> {
    frame.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

fn cmd_synth_gen(ctx: &Ctx, a: SynthGenArgs) -> Result<()> {
    let mut sc = a.scene.resolve()?;
    sc.width = a.grid.width();
    sc.height = a.grid.height();
    sc.validate()?;
    std::fs::create_dir_all(&a.out)?;
    let mut samples = Vec::with_capacity(a.n);
    let mut outputs = Vec::new();
    for i in 0..a.n {
        let seed = crate::synth::harness::scene_seed(a.seed, i);
        let s = generate(&SceneConfig { seed, ..sc.clone() })?;
        let dir = a.out.join(format!("sample_{i:04}"));
        std::fs::create_dir_all(&dir)?;
        let mut frames = Vec::new();
        let mut gts = Vec::new();
        for (f, (rgb, gt)) in s.frames.iter().zip(&s.gt).enumerate() {
            let fp = dir.join(format!("frame_{f:05}.png"));
            io::write_png_rgb(&fp, sc.width, sc.height, &to_rgb8(rgb))?;
            let gp = dir.join(format!("gt_{f:05}.pfm"));
            write_pfm(&gp, gt)?;
            frames.push(fp.strip_prefix(&a.out).unwrap().display().to_string());
            gts.push(gp.strip_prefix(&a.out).unwrap().display().to_string());
        }
        let wav = dir.join("audio.wav");
        write_bformat(&wav, &s.clip)?;
        let tracks: Vec<Vec<[f64; 2]>> = s.tracks.iter().map(|t| t.iter().map(|c| [c.lat(), c.lon()]).collect()).collect();
        let meta = dir.join("tracks.json");
        write_json(&meta, &json!({ "sounding_index": sc.sounding_index, "tracks_lat_lon": tracks }))?;
        samples.push(json!({
            "seed": seed, "frames": frames, "gt": gts,
            "audio": wav.strip_prefix(&a.out).unwrap().display().to_string(),
            "tracks": meta.strip_prefix(&a.out).unwrap().display().to_string(),
        }));
        outputs.push(dir);
    }
    let dataset = a.out.join("dataset.json");
    write_json(&dataset, &json!({ "scene": sc, "seed": a.seed, "samples": samples }))?;
    outputs.push(dataset);
    ctx.finish("synth-gen", serde_json::to_value(&sc)?, &[], &outputs, Some(a.seed), &a.out)
}

fn data_spec(scene: SceneConfig, cfg: &ModelConfig, n: usize, seed: u64, wrong_audio: bool) -> DataSpec {
    let scene = SceneConfig { width: cfg.width, height: cfg.height, ..scene };
    DataSpec { scene, n, seed, wrong_audio, ..Default::default() }
}

fn loss_csv(log: &[crate::synth::harness::StepLog]) -> String {
    let mut out = String::from("step,epoch,lr,l1,cc,kl,bce,total\n");
    for l in log {
        let b = &l.loss;
        out += &format!("{},{},{},{},{},{},{},{}\n", l.step, l.epoch, l.lr, b.l1, b.cc, b.kl, b.bce, b.total);
    }
    out
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let cfg = a.model.resolve()?;
    let scene = a.scene.resolve()?;
    let tc = a.optim.resolve();
    let train_spec = data_spec(scene.clone(), &cfg, a.n_train, a.data_seed, false);
    // the test set uses a disjoint seed stream
    let test_spec = data_spec(scene, &cfg, a.n_test, a.data_seed.wrapping_add(1 << 32), a.wrong_audio);
    std::fs::create_dir_all(&a.out)?;
    let train_set = build_dataset(&cfg, &train_spec)?;
    let mut model = Model::new(cfg.clone(), tc.seed)?;
    let log = train(&mut model, &train_set, &tc)?;
    drop(train_set);
    let mut outputs = vec![a.out.join("params.bin"), a.out.join("loss.csv"), a.out.join("config.json")];
    model.params().save(&outputs[0])?;
    std::fs::write(&outputs[1], loss_csv(&log))?;
    write_json(&outputs[2], &cfg)?;
    if a.n_test > 0 {
        let test_set = build_dataset(&cfg, &test_spec)?;
        let mc = MetricConfig::default();
        let mut choices = vec![("eval", AudioChoice::Matched)];
        if a.wrong_audio {
            choices.push(("eval_wrong_audio", AudioChoice::Wrong));
        }
        for (name, choice) in choices {
            let (table, timing) = evaluate(&model, &test_set, &mc, choice)?;
            let csv = a.out.join(format!("{name}.csv"));
            std::fs::write(&csv, table.to_csv())?;
            let js = a.out.join(format!("{name}.json"));
            let mut v = serde_json::to_value(&table)?;
            if !ctx.deterministic {
                v["timing"] = serde_json::to_value(timing)?;
            }
            write_json(&js, &v)?;
            outputs.extend([csv, js]);
        }
    }
    let config = json!({ "model": cfg, "train": tc, "train_data": train_spec, "test_data": test_spec });
    ctx.finish("train", config, &[], &outputs, Some(tc.seed), &a.out)
}

fn parse_axis(s: &str) -> Result<Axis> {
    let (name, values) = s.split_once('=').ok_or_else(|| Error::invalid(format!("axis `{s}` is not name=v1,v2")))?;
    let vals: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    fn all<T: std::str::FromStr>(v: &[&str]) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        v.iter().map(|x| x.parse::<T>().map_err(|e| Error::invalid(e.to_string()))).collect()
    }
    Ok(match name.trim() {
        "temporal" => Axis::Temporal(all(&vals)?),
        "fusion" => Axis::Fusion(all(&vals)?),
        "fusion_levels" => Axis::FusionLevels(all(&vals)?),
        "audio_mode" => Axis::AudioMode(all(&vals)?),
        "frame_sampling" => Axis::FrameSampling(
            vals.iter()
                .map(|v| {
                    let (t, st) = v.split_once('x').ok_or_else(|| Error::invalid(format!("frame sampling `{v}` is not TxSTEP")))?;
                    let p = |x: &str| x.parse::<usize>().map_err(|_| Error::invalid(format!("frame sampling `{v}` is not TxSTEP")));
                    Ok((p(t)?, p(st)?))
                })
                .collect::<Result<_>>()?,
        ),
        other => return Err(Error::invalid(format!("unknown ablation axis `{other}`"))),
    })
}

fn cmd_ablate(ctx: &Ctx, a: AblateArgs) -> Result<()> {
    let cfg = a.model.resolve()?;
    let scene = a.scene.resolve()?;
    let axes = a.axes.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>>>()?;
    let spec = AblationSpec {
        train_data: data_spec(scene.clone(), &cfg, a.n_train, a.data_seed, false),
        test_data: data_spec(scene, &cfg, a.n_test, a.data_seed.wrapping_add(1 << 32), false),
        train: a.optim.resolve(),
        metrics: MetricConfig::default(),
        model_seed: a.optim.seed,
    };
    let rows = ablate(&cfg, &spec, &axes)?;
    std::fs::create_dir_all(&a.out)?;
    let csv = a.out.join("ablation.csv");
    std::fs::write(&csv, ablation_csv(&rows))?;
    let js = a.out.join("ablation.json");
    write_json(&js, &rows)?;
    let config = json!({ "model": cfg, "spec": spec, "axes": axes });
    ctx.finish("ablate", config, &[], &[csv, js], Some(a.optim.seed), &a.out)
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    let cfg = a.model.resolve()?;
    let spec = data_spec(a.scene.resolve()?, &cfg, a.n.max(1), a.seed, false);
    let data = build_dataset(&cfg, &spec)?;
    let model = Model::new(cfg.clone(), a.seed)?;
    let t0 = Instant::now();
    let mut checksum = 0.0;
    for e in &data {
        checksum += model.forward(&e.video, &e.audio)?.sum();
    }
    let forward = t0.elapsed().as_secs_f64() / data.len() as f64;
    let t0 = Instant::now();
    let mut loss = 0.0;
    for e in &data {
        loss += model.loss_and_grads(&e.video, &e.audio, &e.target)?.0.total;
    }
    let step = t0.elapsed().as_secs_f64() / data.len() as f64;
    let mut report = json!({
        "params": param_count(&cfg), "samples": data.len(), "output_sum": checksum, "loss_sum": loss,
    });
    if !ctx.deterministic {
        report["seconds_per_forward"] = json!(forward);
        report["seconds_per_train_sample"] = json!(step);
    }
    write_json(&a.out, &report)?;
    ctx.finish("bench", json!({ "model": cfg, "data": spec }), &[], std::slice::from_ref(&a.out), Some(a.seed), &a.out)
}
