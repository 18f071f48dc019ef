//! Datasets built from synthetic scenes, plus SGD training, evaluation and
//! one-factor-at-a-time ablation.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, sample_fixations, SceneConfig};
use crate::error::{Error, Result};
use crate::maps::{FixationMap, SaliencyMap};
use crate::metrics::{evaluate_frame, MetricConfig, MetricReport, METRIC_NAMES};
use crate::model::{AudioInput, AudioMode, FusionVariant, LossBreakdown, Model, ModelConfig, Target, TemporalVariant, VideoInput};

/// How many samples to draw and from which scene family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub scene: SceneConfig,
    pub n: usize,
    pub seed: u64,
    /// Fixations drawn from the ground truth of the predicted frame.
    pub fixations: usize,
    /// Frame whose ground truth is predicted; defaults to the last one.
    pub current_frame: Option<usize>,
    /// Also prepare audio re-encoded on a silent blob's track.
    pub wrong_audio: bool,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { scene: SceneConfig::default(), n: 20, seed: 0, fixations: 30, current_frame: None, wrong_audio: false }
    }
}

/// Seed of the `i`-th scene of a dataset (SplitMix64 finalizer).
pub fn scene_seed(base: u64, i: usize) -> u64 {
    let mut z = base.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One training or test item in model-ready form.
#[derive(Debug, Clone)]
pub struct Example {
    pub seed: u64,
    pub video: VideoInput,
    pub audio: AudioInput,
    pub wrong_audio: Option<AudioInput>,
    pub target: Target,
    pub gt: SaliencyMap,
    pub fixations: FixationMap,
}

/// Generates `spec.n` scenes in parallel and keeps only what `cfg` consumes.
pub fn build_dataset(cfg: &ModelConfig, spec: &DataSpec) -> Result<Vec<Example>> {
    cfg.validate()?;
    let sc = &spec.scene;
    sc.validate()?;
    if (sc.width, sc.height) != (cfg.width, cfg.height) {
        return Err(Error::config(format!(
            "scene grid {}x{} does not match model grid {}x{}",
            sc.width, sc.height, cfg.width, cfg.height
        )));
    }
    let current = spec.current_frame.unwrap_or(sc.n_frames() - 1);
    if current >= sc.n_frames() {
        return Err(Error::config(format!("current frame {current} beyond {} frames", sc.n_frames())));
    }
    if spec.wrong_audio && sc.n_blobs < 2 {
        return Err(Error::config("wrong-direction audio needs at least two blobs"));
    }
    (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let seed = scene_seed(spec.seed, i);
            let sample = generate(&SceneConfig { seed, ..sc.clone() })?;
            let frames: Vec<Vec<f64>> =
                cfg.frame_indices(current).into_iter().map(|f| sample.frames[f].clone()).collect();
            let video = VideoInput(crate::nn::Tensor { shape: vec![frames.len() * cfg.width * cfg.height, 3], data: frames.concat() });
            let end = sample.frame_samples(current).end;
            let audio = crate::model::audio_input(cfg, &sample.clip.slice(0, end)?)?;
            let wrong_audio = if spec.wrong_audio {
                let other = (sc.sounding_index + 1) % sc.n_blobs;
                Some(crate::model::audio_input(cfg, &sample.reencode(other)?.slice(0, end)?)?)
            } else {
                None
            };
            let gt = sample.gt[current].clone();
            let fixations = sample_fixations(&gt, spec.fixations, current, seed ^ 0x5eed);
            Ok(Example { seed, video, audio, wrong_audio, target: Target::new(gt.values())?, gt, fixations })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; decays to `lr_min` on a cosine.
    pub lr: f64,
    pub lr_min: f64,
    pub momentum: f64,
    /// Rescales the batch gradient when its L2 norm exceeds this.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 40, batch_size: 8, lr: 0.01, lr_min: 0.0, momentum: 0.9, grad_clip: Some(5.0), seed: 0 }
    }
}

impl TrainConfig {
    pub fn steps(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size.max(1))
    }

    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let t = step as f64 / total.max(1) as f64;
        self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Batch means of every term.
    pub loss: LossBreakdown,
}

fn mean_breakdown(items: &[LossBreakdown]) -> LossBreakdown {
    let n = items.len() as f64;
    let avg = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
    LossBreakdown {
        l1: avg(|b| b.l1),
        cc: avg(|b| b.cc),
        kl: avg(|b| b.kl),
        bce: avg(|b| b.bce),
        total: avg(|b| b.total),
        cc_degenerate: items.iter().any(|b| b.cc_degenerate),
    }
}

/// Mini-batch SGD with momentum on the weighted total loss. Per-sample
/// gradients are computed in parallel and summed in sample order, so the
/// result does not depend on the thread count.
pub fn train(model: &mut Model, data: &[Example], cfg: &TrainConfig) -> Result<Vec<StepLog>> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let total = cfg.steps(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Vec<f64>> = (0..model.params().len()).map(|i| vec![0.0; model.params().tensor(i).len()]).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let m: &Model = model;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| m.loss_and_grads(&data[i].video, &data[i].audio, &data[i].target))
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::InvalidInput(msg) if msg.contains("not finite") => Error::Diverged { step, loss: f64::NAN },
                    e => e,
                })?;
            let losses: Vec<LossBreakdown> = results.iter().map(|r| r.0).collect();
            let loss = mean_breakdown(&losses);
            if !loss.total.is_finite() {
                return Err(Error::Diverged { step, loss: loss.total });
            }
            let mut grad: Vec<Option<Vec<f64>>> = vec![None; velocity.len()];
            for (_, g) in results {
                for (acc, g) in grad.iter_mut().zip(g) {
                    if let Some(g) = g {
                        match acc {
                            Some(a) => a.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => *acc = Some(g),
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let norm = grad.iter().flatten().flat_map(|g| g.iter()).map(|v| (v * scale).powi(2)).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::Diverged { step, loss: loss.total });
            }
            let clip = match cfg.grad_clip {
                Some(c) if norm > c => c / norm,
                _ => 1.0,
            };
            let lr = cfg.lr_at(step, total);
            if lr != 0.0 {
                for (id, g) in grad.into_iter().enumerate() {
                    let Some(g) = g else { continue };
                    let v = &mut velocity[id];
                    let p = &mut model.params_mut().tensor_mut(id).data;
                    for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                        *v = cfg.momentum * *v + g * scale * clip;
                        *p -= lr * *v;
                    }
                }
            }
            if !model.params().all_finite() {
                return Err(Error::Diverged { step, loss: loss.total });
            }
            log.push(StepLog { step, epoch, lr, loss });
            step += 1;
        }
    }
    Ok(log)
}

/// Which audio the model hears during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AudioChoice {
    #[default]
    Matched,
    /// The source re-encoded on a silent blob's track.
    Wrong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sample: usize,
    pub seed: u64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub mean: MetricReport,
}

impl EvalTable {
    /// One line per sample plus a final `mean` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("sample,seed,{}\n", METRIC_NAMES.join(","));
        let fmt = |r: &MetricReport| METRIC_NAMES.map(|m| format!("{:.9}", r.get(m).unwrap())).join(",");
        for row in &self.rows {
            out += &format!("{},{},{}\n", row.sample, row.seed, fmt(&row.report));
        }
        out += &format!("mean,,{}\n", fmt(&self.mean));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub seconds_per_sample: f64,
}

/// Scores given predictions. Each sample's shuffled-AUC negatives are the
/// fixations of every other sample.
pub fn score(preds: &[SaliencyMap], data: &[Example], cfg: &MetricConfig) -> Result<EvalTable> {
    if preds.len() != data.len() || data.is_empty() {
        return Err(Error::invalid(format!("{} predictions for {} samples", preds.len(), data.len())));
    }
    let rows: Vec<EvalRow> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let pool: Vec<FixationMap> =
                data.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, e)| e.fixations.clone()).collect();
            let report = evaluate_frame(&preds[i], &data[i].fixations, Some(&data[i].gt), &pool, cfg)?;
            Ok(EvalRow { sample: i, seed: data[i].seed, report })
        })
        .collect::<Result<_>>()?;
    let reports: Vec<MetricReport> = rows.iter().map(|r| r.report.clone()).collect();
    let mean = MetricReport::mean(&reports).expect("non-empty");
    Ok(EvalTable { rows, mean })
}

pub fn predict(model: &Model, data: &[Example], choice: AudioChoice) -> Result<Vec<SaliencyMap>> {
    data.par_iter()
        .map(|e| {
            let audio = match choice {
                AudioChoice::Matched => &e.audio,
                AudioChoice::Wrong => e.wrong_audio.as_ref().ok_or_else(|| Error::invalid("dataset has no wrong-direction audio"))?,
            };
            model.forward(&e.video, audio)
        })
        .collect()
}

pub fn evaluate(model: &Model, data: &[Example], cfg: &MetricConfig, choice: AudioChoice) -> Result<(EvalTable, Timing)> {
    let start = Instant::now();
    let preds = predict(model, data, choice)?;
    let inference = start.elapsed().as_secs_f64();
    let table = score(&preds, data, cfg)?;
    Ok((table, Timing { total_seconds: inference, seconds_per_sample: inference / data.len() as f64 }))
}

/// A single ablation axis and the settings it sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Temporal(Vec<TemporalVariant>),
    Fusion(Vec<FusionVariant>),
    FusionLevels(Vec<usize>),
    AudioMode(Vec<AudioMode>),
    /// `(frames, frame_step)` pairs.
    FrameSampling(Vec<(usize, usize)>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Temporal(_) => "temporal",
            Axis::Fusion(_) => "fusion",
            Axis::FusionLevels(_) => "fusion_levels",
            Axis::AudioMode(_) => "audio_mode",
            Axis::FrameSampling(_) => "frame_sampling",
        }
    }

    /// `(label, config)` for every setting, each varying only this axis.
    pub fn configs(&self, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
        let with = |f: &dyn Fn(&mut ModelConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Axis::Temporal(v) => v.iter().map(|t| (t.to_string(), with(&|c| c.temporal = *t))).collect(),
            Axis::Fusion(v) => v.iter().map(|t| (t.to_string(), with(&|c| c.fusion = *t))).collect(),
            Axis::FusionLevels(v) => v.iter().map(|n| (n.to_string(), with(&|c| c.fusion_levels = *n))).collect(),
            Axis::AudioMode(v) => v.iter().map(|m| (m.to_string(), with(&|c| c.audio_mode = *m))).collect(),
            Axis::FrameSampling(v) => v
                .iter()
                .map(|&(t, s)| {
                    (
                        format!("{t}x{s}"),
                        with(&|c| {
                            c.frames = t;
                            c.frame_step = s;
                        }),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub train_data: DataSpec,
    pub test_data: DataSpec,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
    pub model_seed: u64,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            train_data: DataSpec { seed: 1, ..Default::default() },
            test_data: DataSpec { seed: 2, ..Default::default() },
            train: TrainConfig::default(),
            metrics: MetricConfig::default(),
            model_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub setting: String,
    pub params: usize,
    pub final_loss: f64,
    pub report: MetricReport,
}

/// Trains and tests the base configuration (no axes) or every setting of
/// every axis, all from the same model, data and optimizer seeds.
pub fn ablate(base: &ModelConfig, spec: &AblationSpec, axes: &[Axis]) -> Result<Vec<AblationRow>> {
    let mut runs = Vec::new();
    if axes.is_empty() {
        runs.push(("base".to_string(), "base".to_string(), base.clone()));
    }
    for axis in axes {
        for (label, cfg) in axis.configs(base) {
            runs.push((axis.name().to_string(), label, cfg));
        }
    }
    // data depends on the model only through frame sampling and audio layout
    let mut cache: HashMap<String, (Vec<Example>, Vec<Example>)> = HashMap::new();
    let mut rows = Vec::with_capacity(runs.len());
    for (axis, setting, cfg) in runs {
        cfg.validate()?;
        let key = format!("{}:{}:{}", cfg.frames, cfg.frame_step, cfg.audio_mode);
        if !cache.contains_key(&key) {
            let data = (build_dataset(&cfg, &spec.train_data)?, build_dataset(&cfg, &spec.test_data)?);
            cache.insert(key.clone(), data);
        }
        let (train_set, test_set) = &cache[&key];
        let mut model = Model::new(cfg, spec.model_seed)?;
        let log = train(&mut model, train_set, &spec.train)?;
        let (table, _) = evaluate(&model, test_set, &spec.metrics, AudioChoice::Matched)?;
        rows.push(AblationRow {
            axis,
            setting,
            params: model.params().count(),
            final_loss: log.last().map_or(f64::NAN, |l| l.loss.total),
            report: table.mean,
        });
    }
    Ok(rows)
}

/// Ablation rows as CSV.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("axis,setting,params,final_loss,{}\n", METRIC_NAMES.join(","));
    for r in rows {
        let m = METRIC_NAMES.map(|m| format!("{:.9}", r.report.get(m).unwrap())).join(",");
        out += &format!("{},{},{},{:.9},{m}\n", r.axis, r.setting, r.params, r.final_loss);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::MelParams;
    use crate::metrics::{KldReference, Weighting};
    use crate::model::AudioConfig;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            width: 16,
            height: 8,
            channels: 4,
            frames: 2,
            frame_step: 1,
            stage_scales: vec![4, 4, 8, 8, 8, 8, 8],
            heads: 2,
            audio: AudioConfig {
                clip_seconds: 0.1,
                mel: MelParams { n_fft: 256, hop: 128, n_mels: 8, ..Default::default() },
                patch_mels: 4,
                patch_frames: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn tiny_data(n: usize, seed: u64) -> DataSpec {
        DataSpec {
            scene: SceneConfig { width: 16, height: 8, duration: 0.2, blob_sigma_deg: 25.0, gt_sigma_deg: 25.0, ..Default::default() },
            n,
            seed,
            fixations: 10,
            current_frame: None,
            wrong_audio: true,
        }
    }

    #[test]
    fn dataset_contract() {
        let cfg = tiny_model();
        let d = build_dataset(&cfg, &tiny_data(3, 4)).unwrap();
        assert_eq!(d.len(), 3);
        for e in &d {
            assert_eq!(e.video.0.shape, vec![2 * 16 * 8, 3]);
            assert!((e.gt.sum() - 1.0).abs() < 1e-12);
            assert_eq!(e.fixations.total(), 10);
            assert_ne!(e.audio, *e.wrong_audio.as_ref().unwrap());
        }
        let again = build_dataset(&cfg, &tiny_data(3, 4)).unwrap();
        assert_eq!(d[2].video, again[2].video);
        let wide = ModelConfig { width: 32, ..cfg };
        assert!(matches!(build_dataset(&wide, &tiny_data(1, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let cfg = tiny_model();
        let d = build_dataset(&cfg, &tiny_data(4, 1)).unwrap();
        let mut m = Model::new(cfg, 3).unwrap();
        let before = m.params().clone();
        let tc = TrainConfig { epochs: 2, batch_size: 2, lr: 0.0, ..Default::default() };
        let log = train(&mut m, &d, &tc).unwrap();
        assert_eq!(log.len(), 4);
        assert_eq!(m.params(), &before);
        assert!(train(&mut m, &[], &tc).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_model();
        let d = build_dataset(&cfg, &tiny_data(6, 2)).unwrap();
        let tc = TrainConfig { epochs: 2, batch_size: 3, seed: 5, ..Default::default() };
        let run = || {
            let mut m = Model::new(cfg.clone(), 1).unwrap();
            let log = train(&mut m, &d, &tc).unwrap();
            (log, m.params().clone())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn smoke_training_reduces_loss() {
        // 50 steps on 20 samples, across five seeds
        let cfg = tiny_model();
        let d = build_dataset(&cfg, &tiny_data(20, 3)).unwrap();
        let tc = TrainConfig { epochs: 10, batch_size: 4, lr: 0.01, ..Default::default() };
        for seed in 0..5 {
            let mut m = Model::new(cfg.clone(), seed).unwrap();
            let log = train(&mut m, &d, &TrainConfig { seed, ..tc.clone() }).unwrap();
            assert_eq!(log.len(), 50);
            let avg = |s: &[StepLog]| s.iter().map(|l| l.loss.total).sum::<f64>() / s.len() as f64;
            let (first, last) = (avg(&log[..5]), avg(&log[45..]));
            assert!(last < first, "seed {seed}: {first} -> {last}");
        }
    }

    #[test]
    fn identity_and_uniform_predictors() {
        let cfg = tiny_model();
        let d = build_dataset(&cfg, &tiny_data(4, 6)).unwrap();
        let mc = MetricConfig { kld_reference: KldReference::Saliency, ..Default::default() };
        let gt: Vec<SaliencyMap> = d.iter().map(|e| e.gt.clone()).collect();
        let t = score(&gt, &d, &mc).unwrap();
        assert!((t.mean.cc - 1.0).abs() < 1e-12);
        assert!((t.mean.sim - 1.0).abs() < 1e-12);
        assert!(t.mean.kld <= 1e-6);
        assert_eq!(t.to_csv().lines().count(), 1 + d.len() + 1);

        let flat: Vec<SaliencyMap> = d.iter().map(|e| SaliencyMap::new(e.gt.grid(), vec![0.5; 128]).unwrap()).collect();
        // sin weighting would tilt a flat map, so score it unweighted
        let t = score(&flat, &d, &MetricConfig { weighting: Weighting::Uniform, ..mc }).unwrap();
        assert_eq!(t.mean.auc_j, 0.5);
        assert_eq!(t.mean.nss, 0.0);
    }

    #[test]
    fn wrong_audio_requires_two_blobs() {
        let mut spec = tiny_data(1, 0);
        spec.scene.n_blobs = 1;
        assert!(build_dataset(&tiny_model(), &spec).is_err());
        spec.wrong_audio = false;
        let d = build_dataset(&tiny_model(), &spec).unwrap();
        let m = Model::new(tiny_model(), 0).unwrap();
        assert!(predict(&m, &d, AudioChoice::Wrong).is_err());
    }

    fn tiny_spec() -> AblationSpec {
        AblationSpec {
            train_data: tiny_data(4, 1),
            test_data: DataSpec { wrong_audio: false, ..tiny_data(3, 2) },
            train: TrainConfig { epochs: 1, batch_size: 2, ..Default::default() },
            metrics: MetricConfig::default(),
            model_seed: 4,
        }
    }

    #[test]
    fn empty_axes_match_single_run() {
        let cfg = tiny_model();
        let spec = tiny_spec();
        let rows = ablate(&cfg, &spec, &[]).unwrap();
        assert_eq!(rows.len(), 1);
        let mut m = Model::new(cfg.clone(), spec.model_seed).unwrap();
        train(&mut m, &build_dataset(&cfg, &spec.train_data).unwrap(), &spec.train).unwrap();
        let (t, _) = evaluate(&m, &build_dataset(&cfg, &spec.test_data).unwrap(), &spec.metrics, AudioChoice::Matched).unwrap();
        assert_eq!(rows[0].report, t.mean);
    }

    #[test]
    fn audio_mode_axis_shares_visual_init() {
        let cfg = tiny_model();
        let axis = Axis::AudioMode(vec![AudioMode::Mute, AudioMode::Mono, AudioMode::Ambisonics]);
        let models: Vec<Model> = axis.configs(&cfg).into_iter().map(|(_, c)| Model::new(c, 9).unwrap()).collect();
        let mute = models[0].params();
        for m in &models[1..] {
            for name in mute.names() {
                assert_eq!(mute.get(name), m.params().get(name), "{name}");
            }
        }
        let rows = ablate(&cfg, &tiny_spec(), &[axis]).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.setting.as_str()).collect();
        assert_eq!(labels, ["mute", "mono", "ambisonics"]);
        assert!(rows[0].params < rows[1].params && rows[1].params < rows[2].params);
        assert_eq!(ablation_csv(&rows).lines().count(), 4);
    }
}
