//! Audio-visual saliency network for equirectangular video.
//!
//! Pipeline: a patch-embedding encoder stub taps seven stages, each stage is
//! rescaled to its own resolution, the three deepest stages are aggregated
//! over time, and a U-Net style decoder fuses first-order ambisonic audio
//! tokens (W first, then X, Y and Z in parallel) into its deepest blocks
//! before a logistic head produces the map.

pub mod config;
pub mod layers;
pub mod loss;
pub mod params;

use crate::audio::{mel_spectrogram, BFormatClip};
use crate::error::{Error, Result};
use crate::maps::SaliencyMap;
use crate::nn::{self, Tape, Tensor, Var};
use crate::sphere::ErpGrid;

pub use config::{AudioConfig, AudioMode, FusionVariant, ModelConfig, TemporalVariant, N_STAGES};
pub use layers::Session;
pub use loss::{saliency_loss, LossBreakdown, Target};
pub use params::{Init, ParamStore};

use layers::*;

/// Per-channel log-Mel inputs for the modes' active channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioInput {
    /// `[k * n_mels * used_frames, 1]`, channel-major, already normalized.
    pub mels: Tensor,
    pub n_channels: usize,
}

/// Stacked RGB frames `[T * H * W, 3]`, oldest first, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct VideoInput(pub Tensor);

#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    params: ParamStore,
}

/// Every parameter of a configuration, in declaration order.
pub fn declare(cfg: &ModelConfig, d: &mut Declare) {
    let c = cfg.channels;
    let r = cfg.mlp_ratio;
    let (th, tw) = cfg.token_grid();
    d("enc.pos", &[th * tw, c], Init::Uniform(0.02 * 3f64.sqrt()));
    declare_linear(d, "enc.patch", cfg.patch * cfg.patch * 3, c);
    for b in 1..=N_STAGES {
        declare_ln(d, &format!("enc.block{b}.ln"), c);
        declare_conv3x3(d, &format!("enc.block{b}.conv"), c, c);
        declare_linear(d, &format!("enc.block{b}.proj"), c, c);
    }
    for i in 0..N_STAGES {
        let name = format!("stage{}", i + 1);
        let s = cfg.stage_scales[i];
        if s >= cfg.patch {
            declare_conv3x3(d, &format!("{name}.conv"), c, c);
        } else {
            for k in 0..(cfg.patch / s).trailing_zeros() {
                declare_conv3x3(d, &format!("{name}.up{k}"), c, 4 * c);
            }
        }
    }
    let t = cfg.frames;
    for stage in config::TEMPORAL_STAGES {
        let name = format!("temporal{stage}");
        match cfg.temporal {
            TemporalVariant::Conv3d => declare_conv3d(d, &format!("{name}.conv3d"), t, c, c),
            TemporalVariant::StGru => {
                declare_gru(d, &format!("{name}.sgru"), c);
                declare_gru(d, &format!("{name}.tgru"), c);
            }
            TemporalVariant::StTransformer => {
                declare_ln(d, &format!("{name}.ln_s"), c);
                declare_attention(d, &format!("{name}.msa_s"), c);
                declare_ln(d, &format!("{name}.ln_t"), c);
                declare_attention(d, &format!("{name}.msa_t"), c);
                declare_ln(d, &format!("{name}.ln_f"), c);
                declare_ffn(d, &format!("{name}.ffn"), c, r);
                declare_conv3d(d, &format!("{name}.conv3d"), t, c, c);
            }
        }
    }
    if cfg.uses_audio() {
        let a = &cfg.audio;
        d("audio.pos", &[a.n_tokens(), c], Init::Uniform(0.02 * 3f64.sqrt()));
        declare_linear(d, "audio.patch", a.patch_mels * a.patch_frames, c);
        for j in 1..=a.levels {
            declare_ln(d, &format!("audio.block{j}.ln1"), c);
            declare_attention(d, &format!("audio.block{j}.msa"), c);
            declare_ln(d, &format!("audio.block{j}.ln2"), c);
            declare_ffn(d, &format!("audio.block{j}.ffn"), c, r);
            declare_ln(d, &format!("audio.norm{j}"), c);
        }
    }
    for b in 1..N_STAGES {
        let name = format!("dec{b}");
        if cfg.uses_audio() && b <= cfg.fusion_levels {
            match cfg.fusion {
                FusionVariant::CrossTransformer => {
                    declare_cross_transformer(d, &format!("{name}.fuse.w"), c, r);
                    if cfg.audio_mode == AudioMode::Ambisonics {
                        for ch in ["x", "y", "z"] {
                            declare_cross_transformer(d, &format!("{name}.fuse.{ch}"), c, r);
                        }
                        declare_linear(d, &format!("{name}.fuse.out"), 3 * c, c);
                    }
                }
                FusionVariant::Concat => {
                    let k = cfg.audio_mode.channels().len();
                    declare_linear(d, &format!("{name}.fuse.proj"), c + k * c, c);
                }
                FusionVariant::None => {}
            }
        }
        let from = cfg.stage_grid(N_STAGES - b);
        let to = cfg.stage_grid(N_STAGES - b - 1);
        for k in 0..(to.0 / from.0).trailing_zeros() {
            declare_conv3x3(d, &format!("{name}.up{k}"), c, 4 * c);
        }
        declare_linear(d, &format!("{name}.merge"), 2 * c, c);
    }
    let f = cfg.height / cfg.stage_grid(0).0;
    declare_linear(d, "head", c, f * f);
}

/// Number of scalar parameters of a configuration.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let mut n = 0;
    declare(cfg, &mut |_, shape, _| n += shape.iter().product::<usize>());
    n
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new(seed);
        declare(&cfg, &mut |name, shape, init| params.init(name, shape, init));
        Ok(Self { cfg, params })
    }

    /// Wraps loaded parameters after checking them against the configuration.
    pub fn with_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let mut problems = Vec::new();
        let mut expected = 0;
        declare(&cfg, &mut |name, shape, _| {
            expected += 1;
            match params.get(name) {
                Some(t) if t.shape == shape => {}
                Some(t) => problems.push(format!("{name}: shape {:?}, expected {shape:?}", t.shape)),
                None => problems.push(format!("{name}: missing")),
            }
        });
        if expected != params.len() {
            problems.push(format!("{} tensors stored, {expected} declared", params.len()));
        }
        if !problems.is_empty() {
            return Err(Error::config(format!("parameters do not fit the model: {}", problems.join("; "))));
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn grid(&self) -> ErpGrid {
        ErpGrid::new(self.cfg.width, self.cfg.height).expect("validated grid")
    }

    /// Stacks `T` RGB frames (`H*W*3` interleaved values each).
    pub fn video_input(&self, frames: &[Vec<f64>]) -> Result<VideoInput> {
        let n = self.cfg.width * self.cfg.height * 3;
        if frames.len() != self.cfg.frames {
            return Err(Error::invalid(format!("expected {} frames, got {}", self.cfg.frames, frames.len())));
        }
        let mut data = Vec::with_capacity(n * frames.len());
        for f in frames {
            if f.len() != n {
                return Err(Error::invalid(format!("frame has {} values, expected {n}", f.len())));
            }
            data.extend_from_slice(f);
        }
        Ok(VideoInput(Tensor { shape: vec![frames.len() * n / 3, 3], data }))
    }

    /// Log-Mel inputs from the last `clip_seconds` of a clip.
    pub fn audio_input(&self, clip: &BFormatClip) -> Result<AudioInput> {
        audio_input(&self.cfg, clip)
    }

    pub fn forward(&self, video: &VideoInput, audio: &AudioInput) -> Result<SaliencyMap> {
        let mut tape = Tape::new();
        let out = {
            let mut s = Session::new(&mut tape, &self.params);
            self.forward_on(&mut s, video, audio)?
        };
        SaliencyMap::new(self.grid(), tape.value(out).data.clone())
    }

    /// Full forward pass recorded on a session; returns `[H*W, 1]` in (0,1).
    pub fn forward_on(&self, s: &mut Session, video: &VideoInput, audio: &AudioInput) -> Result<Var> {
        let cfg = &self.cfg;
        let expect = cfg.frames * cfg.width * cfg.height;
        if video.0.rows() != expect || video.0.cols() != 3 {
            return Err(Error::invalid(format!("video input {:?} does not hold {} frames", video.0.shape, cfg.frames)));
        }
        let taps = encoder_stub(s, cfg, video);
        let mut stages = Vec::with_capacity(N_STAGES);
        for (i, x) in taps.into_iter().enumerate() {
            let m = rescale(s, cfg, x, i);
            let m = if cfg.stage_frames(i) > 1 { temporal_aggregate(s, cfg, m, i + 1)? } else { m };
            stages.push(m);
        }
        let levels = if cfg.uses_audio() { Some(audio_encoder(s, cfg, audio)?) } else { None };
        Ok(decode(s, cfg, &stages, levels.as_deref()))
    }

    /// Loss and per-parameter gradients for one sample (indexed like the
    /// parameter store; `None` for parameters the pass did not touch).
    pub fn loss_and_grads(
        &self,
        video: &VideoInput,
        audio: &AudioInput,
        target: &Target,
    ) -> Result<(LossBreakdown, Vec<Option<Vec<f64>>>)> {
        let mut tape = Tape::new();
        let (loss_var, bound, breakdown) = {
            let mut s = Session::new(&mut tape, &self.params);
            let out = self.forward_on(&mut s, video, audio)?;
            let pd = s.tape.value(out).data.clone();
            let (breakdown, grad) = saliency_loss(&pd, target, self.cfg.loss_weights, self.cfg.kl_eps)?;
            let l = s.tape.external(out, breakdown.total, grad);
            (l, s.bound().to_vec(), breakdown)
        };
        let mut grads = tape.backward(loss_var);
        let per_param = bound.into_iter().map(|v| v.and_then(|v| grads.take(v))).collect();
        Ok((breakdown, per_param))
    }
}

pub fn audio_input(cfg: &ModelConfig, clip: &BFormatClip) -> Result<AudioInput> {
    let a = &cfg.audio;
    let chans = cfg.audio_mode.channels();
    if !cfg.uses_audio() {
        return Ok(AudioInput { mels: Tensor::zeros(&[0, 1]), n_channels: 0 });
    }
    if (clip.sample_rate - a.sample_rate).abs() > 1e-9 {
        return Err(Error::invalid(format!("clip sampled at {} Hz, model expects {} Hz", clip.sample_rate, a.sample_rate)));
    }
    let n = a.n_samples();
    if clip.len() < n {
        return Err(Error::invalid(format!("clip has {} samples, model needs {n}", clip.len())));
    }
    let clip = clip.slice(clip.len() - n, n)?;
    let used = a.used_frames();
    let all = clip.channels();
    let mut data = Vec::with_capacity(chans.len() * a.mel.n_mels * used);
    for &c in chans {
        let m = mel_spectrogram(all[c], a.sample_rate, &a.mel)?;
        for mel in 0..m.n_mels {
            for f in 0..used {
                data.push((m.at(mel, f) - a.offset) / a.scale);
            }
        }
    }
    Ok(AudioInput { mels: Tensor { shape: vec![data.len(), 1], data }, n_channels: chans.len() })
}

/// Seven stage taps. Stages with one frame keep only the current (last) frame.
pub fn encoder_stub(s: &mut Session, cfg: &ModelConfig, video: &VideoInput) -> Vec<Var> {
    let (t, c, p) = (cfg.frames, cfg.channels, cfg.patch);
    let (th, tw) = cfg.token_grid();
    let n = th * tw;
    let frames = s.tape.leaf(video.0.clone());
    let patches = s.tape.gather(frames, nn::patchify(t * cfg.height, cfg.width, 3, p, p), &[t * n, p * p * 3]);
    let mut x = linear(s, patches, "enc.patch");
    let pos = s.p("enc.pos");
    let pos = s.tape.gather(pos, nn::broadcast_rows(t, n * c), &[t * n, c]);
    x = s.tape.add(x, pos);
    let mut taps = Vec::with_capacity(N_STAGES);
    for b in 1..=N_STAGES {
        let y = layer_norm(s, x, &format!("enc.block{b}.ln"));
        let y = conv3x3(s, y, t, th, tw, &format!("enc.block{b}.conv"));
        let y = s.tape.gelu(y);
        let y = linear(s, y, &format!("enc.block{b}.proj"));
        x = s.tape.add(x, y);
        let tap = if cfg.stage_frames(b - 1) == 1 { s.tape.gather(x, nn::row_slice((t - 1) * n, n, c), &[n, c]) } else { x };
        taps.push(tap);
    }
    taps
}

/// Brings stage `i` (0-based) from the token grid to its scheduled grid.
pub fn rescale(s: &mut Session, cfg: &ModelConfig, x: Var, i: usize) -> Var {
    let t = cfg.stage_frames(i);
    let (mut h, mut w) = cfg.token_grid();
    let scale = cfg.stage_scales[i];
    let name = format!("stage{}", i + 1);
    let mut x = x;
    if scale >= cfg.patch {
        for _ in 0..(scale / cfg.patch).trailing_zeros() {
            // frames are stacked along rows; even heights keep pools inside a frame
            x = nn::max_pool2(s.tape, x, t * h, w);
            h /= 2;
            w /= 2;
        }
        conv3x3(s, x, t, h, w, &format!("{name}.conv"))
    } else {
        let c = cfg.channels;
        for k in 0..(cfg.patch / scale).trailing_zeros() {
            let y = conv3x3(s, x, t, h, w, &format!("{name}.up{k}"));
            x = s.tape.gather(y, nn::pixel_shuffle(t * h, w, c, 2), &[t * h * w * 4, c]);
            h *= 2;
            w *= 2;
        }
        x
    }
}

/// Collapses `[T*h*w, C]` (frame-major) to `[h*w, C]` for a temporal stage.
pub fn temporal_aggregate(s: &mut Session, cfg: &ModelConfig, m: Var, stage: usize) -> Result<Var> {
    let (t, c) = (cfg.frames, cfg.channels);
    let (h, w) = cfg.stage_grid(stage - 1);
    let n = h * w;
    if s.tape.value(m).rows() != t * n {
        return Err(Error::invalid(format!("temporal input has {} rows, expected {}", s.tape.value(m).rows(), t * n)));
    }
    let name = format!("temporal{stage}");
    Ok(match cfg.temporal {
        TemporalVariant::Conv3d => conv3d(s, m, t, h, w, &format!("{name}.conv3d")),
        TemporalVariant::StGru => {
            // spatial pass: each frame is a raster-order sequence, frames batched as rows
            let pix = s.tape.gather(m, nn::transpose_outer(t, n, c), &[n * t, c]);
            let mut hs = zeros(s, t, c);
            let mut outs = Vec::with_capacity(n);
            for p in 0..n {
                let xp = s.tape.gather(pix, nn::row_slice(p * t, t, c), &[t, c]);
                hs = gru_step(s, xp, hs, &format!("{name}.sgru"));
                outs.push(hs);
            }
            let spatial = s.tape.concat_rows(&outs);
            let frames = s.tape.gather(spatial, nn::transpose_outer(n, t, c), &[t * n, c]);
            // temporal pass per pixel; final hidden states form the output
            let mut ht = zeros(s, n, c);
            for f in 0..t {
                let xf = s.tape.gather(frames, nn::row_slice(f * n, n, c), &[n, c]);
                ht = gru_step(s, xf, ht, &format!("{name}.tgru"));
            }
            ht
        }
        TemporalVariant::StTransformer => {
            let a = layer_norm(s, m, &format!("{name}.ln_s"));
            let a = attention(s, a, a, t, cfg.heads, &format!("{name}.msa_s"));
            let x = s.tape.add(m, a);
            let xt = s.tape.gather(x, nn::transpose_outer(t, n, c), &[n * t, c]);
            let a = layer_norm(s, xt, &format!("{name}.ln_t"));
            let a = attention(s, a, a, n, cfg.heads, &format!("{name}.msa_t"));
            let xt = s.tape.add(xt, a);
            let f = layer_norm(s, xt, &format!("{name}.ln_f"));
            let f = ffn(s, f, &format!("{name}.ffn"));
            let xt = s.tape.add(xt, f);
            let x = s.tape.gather(xt, nn::transpose_outer(n, t, c), &[t * n, c]);
            conv3d(s, x, t, h, w, &format!("{name}.conv3d"))
        }
    })
}

/// Audio token levels; each level is `[k * n_a, C]`, channel-major.
pub fn audio_encoder(s: &mut Session, cfg: &ModelConfig, audio: &AudioInput) -> Result<Vec<Var>> {
    let a = &cfg.audio;
    let k = cfg.audio_mode.channels().len();
    let used = a.used_frames();
    if audio.n_channels != k || audio.mels.rows() != k * a.mel.n_mels * used {
        return Err(Error::config(format!(
            "audio input carries {} channels of {} values, {} mode needs {k} of {}",
            audio.n_channels,
            audio.mels.rows() / audio.n_channels.max(1),
            cfg.audio_mode,
            a.mel.n_mels * used
        )));
    }
    let (c, na) = (cfg.channels, a.n_tokens());
    let mels = s.tape.leaf(audio.mels.clone());
    let patches = s.tape.gather(
        mels,
        nn::patchify(k * a.mel.n_mels, used, 1, a.patch_mels, a.patch_frames),
        &[k * na, a.patch_mels * a.patch_frames],
    );
    let mut x = linear(s, patches, "audio.patch");
    let pos = s.p("audio.pos");
    let pos = s.tape.gather(pos, nn::broadcast_rows(k, na * c), &[k * na, c]);
    x = s.tape.add(x, pos);
    let mut levels = Vec::with_capacity(a.levels);
    for j in 1..=a.levels {
        let y = layer_norm(s, x, &format!("audio.block{j}.ln1"));
        let y = attention(s, y, y, k, cfg.heads, &format!("audio.block{j}.msa"));
        x = s.tape.add(x, y);
        let y = layer_norm(s, x, &format!("audio.block{j}.ln2"));
        let y = ffn(s, y, &format!("audio.block{j}.ffn"));
        x = s.tape.add(x, y);
        levels.push(layer_norm(s, x, &format!("audio.norm{j}")));
    }
    Ok(levels)
}

/// Injects one audio level into decoder tokens `f`.
pub fn fuse(s: &mut Session, cfg: &ModelConfig, f: Var, level: Var, name: &str) -> Var {
    if !cfg.uses_audio() {
        return f;
    }
    let (c, na) = (cfg.channels, cfg.audio.n_tokens());
    let k = cfg.audio_mode.channels().len();
    let channel = |s: &mut Session, i: usize| s.tape.gather(level, nn::row_slice(i * na, na, c), &[na, c]);
    match cfg.fusion {
        FusionVariant::None => f,
        FusionVariant::Concat => {
            let n = s.tape.value(f).rows();
            let mut parts = vec![f];
            for i in 0..k {
                let a = channel(s, i);
                let pooled = s.tape.mean_rows(a);
                parts.push(s.tape.gather(pooled, nn::broadcast_rows(n, c), &[n, c]));
            }
            let cat = s.tape.concat_cols(&parts);
            linear(s, cat, &format!("{name}.proj"))
        }
        FusionVariant::CrossTransformer => {
            let aw = channel(s, 0);
            let fw = cross_transformer(s, f, aw, cfg.heads, &format!("{name}.w"));
            if cfg.audio_mode == AudioMode::Mono {
                return fw;
            }
            let mut branches = Vec::with_capacity(3);
            for (i, ch) in ["x", "y", "z"].into_iter().enumerate() {
                let a = channel(s, i + 1);
                branches.push(cross_transformer(s, fw, a, cfg.heads, &format!("{name}.{ch}")));
            }
            let cat = s.tape.concat_cols(&branches);
            linear(s, cat, &format!("{name}.out"))
        }
    }
}

/// Decoder over the seven stage features (deepest last) and the head.
pub fn decode(s: &mut Session, cfg: &ModelConfig, stages: &[Var], audio: Option<&[Var]>) -> Var {
    let c = cfg.channels;
    let mut x = stages[N_STAGES - 1];
    let (mut h, mut w) = cfg.stage_grid(N_STAGES - 1);
    for b in 1..N_STAGES {
        let name = format!("dec{b}");
        if let Some(levels) = audio {
            if b <= cfg.fusion_levels {
                // deepest decoder block takes the deepest audio level
                let level = levels[levels.len() - b];
                x = fuse(s, cfg, x, level, &format!("{name}.fuse"));
            }
        }
        let skip = N_STAGES - b - 1;
        let (sh, sw) = cfg.stage_grid(skip);
        for k in 0..(sh / h).trailing_zeros() {
            let y = conv3x3(s, x, 1, h, w, &format!("{name}.up{k}"));
            x = s.tape.gather(y, nn::pixel_shuffle(h, w, c, 2), &[4 * h * w, c]);
            h *= 2;
            w *= 2;
        }
        debug_assert_eq!((h, w), (sh, sw));
        let cat = s.tape.concat_cols(&[x, stages[skip]]);
        let y = linear(s, cat, &format!("{name}.merge"));
        x = s.tape.gelu(y);
    }
    let f = cfg.height / h;
    let y = linear(s, x, "head");
    let y = s.tape.gather(y, nn::pixel_shuffle(h, w, 1, f), &[cfg.height * cfg.width, 1]);
    s.tape.sigmoid(y)
}

/// Central-difference check of a model fragment with respect to its inputs
/// and every parameter it touches. Returns the largest relative error.
pub fn check_fragment(
    params: &ParamStore,
    inputs: &[Tensor],
    f: impl Fn(&mut Session, &[Var]) -> Var,
) -> f64 {
    // discover which parameters the fragment reads
    let used: Vec<usize> = {
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, params);
        let vars: Vec<Var> = inputs.iter().map(|x| s.tape.leaf(x.clone())).collect();
        f(&mut s, &vars);
        s.bound().iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect()
    };
    let mut all = inputs.to_vec();
    all.extend(used.iter().map(|&i| params.tensor(i).clone()));
    let k = inputs.len();
    nn::gradient_check(&all, 1e-4, |tape, vars| {
        let mut bound = vec![None; params.len()];
        for (j, &id) in used.iter().enumerate() {
            bound[id] = Some(vars[k + j]);
        }
        let mut s = Session::with_bound(tape, params, bound);
        f(&mut s, &vars[..k])
    })
}
