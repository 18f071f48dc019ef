use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::MelParams;
use crate::error::{Error, Result};

/// Number of visual stages tapped from the encoder.
pub const N_STAGES: usize = 7;
/// Stages (1-based) that keep all `T` frames and get temporal aggregation.
pub const TEMPORAL_STAGES: [usize; 3] = [5, 6, 7];

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::config(format!(concat!("unknown ", stringify!($name), " `{}`"), s))),
                }
            }
        }
        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($name::$variant => $text,)+ })
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalVariant {
    Conv3d,
    StGru,
    #[default]
    StTransformer,
}
named_enum!(TemporalVariant { Conv3d => "conv3d", StGru => "st_gru", StTransformer => "st_transformer" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    None,
    Concat,
    #[default]
    CrossTransformer,
}
named_enum!(FusionVariant { None => "none", Concat => "concat", CrossTransformer => "cross_transformer" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioMode {
    Mute,
    Mono,
    #[default]
    Ambisonics,
}
named_enum!(AudioMode { Mute => "mute", Mono => "mono", Ambisonics => "ambisonics" });

impl AudioMode {
    /// B-format channels fed to the audio encoder, in W, X, Y, Z order.
    pub fn channels(self) -> &'static [usize] {
        match self {
            AudioMode::Mute => &[],
            AudioMode::Mono => &[0],
            AudioMode::Ambisonics => &[0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: f64,
    pub clip_seconds: f64,
    pub mel: MelParams,
    /// Patch extent along the mel axis and along time.
    pub patch_mels: usize,
    pub patch_frames: usize,
    pub levels: usize,
    /// Log-Mel values enter the encoder as `(v - offset) / scale`.
    pub offset: f64,
    pub scale: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            clip_seconds: 2.0,
            mel: MelParams::default(),
            patch_mels: 16,
            patch_frames: 8,
            levels: 3,
            offset: 0.0,
            scale: 10.0,
        }
    }
}

impl AudioConfig {
    pub fn n_samples(&self) -> usize {
        (self.sample_rate * self.clip_seconds).round() as usize
    }

    /// Spectrogram frames kept (a multiple of `patch_frames`).
    pub fn used_frames(&self) -> usize {
        let f = self.mel.n_frames(self.n_samples());
        f - f % self.patch_frames
    }

    pub fn n_tokens(&self) -> usize {
        (self.mel.n_mels / self.patch_mels) * (self.used_frames() / self.patch_frames)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: usize,
    pub frame_step: usize,
    pub patch: usize,
    /// Per-stage downsampling factor relative to the input frame.
    pub stage_scales: Vec<usize>,
    pub temporal: TemporalVariant,
    pub fusion: FusionVariant,
    pub fusion_levels: usize,
    pub audio_mode: AudioMode,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub loss_weights: [f64; 4],
    pub kl_eps: f64,
    pub audio: AudioConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 32,
            channels: 32,
            frames: 8,
            frame_step: 8,
            patch: 4,
            stage_scales: vec![4, 8, 16, 32, 32, 32, 32],
            temporal: TemporalVariant::default(),
            fusion: FusionVariant::default(),
            fusion_levels: 3,
            audio_mode: AudioMode::default(),
            heads: 4,
            mlp_ratio: 2,
            loss_weights: [1.0, 0.2, 0.2, 1.0],
            kl_eps: 1e-7,
            audio: AudioConfig::default(),
        }
    }
}

fn pow2_ratio(a: usize, b: usize) -> Option<u32> {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    (lo > 0 && hi % lo == 0 && (hi / lo).is_power_of_two()).then(|| (hi / lo).trailing_zeros())
}

impl ModelConfig {
    /// Reduced configuration used for the synthetic experiments: 16
    /// channels, two frames four apart, and a stage schedule that keeps the
    /// deepest grid at 8x4 on a 64x32 input so fusion still sees positions.
    pub fn desk() -> Self {
        Self { channels: 16, frames: 2, frame_step: 4, stage_scales: vec![4, 4, 8, 8, 8, 8, 8], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.channels == 0 || self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return bad(format!("channels {} must be a positive multiple of heads {}", self.channels, self.heads));
        }
        if self.frames == 0 || self.frame_step == 0 {
            return bad("frames and frame_step must be at least 1".into());
        }
        if self.patch == 0 || !self.width.is_multiple_of(self.patch) || !self.height.is_multiple_of(self.patch) {
            return bad(format!("patch {} must divide the {}x{} input", self.patch, self.width, self.height));
        }
        if self.stage_scales.len() != N_STAGES {
            return bad(format!("expected {N_STAGES} stage scales, got {}", self.stage_scales.len()));
        }
        for (i, &s) in self.stage_scales.iter().enumerate() {
            if s == 0 || !self.width.is_multiple_of(s) || !self.height.is_multiple_of(s) {
                return bad(format!("stage {} scale {s} must divide the input size", i + 1));
            }
            if pow2_ratio(s, self.patch).is_none() {
                return bad(format!("stage {} scale {s} is not a power-of-two multiple or divisor of patch {}", i + 1, self.patch));
            }
            if i > 0 {
                let prev = self.stage_scales[i - 1];
                if s < prev || pow2_ratio(s, prev).is_none() {
                    return bad("stage scales must be non-decreasing powers of two apart".into());
                }
            }
        }
        if self.fusion_levels > N_STAGES - 1 {
            return bad(format!("fusion_levels {} exceeds the decoder depth {}", self.fusion_levels, N_STAGES - 1));
        }
        let a = &self.audio;
        if self.uses_audio() {
            if self.fusion_levels > a.levels {
                return bad(format!("fusion_levels {} exceeds audio levels {}", self.fusion_levels, a.levels));
            }
            if a.patch_mels == 0 || a.patch_frames == 0 || !a.mel.n_mels.is_multiple_of(a.patch_mels) {
                return bad("audio patch must divide the mel axis".into());
            }
            if a.n_tokens() == 0 {
                return bad("audio clip too short for one patch".into());
            }
            if !(a.scale > 0.0) {
                return bad("audio scale must be positive".into());
            }
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be at least 1".into());
        }
        Ok(())
    }

    /// Whether the audio branch runs at all.
    pub fn uses_audio(&self) -> bool {
        self.fusion != FusionVariant::None && self.audio_mode != AudioMode::Mute && self.fusion_levels > 0
    }

    pub fn token_grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    /// `(h, w)` of stage `i` (0-based).
    pub fn stage_grid(&self, i: usize) -> (usize, usize) {
        (self.height / self.stage_scales[i], self.width / self.stage_scales[i])
    }

    /// Frames carried by stage `i` (0-based).
    pub fn stage_frames(&self, i: usize) -> usize {
        if TEMPORAL_STAGES.contains(&(i + 1)) {
            self.frames
        } else {
            1
        }
    }

    /// Indices of the sampled frames, oldest first, ending at `current`.
    /// Indices before the clip start are clamped to frame 0.
    pub fn frame_indices(&self, current: usize) -> Vec<usize> {
        (0..self.frames)
            .map(|k| current.saturating_sub((self.frames - 1 - k) * self.frame_step))
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ModelConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
