//! Synthetic audio-visual scenes: identical Gaussian blobs drifting on the
//! sphere, one of which emits band-limited noise encoded as first-order
//! ambisonics. Ground truth puts most of the attention mass on the sounding
//! blob, so only a model that reads the audio direction can match it.

pub mod harness;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{encoding_gains, BFormatClip};
use crate::error::{Error, Result};
use crate::gaze::smooth_points;
use crate::maps::{FixationMap, SaliencyMap};
use crate::sphere::{self, ErpGrid, SphericalCoord, UnitVector3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub n_blobs: usize,
    pub sounding_index: usize,
    /// Ground-truth mass carried by the sounding blob; the rest is split
    /// evenly among the silent ones.
    pub sounding_share: f64,
    pub blob_sigma_deg: f64,
    pub gt_sigma_deg: f64,
    /// Blob start positions are drawn with `|lat| <= max_lat`.
    pub max_lat: f64,
    /// Minimum great-circle distance between any two blobs at every frame.
    pub min_separation_deg: f64,
    pub max_speed_deg_s: f64,
    pub band_hz: [f64; 2],
    pub source_rms: f64,
    pub background: f64,
    /// Added to every blob longitude (rotates the whole scene).
    pub yaw_offset_deg: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 32,
            fps: 30.0,
            duration: 2.0,
            sample_rate: 16_000.0,
            n_blobs: 2,
            sounding_index: 0,
            sounding_share: 0.7,
            blob_sigma_deg: 12.0,
            gt_sigma_deg: 12.0,
            max_lat: 45.0,
            min_separation_deg: 60.0,
            max_speed_deg_s: 10.0,
            band_hz: [200.0, 4000.0],
            source_rms: 0.1,
            background: 0.1,
            yaw_offset_deg: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(1..=3).contains(&self.n_blobs) {
            return bad(format!("n_blobs must be 1, 2 or 3, got {}", self.n_blobs));
        }
        if self.sounding_index >= self.n_blobs {
            return bad(format!("sounding_index {} out of range for {} blobs", self.sounding_index, self.n_blobs));
        }
        if !(0.0..=1.0).contains(&self.sounding_share) {
            return bad("sounding_share must lie in [0, 1]".into());
        }
        if self.n_frames() == 0 || self.n_samples() == 0 {
            return bad("clip must contain at least one frame and one sample".into());
        }
        if !(self.blob_sigma_deg > 0.0 && self.gt_sigma_deg > 0.0) {
            return bad("sigmas must be positive".into());
        }
        if !(self.band_hz[0] >= 0.0 && self.band_hz[0] < self.band_hz[1] && self.band_hz[1] <= self.sample_rate / 2.0) {
            return bad(format!("band {:?} Hz must lie below Nyquist", self.band_hz));
        }
        ErpGrid::new(self.width, self.height)?;
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn grid(&self) -> ErpGrid {
        ErpGrid::new(self.width, self.height).expect("validated grid")
    }

    /// Ground-truth share of each blob.
    pub fn shares(&self) -> Vec<f64> {
        if self.n_blobs == 1 {
            return vec![1.0];
        }
        let rest = (1.0 - self.sounding_share) / (self.n_blobs - 1) as f64;
        (0..self.n_blobs).map(|b| if b == self.sounding_index { self.sounding_share } else { rest }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub config: SceneConfig,
    /// Interleaved RGB in [0, 1], one `H*W*3` vector per frame.
    pub frames: Vec<Vec<f64>>,
    pub clip: BFormatClip,
    /// Mono source signal before spatial encoding.
    pub source: Vec<f64>,
    /// Per-frame ground truth, each summing to 1.
    pub gt: Vec<SaliencyMap>,
    /// `tracks[blob][frame]`: blob centers.
    pub tracks: Vec<Vec<SphericalCoord>>,
}

impl SynthSample {
    pub fn source_track(&self) -> &[SphericalCoord] {
        &self.tracks[self.config.sounding_index]
    }

    /// The same source signal placed on another blob's track.
    pub fn reencode(&self, blob: usize) -> Result<BFormatClip> {
        if blob >= self.tracks.len() {
            return Err(Error::invalid(format!("no blob {blob}")));
        }
        encode_moving(&self.source, &self.tracks[blob], &self.config)
    }

    /// Sample indices covered by video frame `frame`.
    pub fn frame_samples(&self, frame: usize) -> std::ops::Range<usize> {
        let c = &self.config;
        let start = ((frame as f64 / c.fps) * c.sample_rate).round() as usize;
        let end = (((frame + 1) as f64 / c.fps) * c.sample_rate).round() as usize;
        start.min(self.clip.len())..end.min(self.clip.len())
    }
}

fn rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    // Rodrigues' formula for a unit axis
    let (s, c) = angle.sin_cos();
    let dot = v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2];
    let cross = [axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2], axis[0] * v[1] - axis[1] * v[0]];
    [0, 1, 2].map(|i| v[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
}

fn to_coord(v: [f64; 3]) -> SphericalCoord {
    let u = UnitVector3::normalize(v[0], v[1], v[2]).expect("rotation keeps unit length");
    sphere::vec_to_latlon(u).expect("unit vector")
}

fn random_track(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Vec<SphericalCoord> {
    let lat = rng.random_range(-cfg.max_lat..=cfg.max_lat);
    let lon = rng.random_range(0.0..360.0);
    let start = SphericalCoord::new(lat, lon).expect("bounded lat").to_vec().as_array();
    // motion along a great circle through the start point
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let east = {
        let l = lon.to_radians();
        [-l.sin(), l.cos(), 0.0]
    };
    let north = {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        [-la.sin() * lo.cos(), -la.sin() * lo.sin(), la.cos()]
    };
    let dir = [0, 1, 2].map(|i| heading.cos() * east[i] + heading.sin() * north[i]);
    let axis = [start[1] * dir[2] - start[2] * dir[1], start[2] * dir[0] - start[0] * dir[2], start[0] * dir[1] - start[1] * dir[0]];
    let speed = rng.random_range(0.0..=cfg.max_speed_deg_s).to_radians();
    (0..cfg.n_frames())
        .map(|f| {
            let c = to_coord(rotate(start, axis, speed * f as f64 / cfg.fps));
            SphericalCoord::new(c.lat(), sphere::wrap_lon(c.lon() + cfg.yaw_offset_deg)).expect("valid")
        })
        .collect()
}

fn band_noise(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Vec<f64> {
    let n = cfg.n_samples();
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * cfg.sample_rate / n as f64;
        if f < cfg.band_hz[0] || f > cfg.band_hz[1] {
            *b = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    x.iter().map(|v| v * cfg.source_rms / rms.max(f64::MIN_POSITIVE)).collect()
}

/// Encodes `signal` with the direction updated at every video frame.
fn encode_moving(signal: &[f64], track: &[SphericalCoord], cfg: &SceneConfig) -> Result<BFormatClip> {
    let n = signal.len();
    let (mut w, mut x, mut y, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (i, s) in signal.iter().enumerate() {
        let f = ((i as f64 / cfg.sample_rate) * cfg.fps).floor() as usize;
        let g = encoding_gains(track[f.min(track.len() - 1)]);
        w[i] = s * g[0];
        x[i] = s * g[1];
        y[i] = s * g[2];
        z[i] = s * g[3];
    }
    BFormatClip::new(w, x, y, z, cfg.sample_rate)
}

fn render_frame(grid: ErpGrid, centers: &[UnitVector3], blobs: &[UnitVector3], cfg: &SceneConfig) -> Vec<f64> {
    let inv = 1.0 / (2.0 * cfg.blob_sigma_deg * cfg.blob_sigma_deg);
    let mut rgb = Vec::with_capacity(grid.len() * 3);
    for c in centers {
        let mut v = cfg.background;
        for b in blobs {
            let d = sphere::great_circle_unchecked(c, b);
            v += (1.0 - cfg.background) * (-d * d * inv).exp();
        }
        let v = v.min(1.0);
        rgb.extend_from_slice(&[v, v, v]);
    }
    rgb
}

/// Renders one scene. Identical configurations give identical samples.
pub fn generate(cfg: &SceneConfig) -> Result<SynthSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grid = cfg.grid();
    let mut tracks: Vec<Vec<SphericalCoord>> = Vec::with_capacity(cfg.n_blobs);
    let mut attempts = 0;
    while tracks.len() < cfg.n_blobs {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::invalid("could not place blobs with the requested separation"));
        }
        let t = random_track(&mut rng, cfg);
        let far = tracks.iter().all(|o| {
            o.iter().zip(&t).all(|(a, b)| sphere::great_circle_unchecked(&a.to_vec(), &b.to_vec()) >= cfg.min_separation_deg)
        });
        if far {
            tracks.push(t);
        }
    }
    let source = band_noise(&mut rng, cfg);
    let clip = encode_moving(&source, &tracks[cfg.sounding_index], cfg)?;
    let centers = grid.center_vectors();
    let shares = cfg.shares();
    let mut frames = Vec::with_capacity(cfg.n_frames());
    let mut gt = Vec::with_capacity(cfg.n_frames());
    for f in 0..cfg.n_frames() {
        let blobs: Vec<UnitVector3> = tracks.iter().map(|t| t[f].to_vec()).collect();
        frames.push(render_frame(grid, &centers, &blobs, cfg));
        let mut values = vec![0.0; grid.len()];
        for (t, share) in tracks.iter().zip(&shares) {
            let k = smooth_points(&[(t[f], 1.0)], grid, cfg.gt_sigma_deg)?;
            let s = k.sum();
            for (v, x) in values.iter_mut().zip(k.values()) {
                *v += share * x / s;
            }
        }
        gt.push(SaliencyMap::new(grid, values)?);
    }
    Ok(SynthSample { config: cfg.clone(), frames, clip, source, gt, tracks })
}

/// Draws `n` fixations from a ground-truth map (inverse CDF over pixels).
pub fn sample_fixations(gt: &SaliencyMap, n: usize, frame_index: usize, seed: u64) -> FixationMap {
    let grid = gt.grid();
    let mut fm = FixationMap::zeros(grid, frame_index);
    let total = gt.sum();
    if total <= 0.0 {
        return fm;
    }
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for v in gt.values() {
        acc += v / total;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let u: f64 = rng.random_range(0.0..1.0);
        let i = cdf.partition_point(|c| *c <= u).min(grid.len() - 1);
        fm.add_at(i / grid.width(), i % grid.width(), 1);
    }
    fm
}
