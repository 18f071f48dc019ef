//! First-order ambisonics: B-format I/O, point-source encoding, per-channel
//! log-Mel spectrograms, audio energy maps and clip attributes (SEF, ZCR).
//!
//! Channel semantics follow FuMa: `W` is omnidirectional pressure scaled by
//! `1/√2`; `X`, `Y`, `Z` point front, left and up relative to the video
//! front. Azimuth `θ` is measured from the front (longitude 180), positive
//! to the left; elevation `φ` equals latitude.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::SaliencyMap;
use crate::sphere::{ErpGrid, SphericalCoord, FRONT_LON};

pub const DEFAULT_SAMPLE_RATE: f64 = 48_000.0;
/// Floor added before taking the log of Mel energies.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BFormatClip {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub sample_rate: f64,
}

/// Channel layout of a 4-channel file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// File order W, X, Y, Z with FuMa gains.
    #[default]
    Fuma,
    /// File order W, Y, Z, X (ACN) with SN3D gains.
    Ambix,
}

impl std::str::FromStr for Ordering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fuma" => Ok(Ordering::Fuma),
            "ambix" => Ok(Ordering::Ambix),
            _ => Err(Error::invalid(format!("unknown channel ordering `{s}`"))),
        }
    }
}

impl BFormatClip {
    pub fn new(w: Vec<f64>, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, sample_rate: f64) -> Result<Self> {
        let n = w.len();
        if x.len() != n || y.len() != n || z.len() != n {
            return Err(Error::invalid("B-format channels differ in length"));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self { w, x, y, z, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channels(&self) -> [&[f64]; 4] {
        [&self.w, &self.x, &self.y, &self.z]
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<BFormatClip> {
        if start + len > self.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {}) beyond clip of {} samples",
                start + len,
                self.len()
            )));
        }
        let cut = |c: &[f64]| c[start..start + len].to_vec();
        Ok(BFormatClip {
            w: cut(&self.w),
            x: cut(&self.x),
            y: cut(&self.y),
            z: cut(&self.z),
            sample_rate: self.sample_rate,
        })
    }

    pub fn scaled(&self, gain: f64) -> BFormatClip {
        let s = |c: &[f64]| c.iter().map(|v| v * gain).collect();
        BFormatClip { w: s(&self.w), x: s(&self.x), y: s(&self.y), z: s(&self.z), sample_rate: self.sample_rate }
    }
}

/// Reads a 4-channel PCM16 or float32 WAV file.
pub fn load_bformat(path: &Path, ordering: Ordering) -> Result<BFormatClip> {
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 4 {
        return Err(Error::format(format!("{}: expected 4 channels, found {}", path.display(), spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::format(format!("unsupported WAV encoding {fmt:?} {bits}-bit")));
        }
    };
    let mut ch: [Vec<f64>; 4] = Default::default();
    for frame in interleaved.chunks_exact(4) {
        for (c, v) in ch.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    let [a, b, c, d] = ch;
    let sr = spec.sample_rate as f64;
    match ordering {
        Ordering::Fuma => BFormatClip::new(a, b, c, d, sr),
        Ordering::Ambix => {
            let w = a.into_iter().map(|v| v / SQRT_2).collect();
            BFormatClip::new(w, d, b, c, sr)
        }
    }
}

/// Writes a float32 WAV in FuMa order.
pub fn write_bformat(path: &Path, clip: &BFormatClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 4,
        sample_rate: clip.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for i in 0..clip.len() {
        for c in clip.channels() {
            w.write_sample(c[i] as f32).map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)?;
    Ok(())
}

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::format(other.to_string()),
    }
}

/// `(θ, φ)` in radians for a world coordinate.
pub fn azimuth_elevation(dir: SphericalCoord) -> (f64, f64) {
    ((dir.lon() - FRONT_LON).to_radians(), dir.lat().to_radians())
}

/// `W = s/√2, X = s cosθ cosφ, Y = s sinθ cosφ, Z = s sinφ`.
pub fn encode_point_source(signal: &[f64], direction: SphericalCoord, sample_rate: f64) -> Result<BFormatClip> {
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite samples"));
    }
    let [gw, gx, gy, gz] = encoding_gains(direction);
    let scale = |g: f64| signal.iter().map(|s| s * g).collect();
    BFormatClip::new(scale(gw), scale(gx), scale(gy), scale(gz), sample_rate)
}

pub fn encoding_gains(direction: SphericalCoord) -> [f64; 4] {
    let (theta, phi) = azimuth_elevation(direction);
    [1.0 / SQRT_2, theta.cos() * phi.cos(), theta.sin() * phi.cos(), phi.sin()]
}

/// Audio energy map from first-order virtual cardioids.
///
/// For every pixel direction the decoded signal is
/// `½(√2·W + X cosθ cosφ + Y sinθ cosφ + Z sinφ)`; its time-mean power is
/// normalized so the map peaks at 1. A silent clip yields all zeros.
pub fn aem(clip: &BFormatClip, grid: ErpGrid) -> Result<SaliencyMap> {
    if clip.is_empty() {
        return Err(Error::invalid("empty clip"));
    }
    // second moments of (√2 W, X, Y, Z)
    let chans = [
        clip.w.iter().map(|v| v * SQRT_2).collect::<Vec<_>>(),
        clip.x.clone(),
        clip.y.clone(),
        clip.z.clone(),
    ];
    let n = clip.len() as f64;
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let v = chans[i].iter().zip(&chans[j]).map(|(a, b)| a * b).sum::<f64>() / n;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    let mut values = Vec::with_capacity(grid.len());
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let (theta, phi) = azimuth_elevation(grid.center_of(row, col));
            let d = [1.0, theta.cos() * phi.cos(), theta.sin() * phi.cos(), phi.sin()];
            let mut e = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    e += d[i] * m[i][j] * d[j];
                }
            }
            values.push((0.25 * e).max(0.0));
        }
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    SaliencyMap::new(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub window: Window,
}

impl Default for MelParams {
    fn default() -> Self {
        Self { n_fft: 1024, hop: 480, n_mels: 64, window: Window::Hann }
    }
}

impl MelParams {
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.n_fft {
            0
        } else {
            1 + (n_samples - self.n_fft) / self.hop
        }
    }
}

/// Log-Mel energies stored mel-major: `values[mel * n_frames + frame]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f64>,
    pub params: MelParams,
    pub sample_rate: f64,
}

impl MelSpectrogram {
    pub fn at(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK filterbank from 0 Hz to Nyquist, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / n_fft as f64;
                    let up = (f - lo) / (mid - lo);
                    let down = (hi - f) / (hi - mid);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Frame-wise one-sided power spectra, `n_frames × (n_fft/2 + 1)`.
pub fn power_stft(signal: &[f64], params: &MelParams) -> Result<Vec<Vec<f64>>> {
    if params.n_fft == 0 || params.hop == 0 {
        return Err(Error::invalid("n_fft and hop must be positive"));
    }
    if signal.len() < params.n_fft {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than n_fft = {}",
            signal.len(),
            params.n_fft
        )));
    }
    let n = params.n_fft;
    let window: Vec<f64> = match params.window {
        Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        Window::Rectangular => vec![1.0; n],
    };
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut out = Vec::with_capacity(params.n_frames(signal.len()));
    for f in 0..params.n_frames(signal.len()) {
        let start = f * params.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(signal[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(out)
}

/// `log(mel_filterbank · |STFT|² + 1e-10)`.
pub fn mel_spectrogram(channel: &[f64], sample_rate: f64, params: &MelParams) -> Result<MelSpectrogram> {
    if params.n_mels == 0 {
        return Err(Error::invalid("n_mels must be positive"));
    }
    let spec = power_stft(channel, params)?;
    let bank = mel_filterbank(params.n_mels, params.n_fft, sample_rate);
    let n_frames = spec.len();
    let mut values = vec![0.0; params.n_mels * n_frames];
    for (m, filt) in bank.iter().enumerate() {
        for (f, frame) in spec.iter().enumerate() {
            let e: f64 = filt.iter().zip(frame).map(|(a, b)| a * b).sum();
            values[m * n_frames + f] = (e + LOG_FLOOR).ln();
        }
    }
    Ok(MelSpectrogram { n_mels: params.n_mels, n_frames, values, params: *params, sample_rate })
}

/// Coefficient of variation of short-term frame energies.
pub fn sef(mono: &[f64], sample_rate: f64, frame_s: f64, hop_s: f64) -> Result<f64> {
    if mono.is_empty() {
        return Err(Error::invalid("empty signal"));
    }
    let frame = (frame_s * sample_rate).round() as usize;
    let hop = (hop_s * sample_rate).round() as usize;
    if frame == 0 || hop == 0 {
        return Err(Error::invalid("frame and hop must cover at least one sample"));
    }
    if mono.len() < frame {
        return Err(Error::invalid(format!("signal shorter than one {frame}-sample frame")));
    }
    let energies: Vec<f64> = (0..=(mono.len() - frame) / hop)
        .map(|k| mono[k * hop..k * hop + frame].iter().map(|v| v * v).sum())
        .collect();
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let var = energies.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// Sign changes per sample; zero counts as non-negative.
pub fn zcr(mono: &[f64]) -> Result<f64> {
    if mono.is_empty() {
        return Err(Error::invalid("empty signal"));
    }
    let changes = mono.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
    Ok(changes as f64 / mono.len() as f64)
}

/// Clip-level audio attributes computed on the W channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioAttributes {
    pub sef: f64,
    pub zcr: f64,
    pub duration: f64,
    pub sample_rate: f64,
}

pub fn clip_attributes(clip: &BFormatClip) -> Result<AudioAttributes> {
    Ok(AudioAttributes {
        sef: sef(&clip.w, clip.sample_rate, 0.050, 0.025)?,
        zcr: zcr(&clip.w)?,
        duration: clip.duration(),
        sample_rate: clip.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(lat: f64, lon: f64) -> SphericalCoord {
        SphericalCoord::new(lat, lon).unwrap()
    }

    fn tone(freq: f64, sr: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / sr).sin()).collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn encoding_axes() {
        let s = [0.5, -1.0, 2.0];
        let front = encode_point_source(&s, c(0.0, 180.0), 48_000.0).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(front.x[i], s[i], epsilon = 1e-12);
            assert_abs_diff_eq!(front.y[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(front.z[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(front.w[i], s[i] / SQRT_2, epsilon = 1e-12);
        }
        let up = encode_point_source(&s, c(90.0, 0.0), 48_000.0).unwrap();
        assert_abs_diff_eq!(up.z[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(up.x[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(up.y[1], 0.0, epsilon = 1e-12);
        let left = encode_point_source(&s, c(0.0, 270.0), 48_000.0).unwrap();
        assert_abs_diff_eq!(left.y[2], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(left.x[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(left.z[2], 0.0, epsilon = 1e-12);
        assert!(encode_point_source(&[f64::NAN], c(0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn aem_front_source() {
        let grid = ErpGrid::new(64, 32).unwrap();
        let clip = encode_point_source(&noise(4000, 1), c(0.0, 180.0), 16_000.0).unwrap();
        let m = aem(&clip, grid).unwrap();
        let (r, col) = m.argmax();
        let center = grid.center_of(r, col);
        assert!(center.lat().abs() < 3.0 && (center.lon() - 180.0).abs() < 3.0);
        assert_abs_diff_eq!(m.max(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn aem_w_only_and_silence() {
        let grid = ErpGrid::new(16, 8).unwrap();
        let s = noise(500, 2);
        let zeros = vec![0.0; 500];
        let clip = BFormatClip::new(s, zeros.clone(), zeros.clone(), zeros.clone(), 16_000.0).unwrap();
        assert!(aem(&clip, grid).unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let silent = BFormatClip::new(zeros.clone(), zeros.clone(), zeros.clone(), zeros, 16_000.0).unwrap();
        assert!(aem(&silent, grid).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn aem_two_symmetric_sources() {
        let grid = ErpGrid::new(64, 32).unwrap();
        let sr = 16_000.0;
        // whole numbers of cycles keep the two sources exactly uncorrelated
        let a = encode_point_source(&tone(500.0, sr, 16_000), c(0.0, 90.0), sr).unwrap();
        let b = encode_point_source(&tone(700.0, sr, 16_000), c(0.0, 270.0), sr).unwrap();
        let add = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u + v).collect::<Vec<_>>();
        let mix = BFormatClip::new(add(&a.w, &b.w), add(&a.x, &b.x), add(&a.y, &b.y), add(&a.z, &b.z), sr).unwrap();
        let m = aem(&mix, grid).unwrap();

        // brute-force decode of every sample at every pixel
        let mut brute = Vec::with_capacity(grid.len());
        for r in 0..grid.height() {
            for col in 0..grid.width() {
                let g = encoding_gains(grid.center_of(r, col));
                let e: f64 = (0..mix.len())
                    .map(|i| {
                        let s = 0.5 * (SQRT_2 * mix.w[i] + g[1] * mix.x[i] + g[2] * mix.y[i] + g[3] * mix.z[i]);
                        s * s
                    })
                    .sum::<f64>();
                brute.push(e / mix.len() as f64);
            }
        }
        let top = brute.iter().copied().fold(0.0, f64::max);
        for (v, b) in m.values().iter().zip(&brute) {
            assert_abs_diff_eq!(*v, b / top, epsilon = 1e-9);
        }
        // mirror about the front meridian maps column c to 63 - c
        for r in 0..grid.height() {
            for col in 0..grid.width() {
                assert_abs_diff_eq!(m.at(r, col), m.at(r, 63 - col), epsilon = 1e-6);
            }
        }
        let row = 15;
        let peaks: Vec<usize> = (0..64)
            .filter(|&col| {
                let v = m.at(row, col);
                v > m.at(row, (col + 63) % 64) && v >= m.at(row, (col + 1) % 64) && v >= m.at(row - 1, col) && v >= m.at(row + 1, col)
            })
            .collect();
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        let lons: Vec<f64> = peaks.iter().map(|&col| grid.col_lon(col)).collect();
        assert!((lons[0] - 90.0).abs() < 6.0 && (lons[1] - 270.0).abs() < 6.0, "{lons:?}");
    }

    #[test]
    fn aem_gain_invariant() {
        let grid = ErpGrid::new(32, 16).unwrap();
        let clip = encode_point_source(&noise(3000, 5), c(20.0, 40.0), 16_000.0).unwrap();
        let a = aem(&clip, grid).unwrap();
        let b = aem(&clip.scaled(7.5), grid).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn mel_frame_count_and_silence() {
        let p = MelParams::default();
        assert_eq!(p.n_frames(96_000), 198);
        let m = mel_spectrogram(&vec![0.0; 96_000], 48_000.0, &p).unwrap();
        assert_eq!((m.n_mels, m.n_frames), (64, 198));
        assert!(m.values.iter().all(|v| *v == LOG_FLOOR.ln()));
        assert!(mel_spectrogram(&[0.0; 100], 48_000.0, &p).is_err());
    }

    #[test]
    fn mel_tone_peaks_at_bracketing_band() {
        let sr = 48_000.0;
        let p = MelParams::default();
        let m = mel_spectrogram(&tone(1000.0, sr, 48_000), sr, &p).unwrap();
        let mut best = 0;
        for b in 0..m.n_mels {
            if m.at(b, 10) > m.at(best, 10) {
                best = b;
            }
        }
        // oracle: band centers evenly spaced in HTK mel between 0 and Nyquist
        let top = 2595.0 * (1.0f64 + 24_000.0 / 700.0).log10();
        let centers: Vec<f64> = (1..=64).map(|i| 700.0 * (10f64.powf(top * i as f64 / 65.0 / 2595.0) - 1.0)).collect();
        let nearest = (0..64)
            .min_by(|&a, &b| (centers[a] - 1000.0).abs().total_cmp(&(centers[b] - 1000.0).abs()))
            .unwrap();
        assert_eq!(best, nearest);
    }

    #[test]
    fn mel_energy_covers_spectrum() {
        let sr = 48_000.0;
        let p = MelParams::default();
        let x = noise(48_000, 9);
        let spec = power_stft(&x, &p).unwrap();
        let parseval: f64 = spec.iter().flatten().sum();
        let m = mel_spectrogram(&x, sr, &p).unwrap();
        let mel_total: f64 = m.values.iter().map(|v| v.exp() - LOG_FLOOR).sum();
        assert!((mel_total / parseval - 1.0).abs() < 0.05, "ratio {}", mel_total / parseval);
    }

    #[test]
    fn sef_and_zcr() {
        let sr = 48_000.0;
        let sine = tone(1000.0, sr, 48_000);
        assert!(sef(&sine, sr, 0.05, 0.025).unwrap() <= 1e-3);
        let silence = vec![0.0; 4800];
        assert_eq!(sef(&silence, sr, 0.05, 0.025).unwrap(), 0.0);
        assert_eq!(zcr(&silence).unwrap(), 0.0);
        let z = zcr(&sine).unwrap();
        assert!((z - 2000.0 / 48_000.0).abs() <= 1.0 / 48_000.0 + 1e-12, "zcr {z}");
        assert!(sef(&[], sr, 0.05, 0.025).is_err());
        assert!(zcr(&[]).is_err());
        let bursts: Vec<f64> = (0..48_000).map(|i| if (i / 4800) % 2 == 0 { 1.0 } else { 0.1 }).collect();
        assert!(sef(&bursts, sr, 0.05, 0.025).unwrap() > 0.5);
    }

    #[test]
    fn wav_orderings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let spec = hound::WavSpec { channels: 4, sample_rate: 16_000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..10 {
            for ch in 0..4 {
                w.write_sample((ch as f32 + 1.0) * 0.1 + i as f32 * 0.001).unwrap();
            }
        }
        w.finalize().unwrap();
        let fuma = load_bformat(&path, Ordering::Fuma).unwrap();
        assert_abs_diff_eq!(fuma.x[0], 0.2, epsilon = 1e-6);
        assert_abs_diff_eq!(fuma.z[3], 0.403, epsilon = 1e-6);
        let ambix = load_bformat(&path, Ordering::Ambix).unwrap();
        assert_abs_diff_eq!(ambix.x[0], 0.4, epsilon = 1e-6);
        assert_abs_diff_eq!(ambix.y[0], 0.2, epsilon = 1e-6);
        assert_abs_diff_eq!(ambix.z[0], 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(ambix.w[0], 0.1 / SQRT_2, epsilon = 1e-6);
        assert_eq!(ambix.sample_rate, 16_000.0);

        let stereo = dir.path().join("s.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(1i16).unwrap();
        w.write_sample(1i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_bformat(&stereo, Ordering::Fuma), Err(Error::Format(_))));

        let pcm = dir.path().join("p.wav");
        let spec = hound::WavSpec { channels: 4, sample_rate: 48_000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&pcm, spec).unwrap();
        for v in [16384i16, -16384, 0, 8192] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_bformat(&pcm, Ordering::Fuma).unwrap();
        assert_eq!((clip.w[0], clip.x[0], clip.y[0], clip.z[0]), (0.5, -0.5, 0.0, 0.25));

        let round = dir.path().join("r.wav");
        write_bformat(&round, &fuma).unwrap();
        let back = load_bformat(&round, Ordering::Fuma).unwrap();
        assert_eq!(back.len(), 10);
        assert_abs_diff_eq!(back.y[9], fuma.y[9], epsilon = 1e-7);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(100))]
        #[test]
        fn aem_round_trip(lat in -89.0f64..89.0, lon in 0.0f64..360.0, seed in 0u64..1000) {
            let grid = ErpGrid::new(64, 32).unwrap();
            let d = c(lat, lon);
            let clip = encode_point_source(&noise(2000, seed), d, 16_000.0).unwrap();
            let (r, col) = aem(&clip, grid).unwrap().argmax();
            let (tr, tc) = grid.pixel_of(d);
            let dc = (col as i64 - tc as i64).rem_euclid(64).min((tc as i64 - col as i64).rem_euclid(64));
            // near the poles all longitudes are within a pixel of each other
            let near_pole = r == 0 || r == 31;
            proptest::prop_assert!((r as i64 - tr as i64).abs() <= 1 && (dc <= 1 || near_pole),
                "target ({tr},{tc}) argmax ({r},{col})");
        }
    }
}
