//! Shared test helpers: brute-force metric oracles, synthetic gaze traces
//! and the CLI golden-file suite.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use odv_saliency::gaze::{write_trace_csv, GazeSample};
use odv_saliency::model::ModelConfig;
use odv_saliency::sphere::SphericalCoord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// metric oracles, written from the textbook definitions with plain loops

/// `cos(lat)` at each pixel-center row of a `w`x`h` raster, row-major.
pub fn lat_weights(w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..h {
        let lat = 90.0 - 180.0 * (2 * r + 1) as f64 / (2 * h) as f64;
        for _ in 0..w {
            out.push(lat.to_radians().cos());
        }
    }
    out
}

fn apply_weights(v: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    match w {
        Some(w) => v.iter().zip(w).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

/// Mean of the z-scored prediction over fixations, counted with multiplicity.
pub fn oracle_nss(pred: &[f64], counts: &[u32], w: Option<&[f64]>) -> f64 {
    let p = apply_weights(pred, w);
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let sd = (p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut z = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            z.push((p[i] - mean) / sd);
        }
    }
    z.iter().sum::<f64>() / z.len() as f64
}

pub fn oracle_sim(pred: &[f64], gt: &[f64], w: Option<&[f64]>) -> f64 {
    let p = apply_weights(pred, w);
    let g = apply_weights(gt, w);
    let (sp, sg): (f64, f64) = (p.iter().sum(), g.iter().sum());
    let mut acc = 0.0;
    for i in 0..p.len() {
        acc += (p[i] / sp).min(g[i] / sg);
    }
    acc
}

pub fn oracle_cc(pred: &[f64], gt: &[f64], w: Option<&[f64]>) -> f64 {
    let p = apply_weights(pred, w);
    let g = apply_weights(gt, w);
    let n = p.len() as f64;
    let (mp, mg) = (p.iter().sum::<f64>() / n, g.iter().sum::<f64>() / n);
    let (mut num, mut dp, mut dg) = (0.0, 0.0, 0.0);
    for i in 0..p.len() {
        num += (p[i] - mp) * (g[i] - mg);
        dp += (p[i] - mp).powi(2);
        dg += (g[i] - mg).powi(2);
    }
    num / (dp * dg).sqrt()
}

/// KL divergence of the reference from the prediction, both sum-normalized.
pub fn oracle_kld(pred: &[f64], reference: &[f64], w: Option<&[f64]>, eps: f64) -> f64 {
    let p = apply_weights(pred, w);
    let g = apply_weights(reference, w);
    let (sp, sg): (f64, f64) = (p.iter().sum(), g.iter().sum());
    let mut acc = 0.0;
    for i in 0..p.len() {
        let gi = g[i] / sg;
        if gi > 0.0 {
            acc += gi * (eps + gi / (eps + p[i] / sp)).ln();
        }
    }
    acc
}

/// ROC area by exhaustive enumeration: one operating point per threshold
/// (each distinct positive value, `score >= t` counts as detected), plus
/// the (0,0) and (1,1) corners, joined by trapezoids in FPR order.
pub fn oracle_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = positives.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0), (1.0, 1.0)];
    for t in thresholds {
        let tp = positives.iter().filter(|&&v| v >= t).count() as f64 / positives.len() as f64;
        let fp = negatives.iter().filter(|&&v| v >= t).count() as f64 / negatives.len() as f64;
        points.push((fp, tp));
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    for w in points.windows(2) {
        area += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
    }
    area
}

pub fn positives(pred: &[f64], counts: &[u32]) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            out.push(pred[i]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// synthetic gaze traces

/// A `duration`-second, 100 Hz trace of fixations (200-350 ms, small
/// jitter) separated by 30 ms saccades, with a fixed random head pose.
pub fn synthetic_trace(seed: u64, duration: f64) -> Vec<GazeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pitch, yaw, roll) = (rng.random_range(-20.0..20.0), rng.random_range(-90.0..90.0), 0.0);
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < duration {
        let lat: f64 = rng.random_range(-40.0..40.0);
        let lon: f64 = rng.random_range(0.0..360.0);
        let hold = rng.random_range(0.2..0.35);
        let end = t + hold;
        while t < end && t < duration {
            let c = SphericalCoord::new(lat + rng.random_range(-0.2..0.2), lon + rng.random_range(-0.2..0.2)).unwrap();
            out.push(GazeSample::new(t, c.to_vec(), pitch, yaw, roll));
            t += 0.01;
        }
        // saccade: three samples far from any fixation
        for _ in 0..3 {
            let c = SphericalCoord::new(rng.random_range(-60.0..60.0), rng.random_range(0.0..360.0)).unwrap();
            out.push(GazeSample::new(t, c.to_vec(), pitch, yaw, roll));
            t += 0.01;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// CLI golden files

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Small model used by the CLI fixtures.
pub fn tiny_model_config() -> ModelConfig {
    let mut cfg = ModelConfig {
        width: 16,
        height: 8,
        channels: 4,
        frames: 2,
        frame_step: 1,
        stage_scales: vec![4, 4, 8, 8, 8, 8, 8],
        heads: 2,
        ..Default::default()
    };
    cfg.audio.clip_seconds = 0.1;
    cfg.audio.mel.n_fft = 256;
    cfg.audio.mel.hop = 128;
    cfg.audio.mel.n_mels = 8;
    cfg.audio.patch_mels = 4;
    cfg.audio.patch_frames = 4;
    cfg
}

fn write_fixtures(dir: &Path) {
    write_trace_csv(&dir.join("gaze.csv"), &synthetic_trace(1, 1.0)).unwrap();
    for (m, mode) in ["ambisonics", "mute"].iter().enumerate() {
        let d = dir.join("subjects").join(mode);
        std::fs::create_dir_all(&d).unwrap();
        for s in 0..4 {
            write_trace_csv(&d.join(format!("s{s}.csv")), &synthetic_trace(100 + 10 * m as u64 + s, 1.0)).unwrap();
        }
    }
    std::fs::write(dir.join("tiny.json"), serde_json::to_string_pretty(&tiny_model_config()).unwrap()).unwrap();
}

/// The command lines exercised by the golden suite, run in order.
pub fn golden_commands() -> Vec<(&'static str, Vec<&'static str>)> {
    let tiny = ["--model-config", "tiny.json", "--duration", "0.2"];
    let with_tiny = |rest: &[&'static str]| tiny.iter().chain(rest).copied().collect::<Vec<_>>();
    vec![
        ("fixations", vec!["--gaze", "gaze.csv", "--grid", "32x16", "--out", "fix.csv"]),
        ("salmap", vec!["--fix", "fix.csv", "--grid", "32x16", "--sigma", "3.34", "--png", "--out", "salmap"]),
        ("eval", vec!["--pred", "salmap/frame_00010.pfm", "--fix", "fix.csv", "--frame", "10", "--neg", "fix.csv", "--weighting", "sinusoidal", "--seed", "3", "--out", "eval.json"]),
        ("consistency", vec!["--subjects", "subjects", "--repeats", "5", "--seed", "7", "--grid", "32x16", "--out", "consistency.json"]),
        ("synth-gen", vec!["--n", "2", "--duration", "0.2", "--grid", "32x16", "--seed", "3", "--out", "synth"]),
        ("audio-features", vec!["--wav", "synth/sample_0000/audio.wav", "--aem", "aem.pfm", "--out", "audio.json"]),
        ("video-attrs", vec!["--frames", "synth/sample_0000/frame_00000.png", "synth/sample_0000/frame_00005.png", "--out", "video.json"]),
        (
            "train",
            with_tiny(&["--n-train", "4", "--n-test", "2", "--epochs", "2", "--batch-size", "2", "--wrong-audio", "--seed", "5", "--out", "train"]),
        ),
        (
            "ablate",
            with_tiny(&["--n-train", "4", "--n-test", "2", "--epochs", "1", "--batch-size", "2", "--axis", "audio_mode=mute,ambisonics", "--out", "ablate"]),
        ),
        ("bench", with_tiny(&["--n", "2", "--out", "bench.json"])),
    ]
}

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

/// Outcome of one golden command.
pub struct GoldenResult {
    pub command: &'static str,
    pub files: usize,
    pub mismatches: Vec<String>,
}

/// Runs every command with fixed seeds in a scratch directory and compares
/// each file it creates with `tests/golden`. With `update`, the golden
/// files are rewritten instead.
pub fn run_golden_suite(update: bool) -> Vec<GoldenResult> {
    let work = tempfile::tempdir().unwrap();
    let root = work.path();
    write_fixtures(root);
    let golden = golden_dir();
    let mut results = Vec::new();
    for (cmd, args) in golden_commands() {
        let before = files_under(root);
        let status = Command::new(env!("CARGO_BIN_EXE_odvsal"))
            .current_dir(root)
            .env("ODVSAL_THREADS", "1")
            .arg("--deterministic")
            .arg(cmd)
            .args(&args)
            .output()
            .unwrap();
        let mut mismatches = Vec::new();
        if !status.status.success() {
            mismatches.push(format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
        }
        let created: Vec<PathBuf> = files_under(root).difference(&before).cloned().collect();
        let expected_dir = golden.join(cmd);
        for rel in &created {
            let got = std::fs::read(root.join(rel)).unwrap();
            let want_path = expected_dir.join(rel);
            if update {
                std::fs::create_dir_all(want_path.parent().unwrap()).unwrap();
                std::fs::write(&want_path, &got).unwrap();
            } else {
                match std::fs::read(&want_path) {
                    Ok(want) if want == got => {}
                    Ok(_) => mismatches.push(format!("{} differs", rel.display())),
                    Err(_) => mismatches.push(format!("{} has no golden file", rel.display())),
                }
            }
        }
        if !update && expected_dir.is_dir() {
            let created: BTreeSet<PathBuf> = created.iter().cloned().collect();
            for rel in files_under(&expected_dir) {
                if !created.contains(&rel) {
                    mismatches.push(format!("{} was not produced", rel.display()));
                }
            }
        } else if !update {
            mismatches.push(format!("no golden directory for {cmd}"));
        }
        results.push(GoldenResult { command: cmd, files: created.len(), mismatches });
    }
    results
}
