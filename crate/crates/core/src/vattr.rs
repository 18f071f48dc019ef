//! Per-frame visual attributes: brightness, contrast and spatial
//! perceptual information (SI, Sobel magnitude std over the frame interior).

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rec.601 luma weights for R, G, B.
pub const REC601: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLuma {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl FrameLuma {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!("{} luma values for a {width}x{height} frame", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::invalid(format!("luma value {v} outside [0, 255]")));
        }
        Ok(Self { width, height, values })
    }

    /// Interleaved 8-bit RGB to luma.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::invalid(format!("{} RGB bytes for a {width}x{height} frame", rgb.len())));
        }
        let values = rgb
            .chunks_exact(3)
            .map(|p| REC601[0] * p[0] as f64 + REC601[1] * p[1] as f64 + REC601[2] * p[2] as f64)
            .collect();
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameAttributes {
    pub brightness: f64,
    pub contrast: f64,
}

/// Mean and population std of luma.
pub fn frame_attributes(frame: &FrameLuma) -> Result<FrameAttributes> {
    if frame.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    let (mean, std) = mean_std(&frame.values);
    Ok(FrameAttributes { brightness: mean, contrast: std })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Std of the Sobel gradient magnitude over interior pixels; 0 for frames
/// without an interior.
pub fn frame_si(frame: &FrameLuma) -> f64 {
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut mags = Vec::with_capacity((w - 2) * (h - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let p = |dr: usize, dc: usize| frame.at(r + dr - 1, c + dc - 1);
            let gx = (p(0, 2) + 2.0 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2.0 * p(1, 0) + p(2, 0));
            let gy = (p(2, 0) + 2.0 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2.0 * p(0, 1) + p(0, 2));
            mags.push(gx.hypot(gy));
        }
    }
    mean_std(&mags).1
}

/// Maximum per-frame SI over a sequence.
pub fn si(frames: &[FrameLuma]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames"));
    }
    Ok(frames.iter().map(frame_si).fold(0.0, f64::max))
}

/// Loads a PNG (gray/RGB, 8-bit, optional alpha) or binary PPM/PGM frame.
pub fn load_frame(path: &Path) -> Result<FrameLuma> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "png" => load_png(path),
        "ppm" | "pgm" | "pnm" => load_pnm(path),
        _ => Err(Error::format(format!("{}: unsupported frame format", path.display()))),
    }
}

fn load_png(path: &Path) -> Result<FrameLuma> {
    let file = std::fs::File::open(path)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let step = info.color_type.samples();
    let values = bytes
        .chunks_exact(step)
        .map(|p| match step {
            1 | 2 => p[0] as f64,
            _ => REC601[0] * p[0] as f64 + REC601[1] * p[1] as f64 + REC601[2] * p[2] as f64,
        })
        .collect();
    FrameLuma::new(w, h, values)
}

fn load_pnm(path: &Path) -> Result<FrameLuma> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let bad = |m: &str| Error::format(format!("{}: {m}", path.display()));
    let mut header = Vec::new();
    // magic, width, height, maxval, each separated by whitespace; '#' starts a comment
    while header.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("truncated header"));
        }
        let content = line.split('#').next().unwrap_or("");
        header.extend(content.split_whitespace().map(str::to_string));
    }
    let channels = match header[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(bad(&format!("unsupported magic {m}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header"));
    let (w, h, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PNM is supported"));
    }
    let mut data = vec![0u8; w * h * channels];
    r.read_exact(&mut data).map_err(|_| bad("truncated pixel data"))?;
    let scale = 255.0 / maxval as f64;
    let values = data
        .chunks_exact(channels)
        .map(|p| {
            let y = if channels == 1 {
                p[0] as f64
            } else {
                REC601[0] * p[0] as f64 + REC601[1] * p[1] as f64 + REC601[2] * p[2] as f64
            };
            (y * scale).min(255.0)
        })
        .collect();
    FrameLuma::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn brightness_contrast() {
        let f = FrameLuma::new(4, 2, vec![128.0; 8]).unwrap();
        assert_eq!(frame_attributes(&f).unwrap(), FrameAttributes { brightness: 128.0, contrast: 0.0 });
        let half = FrameLuma::new(2, 2, vec![0.0, 255.0, 0.0, 255.0]).unwrap();
        let a = frame_attributes(&half).unwrap();
        assert_abs_diff_eq!(a.brightness, 127.5);
        assert_abs_diff_eq!(a.contrast, 127.5);
        let one = FrameLuma::new(1, 1, vec![42.0]).unwrap();
        assert_eq!(frame_attributes(&one).unwrap(), FrameAttributes { brightness: 42.0, contrast: 0.0 });
        assert!(frame_attributes(&FrameLuma::new(0, 0, vec![]).unwrap()).is_err());
        assert!(FrameLuma::new(1, 1, vec![256.0]).is_err());
    }

    #[test]
    fn rec601_luma() {
        let f = FrameLuma::from_rgb8(2, 1, &[255, 0, 0, 10, 20, 30]).unwrap();
        assert_abs_diff_eq!(f.values()[0], 0.299 * 255.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.values()[1], 2.99 + 11.74 + 3.42, epsilon = 1e-12);
    }

    #[test]
    fn si_max_semantics() {
        let flat = FrameLuma::new(5, 5, vec![90.0; 25]).unwrap();
        assert_eq!(si(std::slice::from_ref(&flat)).unwrap(), 0.0);
        let tex = FrameLuma::new(5, 5, (0..25).map(|i| ((i * 37) % 256) as f64).collect()).unwrap();
        assert_eq!(si(&[flat, tex.clone()]).unwrap(), frame_si(&tex));
        assert!(si(&[]).is_err());
    }

    fn luma_frame() -> impl Strategy<Value = FrameLuma> {
        (3usize..8, 3usize..8).prop_flat_map(|(w, h)| {
            prop::collection::vec(0.0f64..200.0, w * h).prop_map(move |v| FrameLuma::new(w, h, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn attributes_permutation_invariant(f in luma_frame(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut v = f.values().to_vec();
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let g = FrameLuma::new(f.width(), f.height(), v).unwrap();
            let (a, b) = (frame_attributes(&f).unwrap(), frame_attributes(&g).unwrap());
            prop_assert!((a.brightness - b.brightness).abs() < 1e-9);
            prop_assert!((a.contrast - b.contrast).abs() < 1e-9);
        }

        #[test]
        fn si_ignores_dc(f in luma_frame(), dc in 0.0f64..55.0) {
            let g = FrameLuma::new(f.width(), f.height(), f.values().iter().map(|v| v + dc).collect()).unwrap();
            prop_assert!((frame_si(&f) - frame_si(&g)).abs() < 1e-9);
        }
    }

    #[test]
    fn reads_pnm_and_png() {
        let dir = tempfile::tempdir().unwrap();
        let ppm = dir.path().join("f.ppm");
        let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 0, 255]);
        std::fs::write(&ppm, bytes).unwrap();
        let f = load_frame(&ppm).unwrap();
        assert_abs_diff_eq!(f.values()[0], 0.299 * 255.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.values()[1], 0.114 * 255.0, epsilon = 1e-9);

        let pngp = dir.path().join("g.png");
        let file = std::fs::File::create(&pngp).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 3, 1);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(&[0, 100, 255]).unwrap();
        let g = load_frame(&pngp).unwrap();
        assert_eq!(g.values(), &[0.0, 100.0, 255.0]);
        assert!(matches!(load_frame(&dir.path().join("x.bmp")), Err(Error::Format(_))));
    }
}
