//! File formats: PFM float maps, PNG heatmaps, fixation CSVs and canonical
//! JSON reports.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaze::csv_err;
use crate::maps::{FixationMap, SaliencyMap};
use crate::sphere::{ErpGrid, SphericalCoord};

/// Parses `WIDTHxHEIGHT`.
pub fn parse_grid(s: &str) -> Result<ErpGrid> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| Error::invalid(format!("grid `{s}` is not WIDTHxHEIGHT")))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| Error::invalid(format!("grid `{s}` is not WIDTHxHEIGHT")));
    ErpGrid::new(p(w)?, p(h)?)
}

/// Writes a single-channel little-endian PFM (rows stored bottom-up, as the
/// format requires). Values are narrowed to `f32`.
pub fn write_pfm(path: &Path, map: &SaliencyMap) -> Result<()> {
    let g = map.grid();
    let mut out = format!("Pf\n{} {}\n-1.0\n", g.width(), g.height()).into_bytes();
    for row in (0..g.height()).rev() {
        for col in 0..g.width() {
            out.extend_from_slice(&(map.at(row, col) as f32).to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<SaliencyMap> {
    let bad = |m: &str| Error::format(format!("{}: {m}", path.display()));
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let mut header = Vec::new();
    while header.len() < 4 {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("truncated header"));
        }
        header.extend(line.split_whitespace().map(str::to_string));
    }
    if header[0] != "Pf" {
        return Err(bad("only single-channel `Pf` maps are supported"));
    }
    let w: usize = header[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = header[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = header[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("bad scale"));
    }
    let grid = ErpGrid::new(w, h)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != w * h * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", w * h * 4, data.len())));
    }
    let mut values = vec![0.0; w * h];
    for (i, c) in data.chunks_exact(4).enumerate() {
        let b: [u8; 4] = c.try_into().unwrap();
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (h - 1 - i / w, i % w);
        values[row * w + col] = v as f64;
    }
    SaliencyMap::new(grid, values).map_err(|e| bad(&e.to_string()))
}

/// Fixed 5-stop palette from dark purple through teal to yellow.
const PALETTE: [[f64; 3]; 5] =
    [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];

fn palette(t: f64) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (x.floor() as usize).min(PALETTE.len() - 2);
    let f = x - i as f64;
    [0, 1, 2].map(|k| (PALETTE[i][k] + f * (PALETTE[i + 1][k] - PALETTE[i][k])).round() as u8)
}

/// 8-bit RGB visualization, scaled so the map maximum maps to the top color.
pub fn write_heatmap_png(path: &Path, map: &SaliencyMap) -> Result<()> {
    let g = map.grid();
    let max = map.max();
    let mut rgb = Vec::with_capacity(g.len() * 3);
    for v in map.values() {
        rgb.extend_from_slice(&palette(if max > 0.0 { v / max } else { 0.0 }));
    }
    write_png_rgb(path, g.width(), g.height(), &rgb)
}

pub fn write_png_rgb(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::format(e.to_string()))?;
    w.write_image_data(rgb).map_err(|e| Error::format(e.to_string()))?;
    w.finish().map_err(|e| Error::format(e.to_string()))?;
    Ok(())
}

/// Writes `frame,lat,lon,count` rows (pixel centers, non-zero pixels only).
pub fn write_fixations_csv(path: &Path, maps: &[FixationMap]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["frame", "lat", "lon", "count"]).map_err(csv_err)?;
    for m in maps {
        let g = m.grid();
        for (r, c, n) in m.nonzero() {
            let p = g.center_of(r, c);
            w.write_record([m.frame_index.to_string(), p.lat().to_string(), p.lon().to_string(), n.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a fixation CSV onto `grid`, keyed by frame index.
pub fn read_fixations_csv(path: &Path, grid: ErpGrid) -> Result<BTreeMap<usize, FixationMap>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["frame", "lat", "lon", "count"] {
        return Err(Error::format(format!("{}: expected header `frame,lat,lon,count`", path.display())));
    }
    let mut out: BTreeMap<usize, FixationMap> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = || Error::format(format!("{}: malformed row {}", path.display(), line + 2));
        if rec.len() != 4 {
            return Err(bad());
        }
        let frame: usize = rec[0].parse().map_err(|_| bad())?;
        let lat: f64 = rec[1].parse().map_err(|_| bad())?;
        let lon: f64 = rec[2].parse().map_err(|_| bad())?;
        let count: u32 = rec[3].parse().map_err(|_| bad())?;
        let (r, c) = grid.pixel_of(SphericalCoord::new(lat, lon)?);
        out.entry(frame).or_insert_with(|| FixationMap::zeros(grid, frame)).add_at(r, c, count);
    }
    Ok(out)
}

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's map type is ordered by key unless `preserve_order` is on
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(canonical_json(value)?.as_bytes())?;
    Ok(())
}
