//! Head and eye traces to fixations, fixation maps and spherical saliency maps.
//!
//! Head-local frame: `x` forward, `y` left, `z` up. A head pose of
//! `(pitch, yaw, roll) = (0, 0, 0)` faces the video front (longitude 180).
//! Poses compose as yaw about world-up, pitch about the yawed lateral axis,
//! then roll about the resulting forward axis; positive yaw turns left and
//! positive pitch looks up.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{FixationMap, SaliencyMap};
use crate::sphere::{self, ErpGrid, SphericalCoord, UnitVector3, FRONT_LON};

/// Default Gaussian width in great-circle degrees.
pub const DEFAULT_SIGMA_DEG: f64 = 3.34;

/// One eye-tracker sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub gaze_dir: UnitVector3,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl GazeSample {
    pub fn new(t: f64, gaze_dir: UnitVector3, pitch: f64, yaw: f64, roll: f64) -> Self {
        Self { t, gaze_dir, pitch, yaw, roll }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub center: SphericalCoord,
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
}

/// I-VT parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationParams {
    /// Angular velocity threshold in deg/s.
    pub velocity_threshold: f64,
    /// Minimum fixation duration in seconds.
    pub min_duration: f64,
}

impl Default for FixationParams {
    fn default() -> Self {
        Self { velocity_threshold: 75.0, min_duration: 0.100 }
    }
}

/// Result of fixation extraction. `too_short` is set when the trace had
/// fewer than two samples and nothing could be computed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixationExtraction {
    pub fixations: Vec<Fixation>,
    pub too_short: bool,
}

type Mat3 = [[f64; 3]; 3];

fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

/// Head-local direction rotated into the world frame.
pub fn world_vector(sample: &GazeSample) -> Result<UnitVector3> {
    let d = sample.gaze_dir;
    UnitVector3::new(d.x, d.y, d.z)?;
    let v = apply(&rot_x(sample.roll), d.as_array());
    let v = apply(&rot_y(-sample.pitch), v);
    let v = apply(&rot_z(FRONT_LON + sample.yaw), v);
    UnitVector3::normalize(v[0], v[1], v[2])
}

/// World latitude/longitude of the gaze direction.
pub fn to_world(sample: &GazeSample) -> Result<SphericalCoord> {
    sphere::vec_to_latlon(world_vector(sample)?)
}

/// Velocity-threshold fixation identification followed by temporal
/// clustering of consecutive sub-threshold samples.
pub fn extract_fixations(trace: &[GazeSample], params: &FixationParams) -> Result<FixationExtraction> {
    if trace.len() < 2 {
        return Ok(FixationExtraction { fixations: Vec::new(), too_short: true });
    }
    for w in trace.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at t = {}",
                w[1].t
            )));
        }
    }
    if trace[0].t < 0.0 || !trace[0].t.is_finite() {
        return Err(Error::invalid("negative or non-finite timestamp"));
    }
    let dirs = trace.iter().map(world_vector).collect::<Result<Vec<_>>>()?;
    let velocity = angular_velocity(trace, &dirs);

    let mut fixations = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        if velocity[i] >= params.velocity_threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < trace.len() && velocity[i] < params.velocity_threshold {
            i += 1;
        }
        let end = i - 1;
        let duration = trace[end].t - trace[start].t;
        if end > start && duration >= params.min_duration {
            let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
            for d in &dirs[start..=end] {
                sx += d.x;
                sy += d.y;
                sz += d.z;
            }
            let center = sphere::vec_to_latlon(UnitVector3::normalize(sx, sy, sz)?)?;
            fixations.push(Fixation {
                center,
                t_start: trace[start].t,
                t_end: trace[end].t,
                n_samples: end - start + 1,
            });
        }
    }
    Ok(FixationExtraction { fixations, too_short: false })
}

/// Per-sample angular speed in deg/s; central differences inside the trace,
/// one-sided at the ends.
fn angular_velocity(trace: &[GazeSample], dirs: &[UnitVector3]) -> Vec<f64> {
    let n = trace.len();
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(1);
            let b = (i + 1).min(n - 1);
            sphere::great_circle_unchecked(&dirs[a], &dirs[b]) / (trace[b].t - trace[a].t)
        })
        .collect()
}

/// Counts every fixation whose interval contains the frame's timestamp.
pub fn fixation_map(fixations: &[Fixation], frame_index: usize, fps: f64, grid: ErpGrid) -> Result<FixationMap> {
    if !(fps > 0.0) {
        return Err(Error::invalid(format!("fps must be positive, got {fps}")));
    }
    let t = frame_index as f64 / fps;
    let mut map = FixationMap::zeros(grid, frame_index);
    for f in fixations.iter().filter(|f| f.t_start <= t && t <= f.t_end) {
        map.add_coord(f.center);
    }
    Ok(map)
}

/// Spherical Gaussian smoothing of a fixation map.
///
/// Each fixated pixel contributes `count · exp(−Δ²/(2σ²))` where `Δ` is the
/// great-circle distance in degrees from its center; contributions beyond 3σ
/// are dropped. The result is not normalized.
pub fn smooth(fm: &FixationMap, sigma_deg: f64) -> Result<SaliencyMap> {
    let grid = fm.grid();
    let points: Vec<(SphericalCoord, f64)> = fm
        .nonzero()
        .map(|(r, c, n)| (grid.center_of(r, c), n as f64))
        .collect();
    smooth_points(&points, grid, sigma_deg)
}

/// Same kernel as [`smooth`] evaluated at arbitrary weighted centers.
pub fn smooth_points(points: &[(SphericalCoord, f64)], grid: ErpGrid, sigma_deg: f64) -> Result<SaliencyMap> {
    if !(sigma_deg > 0.0) || !sigma_deg.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma_deg}")));
    }
    let centers = grid.center_vectors();
    let mut values = vec![0.0; grid.len()];
    let cutoff = 3.0 * sigma_deg;
    let inv = 1.0 / (2.0 * sigma_deg * sigma_deg);
    for &(c, weight) in points {
        let v = c.to_vec();
        // only rows within the cutoff band can be reached
        let lat_hi = c.lat() + cutoff;
        let lat_lo = c.lat() - cutoff;
        for row in 0..grid.height() {
            let lat = grid.row_lat(row);
            if lat > lat_hi || lat < lat_lo {
                continue;
            }
            for col in 0..grid.width() {
                let i = grid.index(row, col);
                let d = sphere::great_circle_unchecked(&centers[i], &v);
                if d <= cutoff {
                    values[i] += weight * (-d * d * inv).exp();
                }
            }
        }
    }
    SaliencyMap::new(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Lat,
    Lon,
}

/// Equal-angle histogram with `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn fixation_distribution(fixations: &[Fixation], axis: Axis, n_bins: usize) -> Result<Histogram> {
    let centers: Vec<SphericalCoord> = fixations.iter().map(|f| f.center).collect();
    coord_distribution(&centers, axis, n_bins)
}

pub fn coord_distribution(coords: &[SphericalCoord], axis: Axis, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let (lo, hi) = match axis {
        Axis::Lat => (-90.0, 90.0),
        Axis::Lon => (0.0, 360.0),
    };
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; n_bins];
    for c in coords {
        let v = match axis {
            Axis::Lat => c.lat(),
            Axis::Lon => c.lon(),
        };
        let b = (((v - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Reads a `t,gx,gy,gz,pitch,yaw,roll` CSV trace.
pub fn read_trace_csv(path: &Path) -> Result<Vec<GazeSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let expected = ["t", "gx", "gy", "gz", "pitch", "yaw", "roll"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::format(format!(
            "{}: expected header `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut vals = [0.0f64; 7];
        for (slot, field) in vals.iter_mut().zip(rec.iter()) {
            *slot = field.parse().map_err(|_| {
                Error::format(format!("{}: bad number `{field}` on row {}", path.display(), line + 2))
            })?;
        }
        let dir = UnitVector3::new(vals[1], vals[2], vals[3])?;
        out.push(GazeSample::new(vals[0], dir, vals[4], vals[5], vals[6]));
    }
    Ok(out)
}

pub fn write_trace_csv(path: &Path, trace: &[GazeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["t", "gx", "gy", "gz", "pitch", "yaw", "roll"]).map_err(csv_err)?;
    for s in trace {
        let d = s.gaze_dir;
        w.write_record(
            [s.t, d.x, d.y, d.z, s.pitch, s.yaw, s.roll].iter().map(|v| format!("{v}")),
        )
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::format(e.to_string())
}
