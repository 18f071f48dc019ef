//! Spherical geometry and equirectangular (ERP) grid conventions.
//!
//! World frame: `z` points up, longitude 0 lies along `+x` and grows
//! counterclockwise seen from `+z`. The front of the video (where the
//! initial viewport is centered) sits at longitude [`FRONT_LON`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longitude of the video front, in degrees.
pub const FRONT_LON: f64 = 180.0;

/// Norm tolerance accepted when constructing a [`UnitVector3`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Latitude/longitude pair in degrees.
///
/// Latitude is in `[-90, 90]`, longitude in `[0, 360)`. At the poles the
/// longitude is canonicalized to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    lat: f64,
    lon: f64,
}

impl SphericalCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::invalid("non-finite coordinate"));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        let lon = if lat.abs() == 90.0 { 0.0 } else { wrap_lon(lon) };
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn to_vec(&self) -> UnitVector3 {
        latlon_to_vec(*self)
    }
}

/// Wraps any finite longitude into `[0, 360)`.
pub fn wrap_lon(lon: f64) -> f64 {
    let w = lon.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVector3 {
    /// Accepts a vector whose norm is within [`UNIT_TOLERANCE`] of 1 and
    /// renormalizes it.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("vector norm {n} is not unit")));
        }
        Ok(Self { x: x / n, y: y / n, z: z / n })
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self { x: x / n, y: y / n, z: z / n })
    }

    pub fn dot(&self, o: &UnitVector3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn neg(&self) -> UnitVector3 {
        UnitVector3 { x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    fn check(&self) -> Result<()> {
        let n = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("vector norm {n} is not unit")));
        }
        Ok(())
    }
}

/// `(cos lat cos lon, cos lat sin lon, sin lat)`.
pub fn latlon_to_vec(c: SphericalCoord) -> UnitVector3 {
    let (lat, lon) = (c.lat.to_radians(), c.lon.to_radians());
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    UnitVector3 { x: clat * clon, y: clat * slon, z: slat }
}

pub fn vec_to_latlon(v: UnitVector3) -> Result<SphericalCoord> {
    v.check()?;
    let horiz = v.x.hypot(v.y);
    let lat = v.z.atan2(horiz).to_degrees().clamp(-90.0, 90.0);
    if horiz == 0.0 {
        return SphericalCoord::new(lat.signum() * 90.0, 0.0);
    }
    SphericalCoord::new(lat, v.y.atan2(v.x).to_degrees())
}

/// Great-circle distance in degrees, evaluated as `atan2(|u×v|, u·v)` which
/// stays accurate near 0 and 180.
pub fn great_circle_deg(u: UnitVector3, v: UnitVector3) -> Result<f64> {
    u.check()?;
    v.check()?;
    Ok(great_circle_unchecked(&u, &v))
}

pub(crate) fn great_circle_unchecked(u: &UnitVector3, v: &UnitVector3) -> f64 {
    let cx = u.y * v.z - u.z * v.y;
    let cy = u.z * v.x - u.x * v.z;
    let cz = u.x * v.y - u.y * v.x;
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    cross.atan2(u.dot(v)).to_degrees()
}

/// Equirectangular raster dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErpGrid {
    width: usize,
    height: usize,
}

impl ErpGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("grid {width}x{height} has a zero dimension")));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn row_lat(&self, row: usize) -> f64 {
        90.0 - (row as f64 + 0.5) / self.height as f64 * 180.0
    }

    pub fn col_lon(&self, col: usize) -> f64 {
        (col as f64 + 0.5) / self.width as f64 * 360.0
    }

    /// Pixel containing `c`; boundary values are clamped into the raster.
    pub fn pixel_of(&self, c: SphericalCoord) -> (usize, usize) {
        let row = ((90.0 - c.lat) / 180.0 * self.height as f64).floor();
        let col = (c.lon / 360.0 * self.width as f64).floor();
        let row = (row.max(0.0) as usize).min(self.height - 1);
        let col = (col.max(0.0) as usize).min(self.width - 1);
        (row, col)
    }

    pub fn center_of(&self, row: usize, col: usize) -> SphericalCoord {
        SphericalCoord { lat: self.row_lat(row), lon: self.col_lon(col) }
    }

    /// Unit vectors of all pixel centers, row-major.
    pub fn center_vectors(&self) -> Vec<UnitVector3> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(latlon_to_vec(self.center_of(r, c)));
            }
        }
        out
    }

    /// Row-major `sin(90° − lat)` weights.
    pub fn sin_weight_map(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.height {
            let w = self.row_weight(r);
            out.extend(std::iter::repeat_n(w, self.width));
        }
        out
    }

    /// Weight of a single row. Rows mirrored about the equator get bitwise
    /// identical weights.
    pub fn row_weight(&self, row: usize) -> f64 {
        let d = row.min(self.height - 1 - row);
        (90.0 - self.row_lat(d)).to_radians().sin()
    }

    /// Solid angle of one pixel in steradians.
    pub fn pixel_solid_angle(&self, row: usize) -> f64 {
        let top = (90.0 - row as f64 / self.height as f64 * 180.0).to_radians();
        let bottom = (90.0 - (row + 1) as f64 / self.height as f64 * 180.0).to_radians();
        (top.sin() - bottom.sin()) * (2.0 * std::f64::consts::PI / self.width as f64)
    }
}

impl std::fmt::Display for ErpGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl std::str::FromStr for ErpGrid {
    type Err = Error;

    /// Parses `WIDTHxHEIGHT`.
    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("grid `{s}` is not WIDTHxHEIGHT")))?;
        let w = w.trim().parse().map_err(|_| Error::invalid(format!("bad grid width in `{s}`")))?;
        let h = h.trim().parse().map_err(|_| Error::invalid(format!("bad grid height in `{s}`")))?;
        ErpGrid::new(w, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(lat: f64, lon: f64) -> SphericalCoord {
        SphericalCoord::new(lat, lon).unwrap()
    }

    #[test]
    fn convention_anchors() {
        let v = latlon_to_vec(c(0.0, 0.0));
        assert_abs_diff_eq!(v.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-15);
        let v = latlon_to_vec(c(0.0, 180.0));
        assert_abs_diff_eq!(v.x, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-15);
        let v = latlon_to_vec(c(90.0, 123.0));
        assert_abs_diff_eq!(v.z, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-15);
        let back = vec_to_latlon(UnitVector3::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!((back.lat(), back.lon()), (90.0, 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SphericalCoord::new(91.0, 0.0).is_err());
        assert!(UnitVector3::new(1.1, 0.0, 0.0).is_err());
        let bad = UnitVector3 { x: 2.0, y: 0.0, z: 0.0 };
        assert!(vec_to_latlon(bad).is_err());
        assert!(great_circle_deg(bad, bad).is_err());
        assert!(ErpGrid::new(0, 3).is_err());
    }

    #[test]
    fn lon_wraps() {
        assert_eq!(c(10.0, 360.0).lon(), 0.0);
        assert_eq!(c(10.0, -90.0).lon(), 270.0);
        assert_eq!(c(-90.0, 45.0).lon(), 0.0);
    }

    #[test]
    fn great_circle_anchors() {
        let u = c(0.0, 0.0).to_vec();
        assert_eq!(great_circle_deg(u, u).unwrap(), 0.0);
        assert_abs_diff_eq!(great_circle_deg(u, u.neg()).unwrap(), 180.0, epsilon = 1e-12);
        let v = c(0.0, 90.0).to_vec();
        assert_abs_diff_eq!(great_circle_deg(u, v).unwrap(), 90.0, epsilon = 1e-12);
        // tiny separations are resolved
        let w = c(0.0, 1e-7).to_vec();
        assert_abs_diff_eq!(great_circle_deg(u, w).unwrap(), 1e-7, epsilon = 1e-15);
    }

    #[test]
    fn pixel_mapping() {
        let g = ErpGrid::new(360, 180).unwrap();
        assert_eq!(g.pixel_of(c(0.5, 180.5)), (89, 180));
        let g = ErpGrid::new(4, 2).unwrap();
        let cc = g.center_of(0, 0);
        assert_eq!((cc.lat(), cc.lon()), (45.0, 45.0));
        let g = ErpGrid::new(2, 2).unwrap();
        assert_eq!(g.pixel_of(c(-90.0, 0.0)), (1, 0));
        assert_eq!(g.pixel_of(c(90.0, 0.0)), (0, 0));
    }

    #[test]
    fn sin_weights() {
        let g = ErpGrid::new(3, 1).unwrap();
        assert!(g.sin_weight_map().iter().all(|&w| (w - 1.0).abs() < 1e-15));
        let g = ErpGrid::new(1, 2).unwrap();
        let w = g.sin_weight_map();
        assert_abs_diff_eq!(w[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_eq!(w[0], w[1]);
        let g = ErpGrid::new(1, 180).unwrap();
        assert_abs_diff_eq!(g.sin_weight_map()[0], 0.5f64.to_radians().sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.sin_weight_map()[0], 0.0087265, epsilon = 5e-8);
    }

    #[test]
    fn sin_weights_mirror_exactly() {
        for h in 1..40 {
            let g = ErpGrid::new(3, h).unwrap();
            let w = g.sin_weight_map();
            for r in 0..h {
                for col in 0..3 {
                    assert_eq!(w[g.index(r, col)], w[g.index(h - 1 - r, col)]);
                    assert!(w[g.index(r, col)] > 0.0 && w[g.index(r, col)] <= 1.0);
                }
            }
        }
    }

    #[test]
    fn solid_angles_cover_sphere() {
        let g = ErpGrid::new(16, 9).unwrap();
        let total: f64 = (0..9).map(|r| g.pixel_solid_angle(r) * 16.0).sum();
        assert_abs_diff_eq!(total, 4.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn parse_grid() {
        let g: ErpGrid = "720x360".parse().unwrap();
        assert_eq!((g.width(), g.height()), (720, 360));
        assert!("720".parse::<ErpGrid>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn round_trip(lat in -89.999f64..89.999, lon in 0.0f64..360.0) {
            let v = latlon_to_vec(c(lat, lon));
            let back = vec_to_latlon(v).unwrap();
            prop_assert!((back.lat() - lat).abs() <= 1e-9);
            let dlon = (back.lon() - lon).abs();
            prop_assert!(dlon.min(360.0 - dlon) <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in (-90.0f64..90.0, 0.0f64..360.0),
            b in (-90.0f64..90.0, 0.0f64..360.0),
            d in (-90.0f64..90.0, 0.0f64..360.0),
        ) {
            let (u, v, w) = (c(a.0, a.1).to_vec(), c(b.0, b.1).to_vec(), c(d.0, d.1).to_vec());
            let uv = great_circle_deg(u, v).unwrap();
            prop_assert!((uv - great_circle_deg(v, u).unwrap()).abs() <= 1e-9);
            prop_assert!((0.0..=180.0).contains(&uv));
            let uw = great_circle_deg(u, w).unwrap();
            let wv = great_circle_deg(w, v).unwrap();
            prop_assert!(uv <= uw + wv + 1e-9);
        }
    }
}
