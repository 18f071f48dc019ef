//! Per-frame raster maps on an ERP grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{ErpGrid, SphericalCoord};

/// Fixation counts per pixel for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationMap {
    grid: ErpGrid,
    counts: Vec<u32>,
    pub frame_index: usize,
}

impl FixationMap {
    pub fn zeros(grid: ErpGrid, frame_index: usize) -> Self {
        Self { grid, counts: vec![0; grid.len()], frame_index }
    }

    pub fn from_counts(grid: ErpGrid, counts: Vec<u32>, frame_index: usize) -> Result<Self> {
        if counts.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} counts for a {grid} grid",
                counts.len()
            )));
        }
        Ok(Self { grid, counts, frame_index })
    }

    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn add_at(&mut self, row: usize, col: usize, n: u32) {
        let i = self.grid.index(row, col);
        self.counts[i] += n;
    }

    pub fn add_coord(&mut self, c: SphericalCoord) {
        let (r, col) = self.grid.pixel_of(c);
        self.add_at(r, col, 1);
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Pixel-wise sum of two maps on the same grid.
    pub fn merged(&self, other: &FixationMap) -> Result<FixationMap> {
        if self.grid != other.grid {
            return Err(Error::invalid("fixation maps on different grids"));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(FixationMap { grid: self.grid, counts, frame_index: self.frame_index })
    }

    /// `(row, col, count)` for every non-zero pixel in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        let w = self.grid.width();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| (i / w, i % w, c))
    }
}

/// Non-negative density over an ERP grid, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    grid: ErpGrid,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(grid: ErpGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!("{} values for a {grid} grid", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("saliency value {v} is negative or non-finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: ErpGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Row-major index of the largest value (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.grid.width(), best % self.grid.width())
    }

    /// Copy scaled to sum 1; `None` when the map has no mass.
    pub fn normalized_sum(&self) -> Option<SaliencyMap> {
        let s = self.sum();
        (s > 0.0).then(|| SaliencyMap {
            grid: self.grid,
            values: self.values.iter().map(|v| v / s).collect(),
        })
    }

    /// Copy scaled to max 1; `None` when the map has no mass.
    pub fn normalized_max(&self) -> Option<SaliencyMap> {
        let m = self.max();
        (m > 0.0).then(|| SaliencyMap {
            grid: self.grid,
            values: self.values.iter().map(|v| v / m).collect(),
        })
    }
}
