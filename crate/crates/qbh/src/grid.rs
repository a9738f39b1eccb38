//! Uniform Brillouin-zone grids.
//!
//! Grids are odd-sized tensor products `k_j = 2 pi j / n`,
//! `j = -(n-1)/2 ..= (n-1)/2`, so they contain `k = 0` and are symmetric
//! under `k -> -k`. Uniform spacing makes grid sums spectrally accurate for
//! the trigonometric-polynomial band data of finite-range models.

use crate::error::{QbhError, Result};

pub const DEFAULT_POINTS_1D: usize = 1025;
pub const DEFAULT_POINTS_PER_AXIS_2D: usize = 129;

#[derive(Debug, Clone)]
pub struct BzGrid {
    points_per_axis: Vec<usize>,
}

impl BzGrid {
    /// Odd number of points per axis, at least 3.
    pub fn new(points_per_axis: Vec<usize>) -> Result<Self> {
        if points_per_axis.is_empty() {
            return Err(QbhError::InvalidInput("empty grid".into()));
        }
        for &n in &points_per_axis {
            if n < 3 || n % 2 == 0 {
                return Err(QbhError::InvalidInput(format!(
                    "grid size {n} must be odd and >= 3"
                )));
            }
        }
        Ok(Self { points_per_axis })
    }

    pub fn new_1d(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn default_for_dim(dim: usize) -> Self {
        let n = match dim {
            1 => DEFAULT_POINTS_1D,
            2 => DEFAULT_POINTS_PER_AXIS_2D,
            _ => 33,
        };
        Self { points_per_axis: vec![n; dim] }
    }

    pub fn dim(&self) -> usize {
        self.points_per_axis.len()
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        let n = self.points_per_axis[axis] as i64;
        let half = (n - 1) / 2;
        (-half..=half)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
            .collect()
    }

    pub fn axis_spacing(&self, axis: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.points_per_axis[axis] as f64
    }

    /// Flat index -> momentum vector (row-major over axes).
    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        let dim = self.dim();
        let mut idx = vec![0usize; dim];
        for axis in (0..dim).rev() {
            let n = self.points_per_axis[axis];
            idx[axis] = flat % n;
            flat /= n;
        }
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| {
                let n = self.points_per_axis[axis] as i64;
                let half = (n - 1) / 2;
                2.0 * std::f64::consts::PI * (i as i64 - half) as f64 / n as f64
            })
            .collect()
    }

    /// Flat index of the point at `-k`. The grid is negation-symmetric.
    pub fn mirror(&self, flat: usize) -> usize {
        let dim = self.dim();
        let mut rem = flat;
        let mut idx = vec![0usize; dim];
        for axis in (0..dim).rev() {
            let n = self.points_per_axis[axis];
            idx[axis] = rem % n;
            rem /= n;
        }
        let mut out = 0usize;
        for axis in 0..dim {
            let n = self.points_per_axis[axis];
            out = out * n + (n - 1 - idx[axis]);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|f| self.point(f))
    }
}
