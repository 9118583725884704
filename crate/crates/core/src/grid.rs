//! Uniform evaluation grids and discretized functions/surfaces on them.
//!
//! All integrals use the composite trapezoid rule on the grid; linear
//! (1D) and bilinear (2D) interpolation recover values between nodes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of evaluation points.
pub const DEFAULT_GRID_LEN: usize = 51;

/// Uniform grid over `[start, end]` with inclusive endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(start: f64, end: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidInput(format!("grid needs at least 2 points, got {len}")));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidInput(format!("invalid grid range [{start}, {end}]")));
        }
        let step = (end - start) / (len - 1) as f64;
        let mut points: Vec<f64> = (0..len).map(|i| start + i as f64 * step).collect();
        points[len - 1] = end;
        Ok(Grid { points })
    }

    pub fn unit(len: usize) -> Result<Self> {
        Grid::new(0.0, 1.0, len)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn width(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn step(&self) -> f64 {
        self.width() / (self.len() - 1) as f64
    }

    /// Trapezoid quadrature weights; they sum to the domain width.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.len();
        let h = self.step();
        let mut w = vec![h; m];
        w[0] = h / 2.0;
        w[m - 1] = h / 2.0;
        w
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = 1e-12 * self.width().max(1.0);
        t >= self.start() - tol && t <= self.end() + tol
    }

    /// Cell index and fractional offset for linear interpolation, clamped to the grid.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let m = self.len();
        let pos = ((t - self.start()) / self.step()).clamp(0.0, (m - 1) as f64);
        let idx = (pos.floor() as usize).min(m - 2);
        (idx, pos - idx as f64)
    }
}

/// Function values on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: grid.points().iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn inner(&self, other: &GridFunction) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    /// Linear interpolation; clamps outside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let (i, f) = self.grid.locate(t);
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// Exact integral of the piecewise-linear interpolant over `[lo, hi]`.
    pub fn integrate_between(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.grid.start());
        let hi = hi.min(self.grid.end());
        if hi <= lo {
            return 0.0;
        }
        let pts = self.grid.points();
        let mut knots = vec![lo];
        knots.extend(pts.iter().copied().filter(|&t| t > lo && t < hi));
        knots.push(hi);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.interpolate(w[0]) + self.interpolate(w[1])))
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Values on `grid × grid`; entry `(i, j)` holds the surface at `(s_i, t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSurface {
    pub grid: Grid,
    pub values: DMatrix<f64>,
}

impl GridSurface {
    pub fn new(grid: Grid, values: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if values.nrows() != m || values.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: values.nrows().max(values.ncols()),
            });
        }
        Ok(GridSurface { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        let m = grid.len();
        GridSurface {
            grid: grid.clone(),
            values: DMatrix::zeros(m, m),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let p = grid.points();
        let m = p.len();
        GridSurface {
            grid: grid.clone(),
            values: DMatrix::from_fn(m, m, |i, j| f(p[i], p[j])),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let a = &self.values;
        let mut worst = 0.0_f64;
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(mut self) -> Self {
        let t = self.values.transpose();
        self.values = (&self.values + t) * 0.5;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation; clamps outside the grid.
    pub fn interpolate(&self, s: f64, t: f64) -> f64 {
        let (i, fs) = self.grid.locate(s);
        let (j, ft) = self.grid.locate(t);
        let a = &self.values;
        (1.0 - fs) * (1.0 - ft) * a[(i, j)]
            + fs * (1.0 - ft) * a[(i + 1, j)]
            + (1.0 - fs) * ft * a[(i, j + 1)]
            + fs * ft * a[(i + 1, j + 1)]
    }

    /// Values along the first argument at `t`, linearly interpolated between columns.
    pub fn column_at(&self, t: f64) -> Vec<f64> {
        let (j, f) = self.grid.locate(t);
        (0..self.len())
            .map(|i| self.values[(i, j)] * (1.0 - f) + self.values[(i, j + 1)] * f)
            .collect()
    }

    pub fn diagonal(&self) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.diagonal().iter().copied().collect(),
        }
    }

    /// Row-major nested rows, first index `s`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.values.row(i).iter().copied().collect())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SurfaceRepr {
    grid: Grid,
    rows: Vec<Vec<f64>>,
}

impl Serialize for GridSurface {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SurfaceRepr {
            grid: self.grid.clone(),
            rows: self.rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GridSurface {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SurfaceRepr::deserialize(deserializer)?;
        let m = repr.grid.len();
        if repr.rows.len() != m || repr.rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("surface rows do not match grid length"));
        }
        let values = DMatrix::from_fn(m, m, |i, j| repr.rows[i][j]);
        Ok(GridSurface { grid: repr.grid, values })
    }
}
