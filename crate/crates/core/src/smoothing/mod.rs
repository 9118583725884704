//! Weighted local polynomial regression in one and two dimensions, with
//! arbitrary derivative targets and generalized cross-validation.
//!
//! Every estimator in the crate reduces to one of the fits here. A fit
//! at evaluation point `t` minimizes
//!
//! ```text
//! sum_i w_i K((x_i - t)/h) [y_i - sum_j a_j (x_i - t)^j]^2
//! ```
//!
//! and reports `ν!·a_ν`. When fewer supporting points than coefficients
//! fall inside the kernel window, the bandwidth is doubled locally (up to
//! the span of data and evaluation points) before the fit is declared
//! degenerate.

mod gcv;
mod kernel;
pub(crate) mod local;

use rayon::prelude::*;

pub use gcv::{gcv_bandwidth_1d, gcv_bandwidth_2d, gcv_score_1d, gcv_score_2d, GcvSelection};
pub use kernel::Kernel;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridSurface};
use local::{factorial, monomials, Design1D, Design2D};

/// Scattered `(x, y, w)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterData1D {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl ScatterData1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: if y.len() != x.len() { y.len() } else { w.len() },
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scatter coordinates".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("weights must have positive total".into()));
        }
        Ok(ScatterData1D { x, y, w })
    }

    /// Unit weight on every point.
    pub fn unweighted(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; x.len()];
        ScatterData1D::new(x, y, w)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Scattered `(s, t, value, w)` quadruples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterData2D {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub w: Vec<f64>,
}

impl ScatterData2D {
    pub fn new(s: Vec<f64>, t: Vec<f64>, value: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let n = s.len();
        if t.len() != n || value.len() != n || w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: t.len().max(value.len()).max(w.len()),
            });
        }
        if s.iter().chain(&t).chain(&value).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scatter coordinates".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        if !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidInput("weights must have positive total".into()));
        }
        Ok(ScatterData2D { s, t, value, w })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Degree, derivative order, bandwidth and kernel of a 1D local fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFitSpec {
    pub degree: usize,
    pub deriv: usize,
    pub bandwidth: f64,
    pub kernel: Kernel,
}

impl LocalFitSpec {
    pub fn new(degree: usize, deriv: usize, bandwidth: f64, kernel: Kernel) -> Result<Self> {
        let spec = LocalFitSpec {
            degree,
            deriv,
            bandwidth,
            kernel,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.deriv > self.degree {
            return Err(Error::InvalidInput(format!(
                "derivative order {} exceeds degree {}",
                self.deriv, self.degree
            )));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        Ok(())
    }
}

fn span_with(lo: f64, hi: f64, points: &[f64]) -> f64 {
    let lo = points.iter().copied().fold(lo, f64::min);
    let hi = points.iter().copied().fold(hi, f64::max);
    hi - lo
}

/// All derivatives `0..=degree` of the local fit at each point.
///
/// Returns one vector per point holding `ν!·α_ν` for `ν = 0..=degree`.
pub fn local_poly_1d_all(
    data: &ScatterData1D,
    degree: usize,
    bandwidth: f64,
    kernel: Kernel,
    points: &[f64],
) -> Result<Vec<Vec<f64>>> {
    LocalFitSpec::new(degree, 0, bandwidth, kernel)?;
    let design = Design1D::new(&data.x, &data.y, &data.w);
    let (lo, hi) = design.span();
    let width = span_with(lo, hi, points);
    points
        .par_iter()
        .map(|&t| {
            let sol = design.fit(t, degree, bandwidth, kernel, width)?;
            Ok((0..=degree).map(|nu| sol.derivative(nu)).collect())
        })
        .collect()
}

/// `ν!·α̂_ν(t)` at arbitrary evaluation points.
pub fn local_poly_1d_at(data: &ScatterData1D, spec: &LocalFitSpec, points: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    let design = Design1D::new(&data.x, &data.y, &data.w);
    let (lo, hi) = design.span();
    let width = span_with(lo, hi, points);
    points
        .par_iter()
        .map(|&t| {
            design
                .fit(t, spec.degree, spec.bandwidth, spec.kernel, width)
                .map(|sol| sol.derivative(spec.deriv))
        })
        .collect()
}

/// `ν!·α̂_ν` on every point of `grid`.
pub fn local_poly_1d(data: &ScatterData1D, spec: &LocalFitSpec, grid: &Grid) -> Result<GridFunction> {
    let values = local_poly_1d_at(data, spec, grid.points())?;
    GridFunction::new(grid.clone(), values)
}

fn target_index(total_degree: usize, target: (usize, usize)) -> Result<(Vec<(usize, usize)>, usize)> {
    if target.0 + target.1 > total_degree {
        return Err(Error::InvalidInput(format!(
            "target {:?} exceeds total degree {total_degree}",
            target
        )));
    }
    let basis = monomials(total_degree);
    let idx = basis.iter().position(|&m| m == target).expect("target in basis");
    Ok((basis, idx))
}

/// `p!·q!·α̂_pq(s, t)` at arbitrary `(s, t)` points.
pub fn local_poly_2d_at(
    data: &ScatterData2D,
    total_degree: usize,
    target: (usize, usize),
    bandwidth: f64,
    kernel: Kernel,
    points: &[(f64, f64)],
) -> Result<Vec<f64>> {
    local_poly_2d_at_each(data, total_degree, target, &[bandwidth], kernel, points)?
        .pop()
        .expect("one bandwidth")
}

/// [`local_poly_2d_at`] for several bandwidths over one merged design; one
/// result per bandwidth.
pub fn local_poly_2d_at_each(
    data: &ScatterData2D,
    total_degree: usize,
    target: (usize, usize),
    bandwidths: &[f64],
    kernel: Kernel,
    points: &[(f64, f64)],
) -> Result<Vec<Result<Vec<f64>>>> {
    if let Some(h) = bandwidths.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    let (basis, idx) = target_index(total_degree, target)?;
    let design = Design2D::new(&data.s, &data.t, &data.value, &data.w);
    let (lo, hi) = design.span();
    let flat: Vec<f64> = points.iter().flat_map(|&(s, t)| [s, t]).collect();
    let width = span_with(lo, hi, &flat);
    let order = (target.0 + target.1) as i32;
    let scale = factorial(target.0) * factorial(target.1);
    Ok(bandwidths
        .iter()
        .map(|&h| {
            design
                .fit_many(points, &basis, total_degree, h, kernel, width)
                .into_iter()
                .map(|sol| sol.map(|sol| scale * sol.coef[idx] / sol.h.powi(order)))
                .collect()
        })
        .collect())
}

/// Diagonal `G(t, t)` of a covariance surface from off-diagonal raw
/// covariances, fitted in rotated coordinates `u = (s + t)/2` along the
/// diagonal and `v = (t − s)/√2` across it: local linear in `u`, local
/// quadratic (even) in `v`, intercept returned.
pub fn local_diagonal_at(data: &ScatterData2D, bandwidth: f64, kernel: Kernel, points: &[f64]) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let u: Vec<f64> = data.s.iter().zip(&data.t).map(|(s, t)| 0.5 * (s + t)).collect();
    let v: Vec<f64> = data
        .s
        .iter()
        .zip(&data.t)
        .map(|(s, t)| (t - s) * std::f64::consts::FRAC_1_SQRT_2)
        .collect();
    let design = Design2D::new(&u, &v, &data.value, &data.w);
    let (lo, hi) = design.span();
    let width = span_with(lo, hi, points);
    let basis = [(0, 0), (1, 0), (0, 2)];
    let at: Vec<(f64, f64)> = points.iter().map(|&t| (t, 0.0)).collect();
    design
        .fit_many(&at, &basis, 2, bandwidth, kernel, width)
        .into_iter()
        .map(|sol| sol.map(|sol| sol.coef[0]))
        .collect()
}

/// `p!·q!·α̂_pq` on `grid × grid`; entry `(i, j)` is the fit at `(s_i, t_j)`.
pub fn local_poly_2d(
    data: &ScatterData2D,
    total_degree: usize,
    target: (usize, usize),
    bandwidth: f64,
    kernel: Kernel,
    grid: &Grid,
) -> Result<GridSurface> {
    let p = grid.points();
    let m = p.len();
    let pairs: Vec<(f64, f64)> = (0..m).flat_map(|i| (0..m).map(move |j| (p[i], p[j]))).collect();
    let values = local_poly_2d_at(data, total_degree, target, bandwidth, kernel, &pairs)?;
    let matrix = nalgebra::DMatrix::from_row_slice(m, m, &values);
    GridSurface::new(grid.clone(), matrix)
}
