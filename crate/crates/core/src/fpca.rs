//! Pooled mean and covariance estimation, measurement-error variance,
//! quadrature eigendecomposition, PACE scores and the FPCA derivative
//! representation `μ′ + ∑ ξ_k φ_k′`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalDataset, Subject};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridSurface};
use crate::smoothing::{
    local_diagonal_at, local_poly_1d, local_poly_1d_all, local_poly_2d, local_poly_2d_at_each, GcvSelection, Kernel, LocalFitSpec,
    ScatterData1D, ScatterData2D,
};

/// Relative eigenvalue truncation threshold.
pub const EIGEN_REL_TOL: f64 = 1e-12;
/// Largest accepted condition number of a ridged subject covariance.
pub const MAX_CONDITION: f64 = 1e12;
/// Symmetry tolerance accepted by [`eigensystem`], relative to `max(1, max|A|)`.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Descending eigenvalues with quadrature-orthonormal eigenfunctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub functions: Vec<GridFunction>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Keeps the leading `k` components.
    pub fn truncated(&self, k: usize) -> EigenSystem {
        let k = k.min(self.len());
        EigenSystem {
            values: self.values[..k].to_vec(),
            functions: self.functions[..k].to_vec(),
        }
    }
}

/// `n × K` matrix of component scores, one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub values: DMatrix<f64>,
}

impl ScoreMatrix {
    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.values.ncols()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.values.nrows())
            .map(|i| self.values.row(i).iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: bad.len() });
        }
        Ok(ScoreMatrix {
            values: DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]),
        })
    }

    /// The first `k` columns.
    pub fn leading(&self, k: usize) -> ScoreMatrix {
        let k = k.min(self.n_components());
        ScoreMatrix {
            values: self.values.columns(0, k).clone_owned(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreRepr {
    n_subjects: usize,
    n_components: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for ScoreMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ScoreRepr {
            n_subjects: self.n_subjects(),
            n_components: self.n_components(),
            rows: self.rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ScoreMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ScoreRepr::deserialize(deserializer)?;
        if repr.rows.len() != repr.n_subjects {
            return Err(serde::de::Error::custom("score rows do not match subject count"));
        }
        ScoreMatrix::from_rows(&repr.rows, repr.n_components).map_err(serde::de::Error::custom)
    }
}

/// Local-quadratic fit to the pooled scatterplot, each observation weighted `1/N`.
///
/// Returns `(μ̂, μ̂′)` from the same fit.
pub fn estimate_mean_and_derivative(
    data: &LongitudinalDataset,
    h_mu: f64,
    kernel: Kernel,
    grid: &Grid,
) -> Result<(GridFunction, GridFunction)> {
    let pooled = pooled_observations(data)?;
    let fits = local_poly_1d_all(&pooled, 2, h_mu, kernel, grid.points())?;
    let mean = fits.iter().map(|f| f[0]).collect();
    let deriv = fits.iter().map(|f| f[1]).collect();
    Ok((GridFunction::new(grid.clone(), mean)?, GridFunction::new(grid.clone(), deriv)?))
}

/// All observations as one scatterplot with weight `1/N` each.
pub fn pooled_observations(data: &LongitudinalDataset) -> Result<ScatterData1D> {
    let n = data.total_observations();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, found: n });
    }
    let x: Vec<f64> = data.subjects.iter().flat_map(|s| s.times.iter().copied()).collect();
    let y: Vec<f64> = data.subjects.iter().flat_map(|s| s.values.iter().copied()).collect();
    ScatterData1D::new(x, y, vec![1.0 / n as f64; n])
}

fn residuals(subject: &Subject, mean: &GridFunction) -> Vec<f64> {
    subject
        .times
        .iter()
        .zip(&subject.values)
        .map(|(&t, &y)| y - mean.interpolate(t))
        .collect()
}

/// Raw covariances `r_ij·r_il` for every ordered within-subject pair `j ≠ l`.
pub fn raw_covariances(data: &LongitudinalDataset, mean: &GridFunction) -> Result<ScatterData2D> {
    let pairs = data.pair_count();
    if pairs == 0 {
        return Err(Error::NoPairs);
    }
    let weight = 1.0 / pairs as f64;
    let mut s = Vec::with_capacity(pairs);
    let mut t = Vec::with_capacity(pairs);
    let mut value = Vec::with_capacity(pairs);
    for subject in &data.subjects {
        let r = residuals(subject, mean);
        for j in 0..subject.len() {
            for l in 0..subject.len() {
                if j != l {
                    s.push(subject.times[j]);
                    t.push(subject.times[l]);
                    value.push(r[j] * r[l]);
                }
            }
        }
    }
    ScatterData2D::new(s, t, value, vec![weight; pairs])
}

/// Local-linear surface smooth of the raw covariances, symmetrized.
pub fn estimate_cov_surface(raw: &ScatterData2D, h_g: f64, kernel: Kernel, grid: &Grid) -> Result<GridSurface> {
    Ok(local_poly_2d(raw, 1, (0, 0), h_g, kernel, grid)?.symmetrized())
}

/// Covariance bandwidth by subject-wise `folds`-fold cross-validation:
/// subject `i` belongs to fold `i % folds`, the local-linear surface is fitted
/// to the other folds' raw covariances and scored by the weighted squared
/// error on the held-out pairs. `raw` must come from [`raw_covariances`] on
/// the same `data`.
pub fn cv_bandwidth_cov(
    data: &LongitudinalDataset,
    raw: &ScatterData2D,
    kernel: Kernel,
    candidates: &[f64],
    folds: usize,
) -> Result<GcvSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate bandwidths".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidInput(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    let owner: Vec<usize> = data
        .subjects
        .iter()
        .enumerate()
        .flat_map(|(i, s)| std::iter::repeat_n(i % folds, s.len() * s.len().saturating_sub(1)))
        .collect();
    if owner.len() != raw.len() {
        return Err(Error::DimensionMismatch {
            expected: owner.len(),
            found: raw.len(),
        });
    }
    let mut sse: Vec<Option<f64>> = vec![Some(0.0); candidates.len()];
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..raw.len()).partition(|&i| owner[i] == f);
        if test.is_empty() || train.is_empty() {
            continue;
        }
        let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let fit_data = ScatterData2D::new(
            pick(&raw.s, &train),
            pick(&raw.t, &train),
            pick(&raw.value, &train),
            pick(&raw.w, &train),
        )?;
        let mut points: Vec<(f64, f64)> = test.iter().map(|&i| (raw.s[i], raw.t[i])).collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup();
        let locate = |s: f64, t: f64| {
            points
                .binary_search_by(|p| p.0.total_cmp(&s).then(p.1.total_cmp(&t)))
                .expect("held-out point present")
        };
        let slot: Vec<usize> = test.iter().map(|&i| locate(raw.s[i], raw.t[i])).collect();
        let fits = local_poly_2d_at_each(&fit_data, 1, (0, 0), candidates, kernel, &points)?;
        for (c, est) in fits.into_iter().enumerate() {
            sse[c] = match (sse[c], est) {
                (Some(acc), Ok(est)) => Some(
                    acc + test
                        .iter()
                        .zip(&slot)
                        .map(|(&i, &p)| raw.w[i] * (raw.value[i] - est[p]).powi(2))
                        .sum::<f64>(),
                ),
                _ => None,
            };
        }
    }
    let scores: Vec<(f64, Option<f64>)> = candidates
        .iter()
        .zip(sse)
        .map(|(&h, e)| (h, e.filter(|v| v.is_finite())))
        .collect();
    let bandwidth = scores
        .iter()
        .filter_map(|(h, e)| e.map(|e| (*h, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(h, _)| h)
        .ok_or_else(|| Error::InvalidInput("no candidate bandwidth produced a finite cross-validation score".into()))?;
    Ok(GcvSelection { bandwidth, scores })
}

/// Covariance diagonal on the grid from the raw covariances; see
/// [`local_diagonal_at`].
pub fn estimate_cov_diagonal(raw: &ScatterData2D, h: f64, kernel: Kernel, grid: &Grid) -> Result<GridFunction> {
    GridFunction::new(grid.clone(), local_diagonal_at(raw, h, kernel, grid.points())?)
}

/// Measurement-error variance: the central-half average of the smoothed
/// squared residuals minus the covariance diagonal, clamped at zero.
pub fn estimate_sigma2(
    data: &LongitudinalDataset,
    mean: &GridFunction,
    diagonal: &GridFunction,
    h_sigma: f64,
    kernel: Kernel,
    grid: &Grid,
) -> Result<f64> {
    let n = data.total_observations();
    let x: Vec<f64> = data.subjects.iter().flat_map(|s| s.times.iter().copied()).collect();
    let y: Vec<f64> = data
        .subjects
        .iter()
        .flat_map(|s| residuals(s, mean).into_iter().map(|r| r * r))
        .collect();
    let scatter = ScatterData1D::new(x, y, vec![1.0 / n as f64; n])?;
    let spec = LocalFitSpec::new(1, 0, h_sigma, kernel)?;
    let total_var = local_poly_1d(&scatter, &spec, grid)?;
    let values = total_var
        .values
        .iter()
        .zip(grid.points())
        .map(|(v, &t)| v - diagonal.interpolate(t))
        .collect();
    let gap = GridFunction::new(grid.clone(), values)?;
    let (lo, hi) = data.domain;
    let width = hi - lo;
    let avg = 2.0 / width * gap.integrate_between(lo + width / 4.0, hi - width / 4.0);
    Ok(avg.max(0.0))
}

/// Quadrature-weighted eigendecomposition of a symmetric surface.
///
/// Solves `W^{1/2} A W^{1/2} u = λu`, maps back `φ = W^{-1/2} u`, drops
/// eigenvalues `≤ max(0, 1e-12·λ₁)` and orients each eigenfunction so
/// that `∫φ > 0` (left endpoint value positive when the integral vanishes).
pub fn eigensystem(surface: &GridSurface) -> Result<EigenSystem> {
    let scale = surface.max_abs().max(1.0);
    let asym = surface.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let grid = &surface.grid;
    let w = grid.weights();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let m = grid.len();
    let a = DMatrix::from_fn(m, m, |i, j| {
        sw[i] * 0.5 * (surface.values[(i, j)] + surface.values[(j, i)]) * sw[j]
    });
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lead = eig.eigenvalues[order[0]];
    let cutoff = (EIGEN_REL_TOL * lead).max(0.0);
    let mut values = Vec::new();
    let mut functions = Vec::new();
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if !(lambda > cutoff) {
            break;
        }
        let mut phi: Vec<f64> = (0..m).map(|i| eig.eigenvectors[(i, k)] / sw[i]).collect();
        let integral: f64 = phi.iter().zip(&w).map(|(p, w)| p * w).sum();
        let abs_integral: f64 = phi.iter().zip(&w).map(|(p, w)| p.abs() * w).sum();
        let flip = if integral.abs() > 1e-10 * abs_integral {
            integral < 0.0
        } else {
            phi[0] < 0.0
        };
        if flip {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        values.push(lambda);
        functions.push(GridFunction::new(grid.clone(), phi)?);
    }
    Ok(EigenSystem { values, functions })
}

/// `∑ λ_k φ_k(s) φ_k(t)` over the retained components: the positive
/// semidefinite part of the smoothed surface.
pub fn fitted_covariance(eig: &EigenSystem, grid: &Grid) -> GridSurface {
    let m = grid.len();
    let mut values = DMatrix::zeros(m, m);
    for (lambda, phi) in eig.values.iter().zip(&eig.functions) {
        let v = DVector::from_column_slice(&phi.values);
        values += (&v * v.transpose()) * *lambda;
    }
    GridSurface {
        grid: grid.clone(),
        values,
    }
}

/// Per-subject BLUP kernels `Σ̂_{Y_i}^{-1}(Y_i − μ̂_i)`.
///
/// `Σ̂_{Y_i}` holds `Ĝ(T_ij, T_il)` (bilinear interpolation) plus
/// `σ̂² + ridge` on the diagonal, with `ridge = max(1e-8, 1e-6·max|Ĝ|)`.
pub fn blup_kernels(
    data: &LongitudinalDataset,
    mean: &GridFunction,
    cov: &GridSurface,
    sigma2: f64,
) -> Result<Vec<DVector<f64>>> {
    let diag = sigma2 + ridge(cov);
    data.subjects
        .par_iter()
        .map(|subject| {
            let n = subject.len();
            let sigma = DMatrix::from_fn(n, n, |j, l| {
                let g = cov.interpolate(subject.times[j], subject.times[l]);
                if j == l {
                    g + diag
                } else {
                    g
                }
            });
            let sigma = (&sigma + sigma.transpose()) * 0.5;
            let r = DVector::from_vec(residuals(subject, mean));
            solve_spd(sigma, &r).map_err(|condition| Error::SingularCovariance {
                subject: subject.id.clone(),
                condition,
            })
        })
        .collect()
}

/// Diagonal ridge added to every subject covariance beyond `σ̂²`.
pub fn ridge(cov: &GridSurface) -> f64 {
    (1e-6 * cov.max_abs()).max(1e-8)
}

fn solve_spd(sigma: DMatrix<f64>, r: &DVector<f64>) -> std::result::Result<DVector<f64>, f64> {
    let eig = SymmetricEigen::new(sigma);
    let abs_max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let abs_min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = abs_max / abs_min;
    if !(abs_min > 0.0) || !(condition <= MAX_CONDITION) {
        return Err(condition);
    }
    let proj = eig.eigenvectors.transpose() * r;
    let scaled = DVector::from_fn(proj.len(), |i, _| proj[i] / eig.eigenvalues[i]);
    Ok(&eig.eigenvectors * scaled)
}

/// `ξ̂_ik = λ̂_k φ̂_k(T_i)ᵀ Σ̂_{Y_i}^{-1}(Y_i − μ̂_i)` for `k ≤ K`.
pub fn pace_scores(
    data: &LongitudinalDataset,
    mean: &GridFunction,
    cov: &GridSurface,
    sigma2: f64,
    eig: &EigenSystem,
    k: usize,
) -> Result<ScoreMatrix> {
    let kernels = blup_kernels(data, mean, cov, sigma2)?;
    scores_from_kernels(data, &kernels, eig, k)
}

pub(crate) fn scores_from_kernels(
    data: &LongitudinalDataset,
    kernels: &[DVector<f64>],
    eig: &EigenSystem,
    k: usize,
) -> Result<ScoreMatrix> {
    if k > eig.len() {
        return Err(Error::DimensionMismatch {
            expected: eig.len(),
            found: k,
        });
    }
    let mut values = DMatrix::zeros(data.n_subjects(), k);
    for (i, (subject, z)) in data.subjects.iter().zip(kernels).enumerate() {
        for c in 0..k {
            let phi = &eig.functions[c];
            let dot: f64 = subject
                .times
                .iter()
                .zip(z.iter())
                .map(|(&t, zj)| phi.interpolate(t) * zj)
                .sum();
            values[(i, c)] = eig.values[c] * dot;
        }
    }
    Ok(ScoreMatrix { values })
}

/// `φ̂_k′(t) = (1/λ̂_k) ∫ Ĝ^(1,0)(t, s) φ̂_k(s) ds` by trapezoid quadrature.
///
/// `k` is zero-based.
pub fn eigenfunction_derivative(g10: &GridSurface, eig: &EigenSystem, k: usize) -> Result<GridFunction> {
    let lead = eig.values.first().copied().unwrap_or(0.0);
    let lambda = *eig.values.get(k).ok_or(Error::ZeroEigenvalue { index: k })?;
    if !(lambda > (EIGEN_REL_TOL * lead).max(0.0)) {
        return Err(Error::ZeroEigenvalue { index: k });
    }
    let phi = &eig.functions[k];
    if phi.grid != g10.grid {
        return Err(Error::DimensionMismatch {
            expected: g10.len(),
            found: phi.grid.len(),
        });
    }
    let w = g10.grid.weights();
    let m = g10.len();
    let values = (0..m)
        .map(|j| (0..m).map(|i| w[i] * g10.values[(j, i)] * phi.values[i]).sum::<f64>() / lambda)
        .collect();
    GridFunction::new(g10.grid.clone(), values)
}

/// `X̂_i′(t) = μ̂′(t) + ∑_{k≤K} ξ̂_ik φ̂_k′(t)` for every subject.
///
/// Also used for the derivative-score representation, where the scores are
/// DPC scores and the functions the derivative eigenfunctions.
pub fn reconstruct(
    mean_deriv: &GridFunction,
    scores: &ScoreMatrix,
    functions: &[GridFunction],
    k: usize,
) -> Result<Vec<GridFunction>> {
    if k > scores.n_components() || k > functions.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.n_components().min(functions.len()),
            found: k,
        });
    }
    if let Some(f) = functions[..k].iter().find(|f| f.grid != mean_deriv.grid) {
        return Err(Error::DimensionMismatch {
            expected: mean_deriv.grid.len(),
            found: f.grid.len(),
        });
    }
    Ok((0..scores.n_subjects())
        .map(|i| {
            let mut values = mean_deriv.values.clone();
            for (c, f) in functions[..k].iter().enumerate() {
                let xi = scores.values[(i, c)];
                for (v, p) in values.iter_mut().zip(&f.values) {
                    *v += xi * p;
                }
            }
            GridFunction {
                grid: mean_deriv.grid.clone(),
                values,
            }
        })
        .collect())
}

/// FPCA derivative reconstruction from trajectory scores and eigenfunction derivatives.
pub fn fpca_reconstruct_derivative(
    mean_deriv: &GridFunction,
    scores: &ScoreMatrix,
    phi_derivs: &[GridFunction],
    k: usize,
) -> Result<Vec<GridFunction>> {
    reconstruct(mean_deriv, scores, phi_derivs, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn legendre2(t: f64) -> f64 {
        3f64.sqrt() * (2.0 * t - 1.0)
    }

    fn dense_dataset(n: usize, m: usize, f: impl Fn(usize, f64) -> f64) -> LongitudinalDataset {
        let times: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let subjects = (0..n)
            .map(|i| Subject::new(format!("s{i}"), times.clone(), times.iter().map(|&t| f(i, t)).collect()).unwrap())
            .collect();
        LongitudinalDataset::new(subjects, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn mean_derivative_of_quadratic() {
        let data = dense_dataset(5, 51, |_, t| t * t);
        let grid = Grid::unit(51).unwrap();
        let (mu, d) = estimate_mean_and_derivative(&data, 0.1, Kernel::Gaussian, &grid).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            assert!((mu.values[i] - t * t).abs() < 1e-6);
            assert!((d.values[i] - 2.0 * t).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_trajectories() {
        let data = dense_dataset(4, 11, |_, _| 7.0);
        let grid = Grid::unit(21).unwrap();
        let (mu, d) = estimate_mean_and_derivative(&data, 0.2, Kernel::Gaussian, &grid).unwrap();
        assert!(mu.values.iter().all(|v| (v - 7.0).abs() < 1e-8));
        assert!(d.values.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn raw_covariance_counts_and_values() {
        let grid = Grid::unit(11).unwrap();
        let zero = GridFunction::zeros(&grid);
        let one = LongitudinalDataset::new(vec![Subject::new("a", vec![0.2, 0.7], vec![1.5, -2.0]).unwrap()], (0.0, 1.0)).unwrap();
        let raw = raw_covariances(&one, &zero).unwrap();
        assert_eq!(raw.len(), 2);
        assert!(raw.value.iter().all(|&v| v == -3.0));

        let ragged = LongitudinalDataset::new(
            vec![
                Subject::new("a", vec![0.1], vec![1.0]).unwrap(),
                Subject::new("b", vec![0.1, 0.4, 0.9], vec![1.0, 2.0, 3.0]).unwrap(),
                Subject::new("c", vec![0.3, 0.5, 0.6, 0.8], vec![0.0; 4]).unwrap(),
            ],
            (0.0, 1.0),
        )
        .unwrap();
        let raw = raw_covariances(&ragged, &zero).unwrap();
        assert_eq!(raw.len(), 3 * 2 + 4 * 3);
        assert!((raw.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let singles = LongitudinalDataset::new(vec![Subject::new("a", vec![0.1], vec![1.0]).unwrap()], (0.0, 1.0)).unwrap();
        assert_eq!(raw_covariances(&singles, &zero).unwrap_err(), Error::NoPairs);
    }

    #[test]
    fn zero_residuals_give_zero_surface() {
        let data = dense_dataset(3, 11, |_, t| 2.0 * t);
        let grid = Grid::unit(11).unwrap();
        let mean = GridFunction::from_fn(&grid, |t| 2.0 * t);
        let raw = raw_covariances(&data, &mean).unwrap();
        assert!(raw.value.iter().all(|v| v.abs() < 1e-12));
        let g = estimate_cov_surface(&raw, 0.2, Kernel::Gaussian, &grid).unwrap();
        assert!(g.max_abs() < 1e-10);
        assert_eq!(g.max_asymmetry(), 0.0);
    }

    #[test]
    fn separable_surface_is_recovered() {
        // raw values lambda*phi(s)*phi(t) on a dense tensor design
        let grid = Grid::unit(51).unwrap();
        let pts = grid.points().to_vec();
        let (mut s, mut t, mut v) = (vec![], vec![], vec![]);
        for &a in &pts {
            for &b in &pts {
                if a != b {
                    s.push(a);
                    t.push(b);
                    v.push(2.0 * legendre2(a) * legendre2(b));
                }
            }
        }
        let n = s.len();
        let raw = ScatterData2D::new(s, t, v, vec![1.0; n]).unwrap();
        let g = estimate_cov_surface(&raw, 0.05, Kernel::Gaussian, &grid).unwrap();
        let truth = GridSurface::from_fn(&grid, |a, b| 2.0 * legendre2(a) * legendre2(b));
        // local linear fits miss the s*t term where the window is one-sided
        let err = (&g.values - &truth.values).abs().max();
        assert!(err < 5e-2, "sup error {err}");
        let m = grid.len();
        let interior = (10..m - 10)
            .flat_map(|i| (10..m - 10).map(move |j| (i, j)))
            .map(|(i, j)| (g.values[(i, j)] - truth.values[(i, j)]).abs())
            .fold(0.0, f64::max);
        assert!(interior < 5e-3, "interior error {interior}");
    }

    #[test]
    fn sigma2_clamps_at_zero() {
        let data = dense_dataset(3, 11, |i, t| i as f64 * t);
        let grid = Grid::unit(11).unwrap();
        let mean = GridFunction::from_fn(&grid, |t| t);
        let huge = GridSurface::from_fn(&grid, |_, _| 100.0);
        let s2 = estimate_sigma2(&data, &mean, &huge.diagonal(), 0.2, Kernel::Gaussian, &grid).unwrap();
        assert_eq!(s2, 0.0);
    }

    #[test]
    fn rank_one_and_zero_spectra() {
        let grid = Grid::unit(101).unwrap();
        let raw = GridFunction::from_fn(&grid, legendre2);
        let norm = raw.norm_sq().sqrt();
        let surface = GridSurface::from_fn(&grid, |a, b| legendre2(a) * legendre2(b) / (norm * norm));
        let eig = eigensystem(&surface).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-6);
        assert!(eig.values.iter().skip(1).all(|v| *v < 1e-10));
        assert!(eigensystem(&GridSurface::zeros(&grid)).unwrap().is_empty());
    }

    #[test]
    fn rejects_asymmetric_surface() {
        let grid = Grid::unit(11).unwrap();
        let s = GridSurface::from_fn(&grid, |a, b| a + 2.0 * b);
        assert!(matches!(eigensystem(&s).unwrap_err(), Error::NotSymmetric { .. }));
    }

    #[test]
    fn sign_convention() {
        let grid = Grid::unit(51).unwrap();
        let s = GridSurface::from_fn(&grid, |a, b| (1.0 - a) * (1.0 - b) + 0.5 * legendre2(a) * legendre2(b));
        let eig = eigensystem(&s).unwrap();
        for f in &eig.functions {
            let i = f.integral();
            assert!(i > 0.0 || (i.abs() < 1e-8 && f.values[0] > 0.0));
        }
    }

    #[test]
    fn scores_vanish_at_the_mean() {
        let data = dense_dataset(3, 7, |_, t| t);
        let grid = Grid::unit(21).unwrap();
        let mean = GridFunction::from_fn(&grid, |t| t);
        let cov = GridSurface::from_fn(&grid, |a, b| 1.0 + a * b);
        let eig = eigensystem(&cov).unwrap();
        let scores = pace_scores(&data, &mean, &cov, 0.1, &eig, 2).unwrap();
        assert!(scores.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn eigenfunction_derivative_of_linear_legendre() {
        let grid = Grid::unit(101).unwrap();
        let lambda = 2.0;
        let g = GridSurface::from_fn(&grid, |a, b| lambda * legendre2(a) * legendre2(b));
        let g10 = GridSurface::from_fn(&grid, |a, b| lambda * 2.0 * 3f64.sqrt() * legendre2(b) + 0.0 * a);
        let eig = eigensystem(&g).unwrap();
        let d = eigenfunction_derivative(&g10, &eig, 0).unwrap();
        let expect = 2.0 * 3f64.sqrt();
        assert!(d.values.iter().all(|v| (v.abs() - expect).abs() < 2e-2));
        let zero = eigenfunction_derivative(&GridSurface::zeros(&grid), &eig, 0).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        assert!(matches!(eigenfunction_derivative(&g10, &eig, 3), Err(Error::ZeroEigenvalue { .. })));
    }

    #[test]
    fn reconstruction_is_linear_in_scores() {
        let grid = Grid::unit(11).unwrap();
        let mu = GridFunction::from_fn(&grid, |t| t * t);
        let f = vec![GridFunction::from_fn(&grid, |t| t), GridFunction::from_fn(&grid, |_| 1.0)];
        let s = ScoreMatrix::from_rows(&[vec![0.0, 0.0], vec![1.5, -2.0]], 2).unwrap();
        let rec = fpca_reconstruct_derivative(&mu, &s, &f, 2).unwrap();
        assert_eq!(rec[0].values, mu.values);
        let doubled = ScoreMatrix::from_rows(&[vec![0.0, 0.0], vec![3.0, -2.0]], 2).unwrap();
        let rec2 = fpca_reconstruct_derivative(&mu, &doubled, &f, 2).unwrap();
        for (j, &t) in grid.points().iter().enumerate() {
            assert!((rec2[1].values[j] - rec[1].values[j] - 1.5 * t).abs() < 1e-14);
        }
        assert!(matches!(
            fpca_reconstruct_derivative(&mu, &s, &f, 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
