//! Derivative principal components: estimate `G^(1,0)` and `G^(1,1)`,
//! decompose the derivative covariance, predict DPC scores by BLUP and
//! reconstruct derivative trajectories.
//!
//! The default staged estimator differentiates the positive part of the
//! smoothed covariance surface along `s` (local quadratic, first derivative) to obtain
//! `Ĝ^(1,0)`, then differentiates that along `t` to obtain `Ĝ^(1,1)`.
//! The direct estimator fits bivariate local polynomials to the raw
//! covariances instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result, StageExt};
use crate::fpca::{
    blup_kernels, cv_bandwidth_cov, eigenfunction_derivative, eigensystem, fitted_covariance, estimate_cov_surface, estimate_mean_and_derivative,
    estimate_cov_diagonal, estimate_sigma2, pooled_observations, raw_covariances, reconstruct, scores_from_kernels, EigenSystem, EIGEN_REL_TOL,
    ScoreMatrix,
};
use crate::grid::{Grid, GridFunction, GridSurface, DEFAULT_GRID_LEN};
use crate::smoothing::{
    gcv_bandwidth_1d, gcv_bandwidth_2d, local_poly_1d_at, local_poly_2d, Kernel, LocalFitSpec, ScatterData2D,
};

/// How the covariance derivative surfaces are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingMode {
    /// Differentiate the smoothed covariance grid one direction at a time.
    #[default]
    Staged,
    /// Bivariate local polynomial on the raw covariances.
    Direct,
}

/// A bandwidth, either fixed or chosen by GCV.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            _ => Err(Error::InvalidInput(format!("bandwidth must be 'auto' or a positive number, got '{s}'"))),
        }
    }
}

/// Criterion for an automatic covariance bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovSelector {
    /// Subject-wise cross-validation with [`COV_FOLDS`] folds.
    #[default]
    Cv,
    Gcv,
}

impl std::str::FromStr for CovSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(CovSelector::Cv),
            "gcv" => Ok(CovSelector::Gcv),
            _ => Err(Error::InvalidInput(format!("covariance selector must be 'cv' or 'gcv', got '{s}'"))),
        }
    }
}

/// Number of components to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KPolicy {
    /// Smallest `K` whose cumulative FVE reaches the threshold.
    Fve(f64),
    Fixed(usize),
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Fve(0.9)
    }
}

/// Bandwidth candidates, as fractions of the domain width, for the mean smoother.
pub const MEAN_CANDIDATES: [f64; 10] = [0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2, 0.25];
/// Bandwidth candidates, as fractions of the domain width, for the covariance smoother.
pub const COV_CANDIDATES: [f64; 10] = [0.04, 0.05, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2, 0.25, 0.3];
/// Folds of the subject-wise covariance bandwidth search.
pub const COV_FOLDS: usize = 10;
/// Floor on the error variance used by the score predictors, as a fraction
/// of the mean trajectory variance `∫Ĝ(t,t)dt / |𝒯|`.
pub const SIGMA2_FLOOR_FRAC: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpcaConfig {
    pub grid_len: usize,
    pub kernel: Kernel,
    pub h_mean: Bandwidth,
    pub h_cov: Bandwidth,
    #[serde(default)]
    pub cov_selector: CovSelector,
    /// Diagonal variance smoother; defaults to the covariance bandwidth.
    pub h_sigma: Option<f64>,
    pub mode: SmoothingMode,
    pub fpc_k: KPolicy,
    pub dpc_k: KPolicy,
    /// Upper bound on stored components and scores.
    pub max_components: usize,
}

impl Default for DpcaConfig {
    fn default() -> Self {
        DpcaConfig {
            grid_len: DEFAULT_GRID_LEN,
            kernel: Kernel::Gaussian,
            h_mean: Bandwidth::Auto,
            h_cov: Bandwidth::Auto,
            cov_selector: CovSelector::Cv,
            h_sigma: None,
            mode: SmoothingMode::Staged,
            fpc_k: KPolicy::default(),
            dpc_k: KPolicy::default(),
            max_components: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub mean: f64,
    pub cov: f64,
    pub sigma: f64,
}

/// A fitted model; immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpcaFit {
    pub grid: Grid,
    pub domain: (f64, f64),
    pub subject_ids: Vec<String>,
    pub bandwidths: Bandwidths,
    pub config: DpcaConfig,
    pub mean: GridFunction,
    pub mean_deriv: GridFunction,
    pub cov: GridSurface,
    /// Positive part of `cov` rebuilt from its eigensystem; the staged
    /// derivative surfaces and the scores are computed from it.
    pub cov_fitted: GridSurface,
    pub cov10: GridSurface,
    pub cov11: GridSurface,
    pub sigma2: f64,
    /// Error variance used for the FPC and DPC scores: `σ̂²` raised to
    /// [`SIGMA2_FLOOR_FRAC`] of the mean trajectory variance when smaller.
    pub sigma2_scores: f64,
    /// Trajectory eigensystem `(λ̂_k, φ̂_k)`.
    pub trajectory: EigenSystem,
    /// Eigenfunction derivatives `φ̂_k′`, aligned with `trajectory`.
    pub trajectory_derivs: Vec<GridFunction>,
    /// Derivative eigensystem `(λ̂_{k,1}, φ̂_{k,1})`.
    pub derivative: EigenSystem,
    pub fpc_scores: ScoreMatrix,
    pub dpc_scores: ScoreMatrix,
    pub fve_dpca: Vec<f64>,
    pub fve_fpca: Vec<f64>,
    pub k_fpc: usize,
    pub k_dpc: usize,
}

impl DpcaFit {
    /// DPCA derivative reconstruction with `k` components.
    pub fn derivative_curves(&self, k: usize) -> Result<Vec<GridFunction>> {
        reconstruct_derivative(&self.mean_deriv, &self.dpc_scores, &self.derivative.functions, k)
    }

    /// FPCA derivative reconstruction with `k` components.
    pub fn fpca_derivative_curves(&self, k: usize) -> Result<Vec<GridFunction>> {
        reconstruct(&self.mean_deriv, &self.fpc_scores, &self.trajectory_derivs, k)
    }

    /// Largest `K` for which the variance inequality is violated, with its
    /// relative gap; `None` when it holds within `rel_tol` for every `K`.
    pub fn eigen_inequality_violation(&self, rel_tol: f64) -> Option<(usize, f64)> {
        eigen_inequality_violation(&self.derivative, &self.trajectory, &self.trajectory_derivs, rel_tol)
    }
}

/// Checks `∑_{k≤K} λ_{k,1} ≥ ∑_{k≤K} λ_k‖φ_k′‖²` up to `rel_tol` (relative to the left side plus 1e-8 absolute).
pub fn eigen_inequality_violation(
    derivative: &EigenSystem,
    trajectory: &EigenSystem,
    trajectory_derivs: &[GridFunction],
    rel_tol: f64,
) -> Option<(usize, f64)> {
    let kmax = trajectory_derivs.len().min(trajectory.len());
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for k in 0..kmax {
        lhs += derivative.values.get(k).copied().unwrap_or(0.0);
        rhs += trajectory.values[k] * trajectory_derivs[k].norm_sq();
        if lhs + 1e-8 + rel_tol * lhs.abs() < rhs {
            return Some((k + 1, (rhs - lhs) / lhs.abs().max(1e-300)));
        }
    }
    None
}

/// `Ĝ^(1,0)` on the grid.
///
/// Staged: local quadratic, first derivative, along `s` for each fixed `t`
/// column of `cov`. Direct: degree-2 bivariate fit of `raw` targeting `(1,0)`.
pub fn estimate_g10(
    cov: Option<&GridSurface>,
    raw: Option<&ScatterData2D>,
    h: f64,
    kernel: Kernel,
    grid: &Grid,
    mode: SmoothingMode,
) -> Result<GridSurface> {
    match mode {
        SmoothingMode::Staged => {
            let cov = cov.ok_or_else(|| Error::InvalidInput("staged mode needs the covariance surface".into()))?;
            differentiate_columns(cov, h, kernel)
        }
        SmoothingMode::Direct => {
            let raw = raw.ok_or_else(|| Error::InvalidInput("direct mode needs raw covariances".into()))?;
            local_poly_2d(raw, 2, (1, 0), h, kernel, grid)
        }
    }
}

/// `Ĝ^(1,1)` on the grid, symmetrized.
///
/// Staged: local quadratic, first derivative, along `t` for each fixed `s`
/// row of `g10`. Direct: degree-3 bivariate fit of `raw` targeting `(1,1)`.
pub fn estimate_g11(
    g10: Option<&GridSurface>,
    raw: Option<&ScatterData2D>,
    h: f64,
    kernel: Kernel,
    grid: &Grid,
    mode: SmoothingMode,
) -> Result<GridSurface> {
    let out = match mode {
        SmoothingMode::Staged => {
            let g10 = g10.ok_or_else(|| Error::InvalidInput("staged mode needs G10".into()))?;
            let t = GridSurface::new(g10.grid.clone(), g10.values.transpose())?;
            let d = differentiate_columns(&t, h, kernel)?;
            GridSurface::new(d.grid.clone(), d.values.transpose())?
        }
        SmoothingMode::Direct => {
            let raw = raw.ok_or_else(|| Error::InvalidInput("direct mode needs raw covariances".into()))?;
            local_poly_2d(raw, 3, (1, 1), h, kernel, grid)?
        }
    };
    Ok(out.symmetrized())
}

/// Derivative along the first argument of every column.
fn differentiate_columns(surface: &GridSurface, h: f64, kernel: Kernel) -> Result<GridSurface> {
    let grid = &surface.grid;
    let m = grid.len();
    let spec = LocalFitSpec::new(2, 1, h, kernel)?;
    let mut out = DMatrix::zeros(m, m);
    for j in 0..m {
        let col: Vec<f64> = surface.values.column(j).iter().copied().collect();
        let data = crate::smoothing::ScatterData1D::unweighted(grid.points().to_vec(), col)?;
        let d = local_poly_1d_at(&data, &spec, grid.points())?;
        out.set_column(j, &DVector::from_vec(d));
    }
    GridSurface::new(grid.clone(), out)
}

/// Same contract as [`eigensystem`], applied to `Ĝ^(1,1)`, with components
/// at or below `EIGEN_REL_TOL · scale` also dropped. `scale` ties the cutoff to
/// the trajectory spectrum (`λ̂₁ / width²`), so a derivative surface made of
/// roundoff yields an empty system.
pub fn derivative_eigensystem(g11: &GridSurface, scale: f64) -> Result<EigenSystem> {
    let eig = eigensystem(g11)?;
    let keep = eig.values.iter().take_while(|&&v| v > EIGEN_REL_TOL * scale).count();
    Ok(eig.truncated(keep))
}

/// `ζ̂_j = ∫ Ĝ^(1,0)(s, T_j) φ̂_{k,1}(s) ds` for every observation time.
pub fn zeta_vector(g10: &GridSurface, phi: &GridFunction, times: &[f64]) -> Result<Vec<f64>> {
    let grid = &g10.grid;
    if phi.grid != *grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: phi.grid.len(),
        });
    }
    let w = grid.weights();
    times
        .iter()
        .map(|&t| {
            if !grid.contains(t) {
                return Err(Error::TimeOutOfDomain {
                    time: t,
                    lo: grid.start(),
                    hi: grid.end(),
                });
            }
            let col = g10.column_at(t);
            Ok(col.iter().zip(&phi.values).zip(&w).map(|((g, p), w)| w * g * p).sum())
        })
        .collect()
}

/// `ξ̂_{ik,1} = ζ̂_ikᵀ Σ̂_{Y_i}^{-1}(Y_i − μ̂_i)` for `k ≤ K`, with the same
/// ridged covariance as the PACE scores.
pub fn dpc_scores(
    data: &LongitudinalDataset,
    mean: &GridFunction,
    cov: &GridSurface,
    sigma2: f64,
    g10: &GridSurface,
    derivative: &EigenSystem,
    k: usize,
) -> Result<ScoreMatrix> {
    let kernels = blup_kernels(data, mean, cov, sigma2)?;
    dpc_scores_from_kernels(data, &kernels, g10, derivative, k)
}

fn dpc_scores_from_kernels(
    data: &LongitudinalDataset,
    kernels: &[DVector<f64>],
    g10: &GridSurface,
    derivative: &EigenSystem,
    k: usize,
) -> Result<ScoreMatrix> {
    if k > derivative.len() {
        return Err(Error::DimensionMismatch {
            expected: derivative.len(),
            found: k,
        });
    }
    let mut values = DMatrix::zeros(data.n_subjects(), k);
    for (i, (subject, z)) in data.subjects.iter().zip(kernels).enumerate() {
        for c in 0..k {
            let zeta = zeta_vector(g10, &derivative.functions[c], &subject.times)?;
            values[(i, c)] = zeta.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        }
    }
    Ok(ScoreMatrix { values })
}

/// `X̂_{i,K}′(t) = μ̂′(t) + ∑_{k≤K} ξ̂_{ik,1} φ̂_{k,1}(t)`.
pub fn reconstruct_derivative(
    mean_deriv: &GridFunction,
    scores: &ScoreMatrix,
    functions: &[GridFunction],
    k: usize,
) -> Result<Vec<GridFunction>> {
    reconstruct(mean_deriv, scores, functions, k)
}

/// Cumulative fractions of derivative variance: DPCA uses `λ_{k,1}`, FPCA
/// uses `λ_k‖φ_k′‖²`; both divide by `∑ λ_{k,1}`.
pub fn fve_curves(
    derivative: &EigenSystem,
    trajectory: &EigenSystem,
    trajectory_derivs: &[GridFunction],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if derivative.is_empty() || trajectory.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let total = derivative.total();
    let mut acc = 0.0;
    let dpca = derivative
        .values
        .iter()
        .map(|v| {
            acc += v;
            (acc / total).min(1.0)
        })
        .collect();
    let mut acc = 0.0;
    let fpca = trajectory
        .values
        .iter()
        .zip(trajectory_derivs)
        .map(|(l, d)| {
            acc += l * d.norm_sq();
            acc / total
        })
        .collect();
    Ok((dpca, fpca))
}

/// Smallest `K` (1-based) with `fve[K-1] ≥ threshold`; the full length when none does.
pub fn select_k_fve(fve: &[f64], threshold: f64) -> usize {
    fve.iter()
        .position(|&v| v >= threshold)
        .map(|i| i + 1)
        .unwrap_or(fve.len())
}

fn resolve_k(policy: KPolicy, fve: &[f64], available: usize) -> Result<usize> {
    match policy {
        KPolicy::Fve(thr) => {
            if !(thr > 0.0 && thr <= 1.0) {
                return Err(Error::InvalidInput(format!("FVE threshold must lie in (0, 1], got {thr}")));
            }
            Ok(select_k_fve(&fve[..available.min(fve.len())], thr))
        }
        KPolicy::Fixed(k) if k <= available => Ok(k),
        KPolicy::Fixed(k) => Err(Error::DimensionMismatch {
            expected: available,
            found: k,
        }),
    }
}

/// Candidate bandwidths scaled to a domain of the given width.
pub fn candidates(fractions: &[f64], width: f64) -> Vec<f64> {
    fractions.iter().map(|f| f * width).collect()
}

/// Runs the full pipeline: mean and derivative, raw covariances, covariance
/// surface, error variance, trajectory eigensystem, `Ĝ^(1,0)`, `Ĝ^(1,1)`,
/// derivative eigensystem, then FPC and DPC scores.
pub fn fit_dpca(data: &LongitudinalDataset, config: &DpcaConfig) -> Result<DpcaFit> {
    if config.grid_len < 2 {
        return Err(Error::InvalidInput("grid needs at least 2 points".into()));
    }
    let (lo, hi) = data.domain;
    let width = hi - lo;
    let grid = Grid::new(lo, hi, config.grid_len)?;
    let kernel = config.kernel;

    let h_mean = match config.h_mean {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => {
            let pooled = pooled_observations(data).stage("mean")?;
            gcv_bandwidth_1d(&pooled, 2, kernel, &candidates(&MEAN_CANDIDATES, width))
                .stage("mean bandwidth")?
                .bandwidth
        }
    };
    let (mean, mean_deriv) = estimate_mean_and_derivative(data, h_mean, kernel, &grid).stage("mean")?;

    let raw = raw_covariances(data, &mean).stage("covariance")?;
    let h_cov = match config.h_cov {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => {
            let cands = candidates(&COV_CANDIDATES, width);
            match config.cov_selector {
                CovSelector::Cv => cv_bandwidth_cov(data, &raw, kernel, &cands, COV_FOLDS),
                CovSelector::Gcv => gcv_bandwidth_2d(&raw, kernel, &cands),
            }
            .stage("covariance bandwidth")?
            .bandwidth
        }
    };
    let cov = estimate_cov_surface(&raw, h_cov, kernel, &grid).stage("covariance")?;
    let h_sigma = config.h_sigma.unwrap_or(h_cov);
    let diagonal = estimate_cov_diagonal(&raw, h_sigma, kernel, &grid).stage("error variance")?;
    let sigma2 = estimate_sigma2(data, &mean, &diagonal, h_sigma, kernel, &grid).stage("error variance")?;

    let trajectory_full = eigensystem(&cov).stage("trajectory eigen")?;
    let cov_fitted = fitted_covariance(&trajectory_full, &grid);
    let cov10 = estimate_g10(Some(&cov_fitted), Some(&raw), h_cov, kernel, &grid, config.mode).stage("G10")?;
    let cov11 = estimate_g11(Some(&cov10), Some(&raw), h_cov, kernel, &grid, config.mode).stage("G11")?;
    let scale = trajectory_full.values.first().copied().unwrap_or(0.0) / (width * width);
    let derivative_full = derivative_eigensystem(&cov11, scale).stage("derivative eigen")?;

    let n_traj = trajectory_full.len().min(config.max_components);
    let trajectory_derivs = (0..n_traj)
        .map(|k| eigenfunction_derivative(&cov10, &trajectory_full, k))
        .collect::<Result<Vec<_>>>()
        .stage("eigenfunction derivatives")?;
    let (fve_dpca, fve_fpca) = if derivative_full.is_empty() || trajectory_full.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let (d, f) = fve_curves(&derivative_full, &trajectory_full, &trajectory_derivs).stage("fve")?;
        (d.into_iter().take(config.max_components).collect(), f)
    };
    let trajectory = trajectory_full.truncated(n_traj);
    let derivative = derivative_full.truncated(config.max_components);

    let k_fpc = resolve_k(config.fpc_k, &fve_fpca, trajectory.len()).stage("component selection")?;
    let k_dpc = resolve_k(config.dpc_k, &fve_dpca, derivative.len()).stage("component selection")?;

    let sigma2_scores = sigma2.max(SIGMA2_FLOOR_FRAC * trajectory_full.total() / width);
    let kernels = blup_kernels(data, &mean, &cov_fitted, sigma2_scores).stage("scores")?;
    let fpc_scores = scores_from_kernels(data, &kernels, &trajectory, trajectory.len()).stage("scores")?;
    let dpc_scores = dpc_scores_from_kernels(data, &kernels, &cov10, &derivative, derivative.len()).stage("scores")?;

    Ok(DpcaFit {
        grid,
        domain: data.domain,
        subject_ids: data.ids(),
        bandwidths: Bandwidths {
            mean: h_mean,
            cov: h_cov,
            sigma: h_sigma,
        },
        config: config.clone(),
        mean,
        mean_deriv,
        cov,
        cov_fitted,
        cov10,
        cov11,
        sigma2,
        sigma2_scores,
        trajectory,
        trajectory_derivs,
        derivative,
        fpc_scores,
        dpc_scores,
        fve_dpca,
        fve_fpca,
        k_fpc,
        k_dpc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_k_rules() {
        assert_eq!(select_k_fve(&[0.56, 0.77, 0.92, 1.0], 0.9), 3);
        assert_eq!(select_k_fve(&[1.0], 0.9), 1);
        assert_eq!(select_k_fve(&[0.5, 0.8], 0.9), 2);
    }

    #[test]
    fn staged_partials_of_product_surface() {
        let grid = Grid::unit(51).unwrap();
        let g = GridSurface::from_fn(&grid, |s, t| s * t);
        let g10 = estimate_g10(Some(&g), None, 0.1, Kernel::Gaussian, &grid, SmoothingMode::Staged).unwrap();
        let truth10 = GridSurface::from_fn(&grid, |_, t| t);
        assert!((&g10.values - &truth10.values).abs().max() < 1e-6);
        let g11 = estimate_g11(Some(&g10), None, 0.1, Kernel::Gaussian, &grid, SmoothingMode::Staged).unwrap();
        assert!(g11.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
        let z = estimate_g10(Some(&GridSurface::zeros(&grid)), None, 0.1, Kernel::Gaussian, &grid, SmoothingMode::Staged)
            .unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn staged_needs_surface() {
        let grid = Grid::unit(11).unwrap();
        assert!(estimate_g10(None, None, 0.1, Kernel::Gaussian, &grid, SmoothingMode::Staged).is_err());
        assert!(estimate_g11(None, None, 0.1, Kernel::Gaussian, &grid, SmoothingMode::Direct).is_err());
    }

    #[test]
    fn zeta_of_separable_surface() {
        let grid = Grid::unit(101).unwrap();
        let a = |s: f64| 1.0 + s * s;
        let b = |t: f64| (3.0 * t).cos();
        let g10 = GridSurface::from_fn(&grid, |s, t| a(s) * b(t));
        let phi = GridFunction::from_fn(&grid, |s| 2.0 * s - 1.0);
        let inner = GridFunction::from_fn(&grid, a).inner(&phi);
        let times = [0.0, 0.2, 0.5, 0.6];
        let z = zeta_vector(&g10, &phi, &times).unwrap();
        for (zj, &t) in z.iter().zip(&times) {
            // grid nodes are exact; interior times carry interpolation error in b
            assert!((zj - inner * b(t)).abs() < 1e-6 || !grid.points().contains(&t));
        }
        assert!(zeta_vector(&GridSurface::zeros(&grid), &phi, &times).unwrap().iter().all(|v| *v == 0.0));
        assert!(matches!(zeta_vector(&g10, &phi, &[1.5]), Err(Error::TimeOutOfDomain { .. })));
    }

    #[test]
    fn fve_of_single_component() {
        let grid = Grid::unit(21).unwrap();
        let eig = EigenSystem {
            values: vec![2.0],
            functions: vec![GridFunction::from_fn(&grid, |_| 1.0)],
        };
        let (d, _) = fve_curves(&eig, &eig, &[GridFunction::zeros(&grid)]).unwrap();
        assert_eq!(d, vec![1.0]);
        let empty = EigenSystem {
            values: vec![],
            functions: vec![],
        };
        assert_eq!(fve_curves(&empty, &eig, &[]).unwrap_err(), Error::EmptySpectrum);
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("auto".parse::<Bandwidth>().unwrap(), Bandwidth::Auto);
        assert_eq!("0.1".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.1));
        assert!("-1".parse::<Bandwidth>().is_err());
    }
}
