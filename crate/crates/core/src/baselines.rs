//! Per-curve derivative estimators used as comparators on dense designs:
//! smoothed difference quotients (SMOOTH-DQ), local quadratic fits to each
//! curve (LOCAL), and the population mean derivative.

use serde::{Deserialize, Serialize};

use crate::dpca::{Bandwidth, DpcaFit};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::smoothing::{local_poly_1d_at, Kernel, LocalFitSpec, ScatterData1D};

/// Bandwidth candidates for the difference-quotient criterion, as fractions of the curve's time span.
pub const DQ_CANDIDATES: [f64; 12] = [0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2, 0.25, 0.3];

/// One densely observed curve.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DenseCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("curve times must be strictly increasing".into()));
        }
        Ok(DenseCurve { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn span(&self) -> f64 {
        self.times.last().unwrap_or(&0.0) - self.times.first().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DqMethod {
    /// Local quadratic fit to the curve, first derivative.
    Local,
    /// Local linear smooth of the difference quotients.
    SmoothDq,
}

/// Quotients `(y_{j+1} − y_j)/(t_{j+1} − t_j)` located at interval midpoints.
pub fn difference_quotients(curve: &DenseCurve) -> Result<(Vec<f64>, Vec<f64>)> {
    if curve.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: curve.len(),
        });
    }
    let mids = curve.times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let quotients = curve
        .times
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
        .collect();
    Ok((mids, quotients))
}

fn require_three(curve: &DenseCurve) -> Result<()> {
    if curve.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: curve.len(),
        });
    }
    Ok(())
}

fn estimate_at(curve: &DenseCurve, method: DqMethod, h: f64, kernel: Kernel, points: &[f64]) -> Result<Vec<f64>> {
    require_three(curve)?;
    match method {
        DqMethod::Local => {
            let data = ScatterData1D::unweighted(curve.times.clone(), curve.values.clone())?;
            local_poly_1d_at(&data, &LocalFitSpec::new(2, 1, h, kernel)?, points)
        }
        DqMethod::SmoothDq => {
            let (mids, q) = difference_quotients(curve)?;
            let data = ScatterData1D::unweighted(mids, q)?;
            local_poly_1d_at(&data, &LocalFitSpec::new(1, 0, h, kernel)?, points)
        }
    }
}

fn resolve(curve: &DenseCurve, method: DqMethod, h: Bandwidth, kernel: Kernel) -> Result<f64> {
    match h {
        Bandwidth::Fixed(h) => Ok(h),
        Bandwidth::Auto => {
            let cands: Vec<f64> = DQ_CANDIDATES.iter().map(|f| f * curve.span()).collect();
            cv_bandwidth_dq(std::slice::from_ref(curve), method, &cands, kernel)
        }
    }
}

/// Local linear smoothing of the difference quotients.
pub fn smooth_dq(curve: &DenseCurve, h: Bandwidth, kernel: Kernel, grid: &Grid) -> Result<GridFunction> {
    let h = resolve(curve, DqMethod::SmoothDq, h, kernel)?;
    GridFunction::new(grid.clone(), estimate_at(curve, DqMethod::SmoothDq, h, kernel, grid.points())?)
}

/// First derivative of a local quadratic fit to the curve.
pub fn local_deriv(curve: &DenseCurve, h: Bandwidth, kernel: Kernel, grid: &Grid) -> Result<GridFunction> {
    let h = resolve(curve, DqMethod::Local, h, kernel)?;
    GridFunction::new(grid.clone(), estimate_at(curve, DqMethod::Local, h, kernel, grid.points())?)
}

/// Prediction of quotient `j` from the curve with the two observations
/// forming it removed, so the prediction is independent of its noise.
fn held_out_estimate(curve: &DenseCurve, method: DqMethod, h: f64, kernel: Kernel, mid: f64, j: usize) -> Result<f64> {
    let keep = |i: &usize| *i != j && *i != j + 1;
    let times = (0..curve.len()).filter(keep).map(|i| curve.times[i]).collect();
    let values = (0..curve.len()).filter(keep).map(|i| curve.values[i]).collect();
    let reduced = DenseCurve { times, values };
    Ok(estimate_at(&reduced, method, h, kernel, &[mid])?[0])
}

/// Average over curves of the mean squared deviation between the
/// leave-out derivative estimate at each quotient midpoint and the raw
/// quotient there.
pub fn cv_score_dq(curves: &[DenseCurve], method: DqMethod, h: f64, kernel: Kernel) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::InvalidInput("no curves supplied".into()));
    }
    let per_curve = curves
        .iter()
        .map(|c| {
            if c.len() < 5 {
                return Err(Error::TooFewPoints {
                    needed: 5,
                    found: c.len(),
                });
            }
            let (mids, q) = difference_quotients(c)?;
            let mut ss = 0.0;
            for j in 0..q.len() {
                ss += (held_out_estimate(c, method, h, kernel, mids[j], j)? - q[j]).powi(2);
            }
            Ok(ss / q.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_curve.iter().sum::<f64>() / curves.len() as f64)
}

/// Candidate minimizing [`cv_score_dq`]; ties go to the smallest candidate.
pub fn cv_bandwidth_dq(curves: &[DenseCurve], method: DqMethod, candidates: &[f64], kernel: Kernel) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let scores: Vec<(f64, f64)> = sorted
        .iter()
        .filter_map(|&h| cv_score_dq(curves, method, h, kernel).ok().map(|s| (h, s)))
        .collect();
    let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::AllDegenerate);
    }
    let tol = 1e-10 * best.abs() + 1e-14;
    Ok(scores.iter().find(|s| s.1 <= best + tol).expect("best present").0)
}

/// Every subject's derivative estimated by `μ̂′`.
pub fn mean_derivative_baseline(fit: &DpcaFit) -> Vec<GridFunction> {
    vec![fit.mean_deriv.clone(); fit.subject_ids.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(f: impl Fn(f64) -> f64, m: usize) -> DenseCurve {
        let t: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let y = t.iter().map(|&x| f(x)).collect();
        DenseCurve::new(t, y).unwrap()
    }

    #[test]
    fn quotients_of_lines_and_quadratics() {
        let (_, q) = difference_quotients(&curve(|t| 3.0 * t, 11)).unwrap();
        assert!(q.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let (m, q) = difference_quotients(&curve(|t| t * t, 11)).unwrap();
        for (mi, qi) in m.iter().zip(&q) {
            assert!((qi - 2.0 * mi).abs() < 1e-12);
        }
        let two = DenseCurve::new(vec![0.0, 0.5], vec![1.0, 2.0]).unwrap();
        assert_eq!(difference_quotients(&two).unwrap().1, vec![2.0]);
        let one = DenseCurve::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(difference_quotients(&one), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn smooth_dq_on_quadratic_and_constant() {
        let grid = Grid::unit(21).unwrap();
        let d = smooth_dq(&curve(|t| t * t, 51), Bandwidth::Fixed(0.1), Kernel::Gaussian, &grid).unwrap();
        for (v, t) in d.values.iter().zip(grid.points()) {
            assert!((v - 2.0 * t).abs() < 1e-6);
        }
        let c = smooth_dq(&curve(|_| 4.0, 51), Bandwidth::Fixed(0.1), Kernel::Gaussian, &grid).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn local_deriv_on_quadratic_and_constant() {
        let grid = Grid::unit(21).unwrap();
        let d = local_deriv(&curve(|t| t * t, 51), Bandwidth::Fixed(0.07), Kernel::Gaussian, &grid).unwrap();
        for (v, t) in d.values.iter().zip(grid.points()) {
            assert!((v - 2.0 * t).abs() < 1e-8);
        }
        let c = local_deriv(&curve(|_| -1.0, 51), Bandwidth::Auto, Kernel::Gaussian, &grid).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn refuses_short_curves() {
        let grid = Grid::unit(5).unwrap();
        let c = DenseCurve::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            local_deriv(&c, Bandwidth::Fixed(0.5), Kernel::Gaussian, &grid),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn noiseless_quadratics_tie_to_smallest() {
        let curves = vec![curve(|t| t * t, 51), curve(|t| 2.0 - t * t, 51)];
        let h = cv_bandwidth_dq(&curves, DqMethod::Local, &[0.2, 0.1, 0.05], Kernel::Gaussian).unwrap();
        assert_eq!(h, 0.05);
        assert_eq!(cv_bandwidth_dq(&curves, DqMethod::SmoothDq, &[0.3], Kernel::Gaussian).unwrap(), 0.3);
        assert_eq!(
            cv_bandwidth_dq(&curves, DqMethod::SmoothDq, &[], Kernel::Gaussian).unwrap_err(),
            Error::EmptyCandidates
        );
    }

    #[test]
    fn smooth_dq_ignores_vertical_shift() {
        let grid = Grid::unit(11).unwrap();
        let a = curve(|t| (4.0 * t).sin(), 31);
        let b = DenseCurve::new(a.times.clone(), a.values.iter().map(|v| v + 17.5).collect()).unwrap();
        let da = smooth_dq(&a, Bandwidth::Fixed(0.1), Kernel::Gaussian, &grid).unwrap();
        let db = smooth_dq(&b, Bandwidth::Fixed(0.1), Kernel::Gaussian, &grid).unwrap();
        // quotients of the shifted curve agree up to rounding of the shift
        for (x, y) in da.values.iter().zip(&db.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
