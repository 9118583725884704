use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// Orthonormal shifted Legendre polynomial of order `k ≥ 1` on `[0, 1]` and its derivative.
///
/// `φ_k(t) = √(2k−1)·P_{k−1}(2t−1)`.
pub fn legendre(k: usize, t: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::UnsupportedOrder(k));
    }
    let n = k - 1;
    let x = 2.0 * t - 1.0;
    // P_n and P_n' by the three-term recurrence
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    let (p, d) = if n == 0 {
        (1.0, 0.0)
    } else {
        for j in 1..n {
            let jf = j as f64;
            let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
            let d2 = d0 + (2.0 * jf + 1.0) * p1;
            p0 = p1;
            p1 = p2;
            d0 = d1;
            d1 = d2;
        }
        (p1, d1)
    };
    let c = ((2 * k - 1) as f64).sqrt();
    Ok((c * p, 2.0 * c * d))
}

/// `φ_k` and `φ_k′` on a grid.
pub fn legendre_basis(k: usize, grid: &Grid) -> Result<(GridFunction, GridFunction)> {
    let mut v = Vec::with_capacity(grid.len());
    let mut d = Vec::with_capacity(grid.len());
    for &t in grid.points() {
        let (a, b) = legendre(k, t)?;
        v.push(a);
        d.push(b);
    }
    Ok((GridFunction::new(grid.clone(), v)?, GridFunction::new(grid.clone(), d)?))
}

const BUMP_SD: f64 = 0.1;

/// Simulation model on `[0, 1]`: Gaussian-bump-plus-trend mean, Legendre
/// eigenfunctions, centered Gaussian scores with variances `eigenvalues`,
/// Gaussian measurement error with standard deviation `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub eigenvalues: Vec<f64>,
    pub sigma: f64,
}

impl SimModel {
    /// Eigenvalues `(3, 2, 1, 0.1, 0.1)`.
    pub fn standard(sigma: f64) -> Self {
        SimModel {
            eigenvalues: vec![3.0, 2.0, 1.0, 0.1, 0.1],
            sigma,
        }
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `μ(t) = 4t + (0.02π)^{-1/2} exp{−(t−0.5)²/(2·0.1²)}`.
    pub fn mean(&self, t: f64) -> f64 {
        4.0 * t + (0.02 * PI).powf(-0.5) * (-(t - 0.5).powi(2) / (2.0 * BUMP_SD * BUMP_SD)).exp()
    }

    pub fn mean_deriv(&self, t: f64) -> f64 {
        let bump = (0.02 * PI).powf(-0.5) * (-(t - 0.5).powi(2) / (2.0 * BUMP_SD * BUMP_SD)).exp();
        4.0 - bump * (t - 0.5) / (BUMP_SD * BUMP_SD)
    }

    /// `X(t) = μ(t) + ∑ ξ_k φ_k(t)`.
    pub fn trajectory(&self, scores: &[f64], t: f64) -> f64 {
        self.mean(t)
            + scores
                .iter()
                .enumerate()
                .map(|(k, xi)| xi * legendre(k + 1, t).expect("k >= 1").0)
                .sum::<f64>()
    }

    /// `X′(t) = μ′(t) + ∑ ξ_k φ_k′(t)`.
    pub fn derivative(&self, scores: &[f64], t: f64) -> f64 {
        self.mean_deriv(t)
            + scores
                .iter()
                .enumerate()
                .map(|(k, xi)| xi * legendre(k + 1, t).expect("k >= 1").1)
                .sum::<f64>()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.eigenvalues.is_empty() || self.eigenvalues.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidInput("eigenvalues must be nonnegative and nonempty".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid noise level {}", self.sigma)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_in_closed_form() {
        for &t in &[0.0, 0.3, 1.0] {
            assert_eq!(legendre(1, t).unwrap(), (1.0, 0.0));
            let (v, d) = legendre(2, t).unwrap();
            assert!((v - 3f64.sqrt() * (2.0 * t - 1.0)).abs() < 1e-14);
            assert!((d - 2.0 * 3f64.sqrt()).abs() < 1e-14);
            let (v, d) = legendre(3, t).unwrap();
            let x = 2.0 * t - 1.0;
            assert!((v - 5f64.sqrt() * 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-14);
            assert!((d - 5f64.sqrt() * 6.0 * x).abs() < 1e-13);
        }
        assert!((legendre(2, 1.0).unwrap().0 - 1.732_050_807_568_877).abs() < 1e-12);
        assert_eq!(legendre(0, 0.5).unwrap_err(), Error::UnsupportedOrder(0));
    }

    #[test]
    fn derivative_energy_of_linear_component() {
        let grid = Grid::unit(1001).unwrap();
        let (_, d) = legendre_basis(2, &grid).unwrap();
        assert!((d.norm_sq() - 12.0).abs() < 1e-10);
    }

    #[test]
    fn mean_derivative_at_bump_center() {
        let m = SimModel::standard(1.0);
        assert!((m.mean_deriv(0.5) - 4.0).abs() < 1e-14);
        assert!((m.mean(0.5) - (2.0 + (0.02 * PI).powf(-0.5))).abs() < 1e-12);
    }
}
