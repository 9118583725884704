//! Simulation models, data generators, error metrics and the Monte Carlo
//! benchmark runner.

mod benchmark;
mod generate;
mod model;

pub use benchmark::{child_seed, Cell, run_benchmark, BenchmarkConfig, Method, ReplicateOutcome, ReportRow, RmiseReport};
pub use generate::{generate, rmise, true_derivative, true_derivative_scores, DesignKind, SimDesign, Simulated};
pub use model::{legendre, legendre_basis, SimModel};

use crate::error::Result;
use crate::fpca::eigensystem;
use crate::grid::{Grid, GridSurface};

/// Grid used for population-level quantities.
pub const POPULATION_GRID_LEN: usize = 1001;

/// Population FVE sequences for `K = 1..=n_components`: DPCA
/// `∑_{k≤K} λ_{k,1} / ∑ λ_{k,1}` from the eigendecomposition of the exact
/// `G^(1,1)`, and FPCA `∑_{k≤K} λ_k ∫(φ_k′)² / ∑ λ_{k,1}`.
pub fn population_fve(model: &SimModel) -> Result<(Vec<f64>, Vec<f64>)> {
    model.validate()?;
    let grid = Grid::unit(POPULATION_GRID_LEN)?;
    let derivs = (1..=model.n_components())
        .map(|k| legendre_basis(k, &grid).map(|b| b.1))
        .collect::<Result<Vec<_>>>()?;
    let g11 = GridSurface::from_fn(&grid, |_, _| 0.0);
    let m = grid.len();
    let mut values = g11.values;
    for (lambda, d) in model.eigenvalues.iter().zip(&derivs) {
        for j in 0..m {
            let dj = lambda * d.values[j];
            for i in 0..m {
                values[(i, j)] += d.values[i] * dj;
            }
        }
    }
    let g11 = GridSurface::new(grid, values)?;
    let eig = eigensystem(&g11)?;
    let total = eig.total();
    let n = model.n_components();
    let mut dpca = Vec::with_capacity(n);
    let mut fpca = Vec::with_capacity(n);
    let (mut acc_d, mut acc_f) = (0.0, 0.0);
    for k in 0..n {
        acc_d += eig.values.get(k).copied().unwrap_or(0.0);
        acc_f += model.eigenvalues[k] * derivs[k].norm_sq();
        dpca.push((acc_d / total).min(1.0));
        fpca.push(acc_f / total);
    }
    Ok((dpca, fpca))
}
