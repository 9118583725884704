//! Dense, direct computations that the fast paths are checked against.
//! Each `*_deviation` returns the largest relative difference found.
#![allow(dead_code)]

use dpca::data::{LongitudinalDataset, Subject};
use dpca::dpca::{dpc_scores, zeta_vector};
use dpca::fpca::{eigensystem, pace_scores, ridge};
use dpca::simlab::legendre_basis;
use dpca::smoothing::{gcv_score_2d, local_poly_1d_at, local_poly_2d_at, Kernel, LocalFitSpec, ScatterData1D, ScatterData2D};
use dpca::{Grid, GridFunction, GridSurface};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Weighted least squares over explicit monomials in raw offsets, by QR.
pub fn wls(design: &DMatrix<f64>, y: &[f64], w: &[f64]) -> DVector<f64> {
    let n = design.nrows();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(n, design.ncols(), |i, j| sw[i] * design[(i, j)]);
    let b = DVector::from_fn(n, |i, _| sw[i] * y[i]);
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&rhs).expect("full rank")
}

pub fn oracle_1d(x: &[f64], y: &[f64], w: &[f64], t: f64, degree: usize, nu: usize, h: f64, k: Kernel) -> f64 {
    let design = DMatrix::from_fn(x.len(), degree + 1, |i, j| (x[i] - t).powi(j as i32));
    let kw: Vec<f64> = x.iter().zip(w).map(|(xi, wi)| wi * k.eval((xi - t) / h)).collect();
    factorial(nu) * wls(&design, y, &kw)[nu]
}

pub fn basis(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in (0..=total).rev() {
            out.push((a, total - a));
        }
    }
    out
}

pub fn oracle_2d(d: &ScatterData2D, at: (f64, f64), degree: usize, target: (usize, usize), h: f64, k: Kernel) -> f64 {
    let b = basis(degree);
    let design = DMatrix::from_fn(d.len(), b.len(), |i, c| {
        (d.s[i] - at.0).powi(b[c].0 as i32) * (d.t[i] - at.1).powi(b[c].1 as i32)
    });
    let kw: Vec<f64> = (0..d.len())
        .map(|i| d.w[i] * k.eval((d.s[i] - at.0) / h) * k.eval((d.t[i] - at.1) / h))
        .collect();
    let idx = b.iter().position(|&m| m == target).unwrap();
    factorial(target.0) * factorial(target.1) * wls(&design, &d.value, &kw)[idx]
}

pub fn scatter_2d(seed: u64, n: usize) -> ScatterData2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let v = s.iter().zip(&t).map(|(a, b)| (3.0 * a).sin() * b + rng.random::<f64>() - 0.5).collect();
    let w = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    ScatterData2D::new(s, t, v, w).unwrap()
}

/// Every derivative order of a degree-`degree` fit at `t` on 80 random points.
pub fn local_1d_deviation(seed: u64, degree: usize, h: f64, t: f64, kernel: Kernel) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 80;
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let y: Vec<f64> = x.iter().map(|v| (4.0 * v).cos() + rng.random::<f64>()).collect();
    let w: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
    let data = ScatterData1D::new(x.clone(), y.clone(), w.clone()).unwrap();
    (0..=degree)
        .map(|nu| {
            let got = local_poly_1d_at(&data, &LocalFitSpec::new(degree, nu, h, kernel).unwrap(), &[t]).unwrap()[0];
            rel(got, oracle_1d(&x, &y, &w, t, degree, nu, h, kernel))
        })
        .fold(0.0, f64::max)
}

/// Surface, first partial and mixed partial at `at` on 150 random points.
pub fn local_2d_deviation(seed: u64, h: f64, at: (f64, f64)) -> f64 {
    let data = scatter_2d(seed, 150);
    [(1, (0, 0)), (2, (1, 0)), (3, (1, 1))]
        .iter()
        .map(|&(degree, target)| {
            let got = local_poly_2d_at(&data, degree, target, h, Kernel::Gaussian, &[at]).unwrap()[0];
            rel(got, oracle_2d(&data, at, degree, target, h, Kernel::Gaussian))
        })
        .fold(0.0, f64::max)
}

/// GCV of the local-linear surface smoother against `n·RSS/(n − tr H)²`
/// with the hat matrix built row by row.
pub fn gcv_deviation(seed: u64, n: usize, h: f64) -> f64 {
    let data = scatter_2d(seed, n);
    let mut rss = 0.0;
    let mut trace = 0.0;
    let mean_w = data.w.iter().sum::<f64>() / n as f64;
    let b = basis(1);
    for i in 0..n {
        let design = DMatrix::from_fn(n, 3, |r, c| {
            (data.s[r] - data.s[i]).powi(b[c].0 as i32) * (data.t[r] - data.t[i]).powi(b[c].1 as i32)
        });
        let kw = DMatrix::from_diagonal(&DVector::from_fn(n, |r, _| {
            data.w[r] * Kernel::Gaussian.eval((data.s[r] - data.s[i]) / h) * Kernel::Gaussian.eval((data.t[r] - data.t[i]) / h)
        }));
        let xtw = design.transpose() * &kw;
        let row = ((&xtw * &design).try_inverse().unwrap() * xtw).row(0).clone_owned();
        let fitted: f64 = (0..n).map(|r| row[r] * data.value[r]).sum();
        rss += data.w[i] / mean_w * (data.value[i] - fitted).powi(2);
        trace += row[i];
    }
    let want = n as f64 * rss / (n as f64 - trace).powi(2);
    let got = gcv_score_2d(&data, h, Kernel::Gaussian).unwrap();
    (got - want).abs() / want
}

pub fn sparse_dataset(seed: u64, n: usize) -> LongitudinalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = (0..n)
        .map(|i| {
            let m = rng.random_range(1..=6);
            let mut times: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            times.sort_by(|a, b| a.total_cmp(b));
            times.dedup();
            let values = times.iter().map(|t| (3.0 * t).sin() + rng.random::<f64>() - 0.5).collect();
            Subject::new(format!("s{i}"), times, values).unwrap()
        })
        .collect();
    LongitudinalDataset::new(subjects, (0.0, 1.0)).unwrap()
}

/// `∑ λ_k φ_k(s) φ_k(t)` with orthonormal Legendre `φ_k`.
pub fn planted(grid: &Grid, lambdas: &[f64]) -> (GridSurface, Vec<GridFunction>) {
    let phis: Vec<GridFunction> = (1..=lambdas.len()).map(|k| legendre_basis(k, grid).unwrap().0).collect();
    let m = grid.len();
    let mut values = DMatrix::zeros(m, m);
    for (l, p) in lambdas.iter().zip(&phis) {
        for i in 0..m {
            for j in 0..m {
                values[(i, j)] += l * p.values[i] * p.values[j];
            }
        }
    }
    (GridSurface::new(grid.clone(), values).unwrap(), phis)
}

/// FPC and DPC scores against `λφᵀΣ⁻¹r` and `ζᵀΣ⁻¹r` with `Σ` inverted in full.
pub fn blup_deviation(seed: u64) -> (f64, f64) {
    let grid = Grid::unit(41).unwrap();
    let (cov, _) = planted(&grid, &[2.0, 0.7, 0.2]);
    let eig = eigensystem(&cov).unwrap();
    let mean = GridFunction::from_fn(&grid, |t| 1.0 + t);
    let g10 = GridSurface::from_fn(&grid, |s, t| s * (1.0 - t) + 0.3 * t * t);
    let deriv = eigensystem(&planted(&grid, &[1.5, 0.9, 0.4]).0).unwrap();
    let data = sparse_dataset(seed, 40);
    let sigma2 = 0.3;
    let k = 3;
    let fpc = pace_scores(&data, &mean, &cov, sigma2, &eig, k).unwrap();
    let dpc = dpc_scores(&data, &mean, &cov, sigma2, &g10, &deriv, k).unwrap();
    let diag = sigma2 + ridge(&cov);
    let (mut worst_f, mut worst_d) = (0.0f64, 0.0f64);
    for (i, s) in data.subjects.iter().enumerate() {
        let n = s.len();
        let sigma = DMatrix::from_fn(n, n, |j, l| cov.interpolate(s.times[j], s.times[l]) + if j == l { diag } else { 0.0 });
        let inv = sigma.try_inverse().unwrap();
        let r = DVector::from_fn(n, |j, _| s.values[j] - mean.interpolate(s.times[j]));
        for c in 0..k {
            let phi = DVector::from_fn(n, |j, _| eig.values[c] * eig.functions[c].interpolate(s.times[j]));
            worst_f = worst_f.max(rel(fpc.values[(i, c)], (phi.transpose() * &inv * &r)[0]));
            let zeta = DVector::from_vec(zeta_vector(&g10, &deriv.functions[c], &s.times).unwrap());
            worst_d = worst_d.max(rel(dpc.values[(i, c)], (zeta.transpose() * &inv * &r)[0]));
        }
    }
    (worst_f, worst_d)
}

/// Planted spectra on a 101-grid: largest relative eigenvalue error and
/// largest `1 − |cos|` between planted and recovered simple eigenfunctions.
pub fn planted_spectrum_deviation(lambdas: &[f64]) -> (f64, f64) {
    let grid = Grid::unit(101).unwrap();
    let (cov, phis) = planted(&grid, lambdas);
    let eig = eigensystem(&cov).unwrap();
    let (mut worst_l, mut worst_phi) = (0.0f64, 0.0f64);
    for (k, l) in lambdas.iter().enumerate() {
        worst_l = worst_l.max((eig.values[k] - l).abs() / l);
        if lambdas.iter().filter(|&&x| x == *l).count() == 1 {
            let cos = eig.functions[k].inner(&phis[k]).abs() / (eig.functions[k].norm_sq() * phis[k].norm_sq()).sqrt();
            worst_phi = worst_phi.max(1.0 - cos);
        }
    }
    (worst_l, worst_phi)
}

pub const PLANTED: [&[f64]; 4] = [&[1.0], &[3.0, 1.0], &[3.0, 2.0, 1.0, 0.1, 0.1], &[5.0, 1.0, 0.5, 0.25]];
