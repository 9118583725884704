//! Weighted local polynomial engines.
//!
//! Observations with identical design coordinates are merged into one
//! point carrying the summed weight and the weighted mean response; the
//! local least-squares solution is unchanged by this and the dropped
//! within-group sum of squares is kept for residual criteria.
//!
//! Polynomials are expressed in bandwidth-scaled offsets `(x - t) / h`, so
//! the `j`-th coefficient must be divided by `h^j` to obtain the
//! derivative-scale coefficient.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::Kernel;
use crate::error::{Error, Result};

/// Relative singular-value threshold for local normal matrices.
pub(crate) const RANK_TOL: f64 = 1e-10;

pub(crate) struct LocalSolution {
    /// Coefficients in scaled offsets.
    pub coef: Vec<f64>,
    /// Bandwidth actually used after widening.
    pub h: f64,
    /// `(M^{-1})_{00}` of the local normal matrix.
    pub inv00: f64,
}

impl LocalSolution {
    /// `ν!·α_ν` for a 1D fit.
    pub fn derivative(&self, nu: usize) -> f64 {
        factorial(nu) * self.coef[nu] / self.h.powi(nu as i32)
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Solves `M β = b` for a small symmetric positive semidefinite `M`.
/// Returns `None` when the smallest singular value is below `RANK_TOL` of the largest.
pub(crate) fn solve_normal(m: DMatrix<f64>, b: DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let n = m.nrows();
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || !smin.is_finite() || smin < RANK_TOL * smax {
        return None;
    }
    let beta = svd.solve(&b, 0.0).ok()?;
    let mut e0 = DVector::zeros(n);
    e0[0] = 1.0;
    let inv = svd.solve(&e0, 0.0).ok()?;
    Some((beta, inv[0]))
}

enum Attempt {
    Solved(LocalSolution),
    TooFew,
    Singular,
}

fn widen<F>(h0: f64, width: f64, at: Vec<f64>, mut attempt: F) -> Result<LocalSolution>
where
    F: FnMut(f64) -> Attempt,
{
    let mut h = h0;
    loop {
        let singular = match attempt(h) {
            Attempt::Solved(sol) => return Ok(sol),
            Attempt::TooFew => false,
            Attempt::Singular => true,
        };
        if h >= width {
            return Err(if singular {
                Error::RankDeficient { at }
            } else {
                Error::DegenerateWindow { at, bandwidth: h }
            });
        }
        h = (2.0 * h).min(width);
    }
}

/// Merged 1D design.
pub(crate) struct Design1D {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    /// Weighted within-group sum of squares dropped by merging.
    pub within_ss: f64,
    pub total_w: f64,
    pub count: usize,
}

impl Design1D {
    pub fn new(x: &[f64], y: &[f64], w: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut out = Design1D {
            x: Vec::new(),
            w: Vec::new(),
            y: Vec::new(),
            within_ss: 0.0,
            total_w: 0.0,
            count: idx.len(),
        };
        let mut start = 0;
        while start < idx.len() {
            let mut end = start + 1;
            while end < idx.len() && x[idx[end]] == x[idx[start]] {
                end += 1;
            }
            let group = &idx[start..end];
            let ws: f64 = group.iter().map(|&i| w[i]).sum();
            let ybar = group.iter().map(|&i| w[i] * y[i]).sum::<f64>() / ws;
            out.within_ss += group.iter().map(|&i| w[i] * (y[i] - ybar).powi(2)).sum::<f64>();
            out.x.push(x[idx[start]]);
            out.w.push(ws);
            out.y.push(ybar);
            out.total_w += ws;
            start = end;
        }
        out
    }

    pub fn span(&self) -> (f64, f64) {
        match (self.x.first(), self.x.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        }
    }

    fn attempt(&self, t: f64, degree: usize, h: f64, kernel: Kernel, ys: &[f64]) -> Attempt {
        let ncoef = degree + 1;
        let lo = self.x.partition_point(|&v| v < t - kernel.window_radius() * h);
        let hi = self.x.partition_point(|&v| v <= t + kernel.window_radius() * h);
        let support = (lo..hi)
            .filter(|&i| kernel.in_window((self.x[i] - t) / h))
            .count();
        if support < ncoef {
            return Attempt::TooFew;
        }
        let mut m = DMatrix::<f64>::zeros(ncoef, ncoef);
        let mut b = DVector::<f64>::zeros(ncoef);
        let mut pows = vec![1.0; 2 * degree + 1];
        let mut moments = vec![0.0; 2 * degree + 1];
        for i in 0..self.x.len() {
            let d = (self.x[i] - t) / h;
            let k = kernel.eval(d) * self.w[i];
            if k == 0.0 {
                continue;
            }
            for j in 1..pows.len() {
                pows[j] = pows[j - 1] * d;
            }
            for (mo, p) in moments.iter_mut().zip(&pows) {
                *mo += k * p;
            }
            let ky = k * ys[i];
            for j in 0..ncoef {
                b[j] += ky * pows[j];
            }
        }
        for r in 0..ncoef {
            for c in 0..ncoef {
                m[(r, c)] = moments[r + c];
            }
        }
        match solve_normal(m, b) {
            Some((beta, inv00)) => Attempt::Solved(LocalSolution {
                coef: beta.iter().copied().collect(),
                h,
                inv00,
            }),
            None => Attempt::Singular,
        }
    }

    /// Local fit at `t` of the merged responses, widening the bandwidth as needed.
    pub fn fit(&self, t: f64, degree: usize, h: f64, kernel: Kernel, width: f64) -> Result<LocalSolution> {
        self.fit_values(t, degree, h, kernel, width, &self.y)
    }

    /// As [`fit`](Self::fit) but with responses supplied per merged point.
    pub fn fit_values(
        &self,
        t: f64,
        degree: usize,
        h: f64,
        kernel: Kernel,
        width: f64,
        ys: &[f64],
    ) -> Result<LocalSolution> {
        widen(h, width, vec![t], |hh| self.attempt(t, degree, hh, kernel, ys))
    }
}

/// Monomial exponents `(a, b)` with `a + b <= degree`, ordered by total degree.
pub(crate) fn monomials(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in (0..=total).rev() {
            out.push((a, total - a));
        }
    }
    out
}

struct RowMoments {
    np: usize,
    /// `s` coordinate index of each row.
    rows: Vec<usize>,
    /// `np` weighted `t`-power sums per row.
    sums: Vec<f64>,
    /// The same sums weighted by the response.
    vsums: Vec<f64>,
    /// Points of each row inside the `t` window.
    support: Vec<usize>,
}

/// Merged 2D design; coordinates are indices into a shared sorted value table.
pub(crate) struct Design2D {
    pub coords: Vec<f64>,
    pub points: Vec<(usize, usize)>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub within_ss: f64,
    pub total_w: f64,
    pub count: usize,
}

impl Design2D {
    pub fn new(s: &[f64], t: &[f64], v: &[f64], w: &[f64]) -> Self {
        let mut coords: Vec<f64> = s.iter().chain(t.iter()).copied().collect();
        coords.sort_by(|a, b| a.total_cmp(b));
        coords.dedup();
        let index = |x: f64| coords.binary_search_by(|c| c.total_cmp(&x)).expect("coordinate present");
        let mut keyed: Vec<(usize, usize, usize)> = (0..s.len())
            .filter(|&i| w[i] > 0.0)
            .map(|i| (index(s[i]), index(t[i]), i))
            .collect();
        keyed.sort_unstable();
        let mut out = Design2D {
            coords: Vec::new(),
            points: Vec::new(),
            w: Vec::new(),
            v: Vec::new(),
            within_ss: 0.0,
            total_w: 0.0,
            count: keyed.len(),
        };
        let mut start = 0;
        while start < keyed.len() {
            let key = (keyed[start].0, keyed[start].1);
            let mut end = start + 1;
            while end < keyed.len() && (keyed[end].0, keyed[end].1) == key {
                end += 1;
            }
            let group = &keyed[start..end];
            let ws: f64 = group.iter().map(|g| w[g.2]).sum();
            let vbar = group.iter().map(|g| w[g.2] * v[g.2]).sum::<f64>() / ws;
            out.within_ss += group.iter().map(|g| w[g.2] * (v[g.2] - vbar).powi(2)).sum::<f64>();
            out.points.push(key);
            out.w.push(ws);
            out.v.push(vbar);
            out.total_w += ws;
            start = end;
        }
        out.coords = coords;
        out
    }

    pub fn span(&self) -> (f64, f64) {
        match (self.coords.first(), self.coords.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        }
    }

    /// Kernel-weighted `t`-moments of every `s`-row for a fit centred at `t0`.
    fn row_moments(&self, t0: f64, degree: usize, h: f64, kernel: Kernel) -> RowMoments {
        let np = 2 * degree + 1;
        let mut tpow = vec![0.0; self.coords.len() * np];
        let mut int = vec![false; self.coords.len()];
        for (c, &x) in self.coords.iter().enumerate() {
            let dt = (x - t0) / h;
            int[c] = kernel.in_window(dt);
            let mut pt = kernel.eval(dt);
            for j in 0..np {
                tpow[c * np + j] = pt;
                pt *= dt;
            }
        }
        let mut out = RowMoments {
            np,
            rows: Vec::new(),
            sums: Vec::new(),
            vsums: Vec::new(),
            support: Vec::new(),
        };
        let mut i = 0;
        while i < self.points.len() {
            let a = self.points[i].0;
            let mut row = vec![0.0; np];
            let mut vrow = vec![0.0; np];
            let mut support = 0;
            while i < self.points.len() && self.points[i].0 == a {
                let b = self.points[i].1;
                if int[b] {
                    support += 1;
                }
                let w = self.w[i];
                let wv = w * self.v[i];
                let tp = &tpow[b * np..(b + 1) * np];
                for j in 0..np {
                    row[j] += w * tp[j];
                }
                for j in 0..=degree {
                    vrow[j] += wv * tp[j];
                }
                i += 1;
            }
            out.rows.push(a);
            out.sums.extend(row);
            out.vsums.extend(vrow);
            out.support.push(support);
        }
        out
    }

    /// Combines row moments with the `s` powers at `s0` and solves.
    fn solve_rows(
        &self,
        rows: &RowMoments,
        s0: f64,
        basis: &[(usize, usize)],
        degree: usize,
        h: f64,
        kernel: Kernel,
    ) -> Attempt {
        let np = rows.np;
        let mut mom = vec![0.0; np * np];
        let mut vmom = vec![0.0; np * np];
        let mut support = 0;
        let mut sp = vec![0.0; np];
        for (r, &a) in rows.rows.iter().enumerate() {
            let ds = (self.coords[a] - s0) / h;
            if kernel.in_window(ds) {
                support += rows.support[r];
            }
            let mut ps = kernel.eval(ds);
            for v in sp.iter_mut() {
                *v = ps;
                ps *= ds;
            }
            let row = &rows.sums[r * np..(r + 1) * np];
            let vrow = &rows.vsums[r * np..(r + 1) * np];
            for ea in 0..np {
                for eb in 0..np - ea {
                    mom[ea * np + eb] += sp[ea] * row[eb];
                }
            }
            for ea in 0..=degree {
                for eb in 0..=degree - ea {
                    vmom[ea * np + eb] += sp[ea] * vrow[eb];
                }
            }
        }
        let ncoef = basis.len();
        if support < ncoef {
            return Attempt::TooFew;
        }
        let mm = DMatrix::from_fn(ncoef, ncoef, |r, c| {
            let (ra, rb) = basis[r];
            let (ca, cb) = basis[c];
            mom[(ra + ca) * np + rb + cb]
        });
        let rhs = DVector::from_iterator(ncoef, basis.iter().map(|&(ea, eb)| vmom[ea * np + eb]));
        match solve_normal(mm, rhs) {
            Some((beta, inv00)) => Attempt::Solved(LocalSolution {
                coef: beta.iter().copied().collect(),
                h,
                inv00,
            }),
            None => Attempt::Singular,
        }
    }

    fn attempt(&self, s0: f64, t0: f64, basis: &[(usize, usize)], degree: usize, h: f64, kernel: Kernel) -> Attempt {
        let rows = self.row_moments(t0, degree, h, kernel);
        self.solve_rows(&rows, s0, basis, degree, h, kernel)
    }

    /// [`Design2D::fit`] at many points; points sharing a `t` coordinate
    /// reuse one set of row moments.
    pub fn fit_many(
        &self,
        points: &[(f64, f64)],
        basis: &[(usize, usize)],
        degree: usize,
        h: f64,
        kernel: Kernel,
        width: f64,
    ) -> Vec<Result<LocalSolution>> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| points[i].1.total_cmp(&points[j].1));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t0 = points[order[start]].1;
            let mut end = start + 1;
            while end < order.len() && points[order[end]].1 == t0 {
                end += 1;
            }
            groups.push(&order[start..end]);
            start = end;
        }
        let solved: Vec<Vec<(usize, Result<LocalSolution>)>> = groups
            .par_iter()
            .map(|group| {
                let t0 = points[group[0]].1;
                let rows = self.row_moments(t0, degree, h, kernel);
                group
                    .iter()
                    .map(|&i| {
                        let s0 = points[i].0;
                        let sol = match self.solve_rows(&rows, s0, basis, degree, h, kernel) {
                            Attempt::Solved(sol) => Ok(sol),
                            _ => self.fit(s0, t0, basis, degree, h, kernel, width),
                        };
                        (i, sol)
                    })
                    .collect()
            })
            .collect();
        let mut out: Vec<Option<Result<LocalSolution>>> = (0..points.len()).map(|_| None).collect();
        for (i, sol) in solved.into_iter().flatten() {
            out[i] = Some(sol);
        }
        out.into_iter().map(|s| s.expect("every point fitted")).collect()
    }

    pub fn fit(
        &self,
        s0: f64,
        t0: f64,
        basis: &[(usize, usize)],
        degree: usize,
        h: f64,
        kernel: Kernel,
        width: f64,
    ) -> Result<LocalSolution> {
        widen(h, width, vec![s0, t0], |hh| self.attempt(s0, t0, basis, degree, hh, kernel))
    }
}
