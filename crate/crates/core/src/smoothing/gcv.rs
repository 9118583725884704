//! Generalized cross-validation over a finite bandwidth list.
//!
//! `GCV(h) = N·RSS(h) / (N − tr H_h)²`, where the fitted values and the
//! hat-matrix diagonal come from the level (`ν = 0`) fit at every design
//! point. Weighted data use residuals scaled by `w_i / mean(w)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::local::{monomials, Design1D, Design2D};
use super::{Kernel, ScatterData1D, ScatterData2D};
use crate::error::{Error, Result};

/// Outcome of a bandwidth search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvSelection {
    pub bandwidth: f64,
    /// `(candidate, score)`; `None` marks a candidate whose fit failed.
    pub scores: Vec<(f64, Option<f64>)>,
}

fn criterion(count: usize, rss: f64, trace: f64) -> f64 {
    let n = count as f64;
    if trace >= n {
        return f64::INFINITY;
    }
    n * rss / (n - trace).powi(2)
}

/// GCV score of a degree-`degree` local fit at bandwidth `h`.
pub fn gcv_score_1d(data: &ScatterData1D, degree: usize, h: f64, kernel: Kernel) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    let design = Design1D::new(&data.x, &data.y, &data.w);
    score_1d(&design, degree, h, kernel)
}

fn score_1d(design: &Design1D, degree: usize, h: f64, kernel: Kernel) -> Result<f64> {
    let (lo, hi) = design.span();
    let width = hi - lo;
    let mean_w = design.total_w / design.count as f64;
    let k0 = kernel.eval(0.0);
    let parts: Vec<(f64, f64)> = design
        .x
        .par_iter()
        .enumerate()
        .map(|(g, &x)| {
            let sol = design.fit(x, degree, h, kernel, width)?;
            let resid = design.y[g] - sol.coef[0];
            Ok((design.w[g] * resid * resid, design.w[g] * k0 * sol.inv00))
        })
        .collect::<Result<_>>()?;
    let rss = (parts.iter().map(|p| p.0).sum::<f64>() + design.within_ss) / mean_w;
    let trace: f64 = parts.iter().map(|p| p.1).sum();
    Ok(criterion(design.count, rss, trace))
}

/// GCV score of the local-linear surface smoother at bandwidth `h`.
pub fn gcv_score_2d(data: &ScatterData2D, h: f64, kernel: Kernel) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    let design = Design2D::new(&data.s, &data.t, &data.value, &data.w);
    score_2d(&design, h, kernel)
}

fn score_2d(design: &Design2D, h: f64, kernel: Kernel) -> Result<f64> {
    let (lo, hi) = design.span();
    let width = hi - lo;
    let basis = monomials(1);
    let mean_w = design.total_w / design.count as f64;
    let k0 = kernel.eval(0.0);
    let at: Vec<(f64, f64)> = design
        .points
        .iter()
        .map(|&(a, b)| (design.coords[a], design.coords[b]))
        .collect();
    let parts: Vec<(f64, f64)> = design
        .fit_many(&at, &basis, 1, h, kernel, width)
        .into_iter()
        .enumerate()
        .map(|(g, sol)| {
            let sol = sol?;
            let resid = design.v[g] - sol.coef[0];
            Ok((design.w[g] * resid * resid, design.w[g] * k0 * k0 * sol.inv00))
        })
        .collect::<Result<_>>()?;
    let rss = (parts.iter().map(|p| p.0).sum::<f64>() + design.within_ss) / mean_w;
    let trace: f64 = parts.iter().map(|p| p.1).sum();
    Ok(criterion(design.count, rss, trace))
}

fn select(candidates: &[f64], scale: f64, mut score: impl FnMut(f64) -> Result<f64>) -> Result<GcvSelection> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(bad) = candidates.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidInput(format!("bandwidth candidate {bad} is not positive")));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let scores: Vec<(f64, Option<f64>)> = sorted
        .iter()
        .map(|&h| (h, score(h).ok().filter(|s| s.is_finite())))
        .collect();
    let best = scores
        .iter()
        .filter_map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::AllDegenerate);
    }
    // scores equal up to rounding count as ties; the smallest bandwidth wins
    let tol = 1e-10 * best + 1e-12 * scale;
    let bandwidth = scores
        .iter()
        .find(|(_, s)| s.is_some_and(|v| v <= best + tol))
        .map(|(h, _)| *h)
        .expect("best score present");
    Ok(GcvSelection { bandwidth, scores })
}

/// Candidate minimizing the GCV score of a degree-`degree` local fit.
pub fn gcv_bandwidth_1d(
    data: &ScatterData1D,
    degree: usize,
    kernel: Kernel,
    candidates: &[f64],
) -> Result<GcvSelection> {
    let design = Design1D::new(&data.x, &data.y, &data.w);
    let scale = mean_square(&data.y, &data.w);
    select(candidates, scale, |h| score_1d(&design, degree, h, kernel))
}

/// Candidate minimizing the GCV score of the local-linear surface smoother.
pub fn gcv_bandwidth_2d(data: &ScatterData2D, kernel: Kernel, candidates: &[f64]) -> Result<GcvSelection> {
    let design = Design2D::new(&data.s, &data.t, &data.value, &data.w);
    let scale = mean_square(&data.value, &data.w);
    select(candidates, scale, |h| score_2d(&design, h, kernel))
}

fn mean_square(y: &[f64], w: &[f64]) -> f64 {
    let tw: f64 = w.iter().sum();
    y.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>() / tw
}
