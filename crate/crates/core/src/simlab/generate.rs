use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{legendre, SimModel};
use crate::data::{LongitudinalDataset, Subject};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// Sampling design of the simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    /// `Nᵢ ~ U{min_obs..=max_obs}`, times i.i.d. Beta(2/3, 1).
    Sparse { min_obs: usize, max_obs: usize },
    /// `m` equidistant times shared by all subjects.
    Dense { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub n: usize,
}

impl SimDesign {
    /// Sparse irregular design with 2 to 9 observations per subject.
    pub fn sparse(n: usize) -> Self {
        SimDesign {
            kind: DesignKind::Sparse { min_obs: 2, max_obs: 9 },
            n,
        }
    }

    /// 51 equidistant observations per subject.
    pub fn dense(n: usize) -> Self {
        SimDesign {
            kind: DesignKind::Dense { m: 51 },
            n,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, DesignKind::Dense { .. })
    }
}

/// Beta(2/3, 1) draw by inverting the CDF `x^{2/3}`.
fn beta_two_thirds(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    u.powf(1.5)
}

/// Simulated sample and the scores that generated it (`n × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: LongitudinalDataset,
    pub scores: DMatrix<f64>,
}

/// `Y_ij = μ(T_ij) + ∑_k ξ_ik φ_k(T_ij) + ε_ij`, deterministic in `seed`.
pub fn generate(model: &SimModel, design: &SimDesign, seed: u64) -> Result<Simulated> {
    model.validate()?;
    if design.n == 0 {
        return Err(Error::InvalidInput("design needs at least one subject".into()));
    }
    match design.kind {
        DesignKind::Sparse { min_obs, max_obs } if min_obs == 0 || max_obs < min_obs => {
            return Err(Error::InvalidInput(format!("invalid observation range {min_obs}..={max_obs}")));
        }
        DesignKind::Dense { m } if m < 2 => {
            return Err(Error::InvalidInput(format!("dense design needs m >= 2, got {m}")));
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = model.n_components();
    let mut scores = DMatrix::zeros(design.n, k);
    let mut subjects = Vec::with_capacity(design.n);
    for i in 0..design.n {
        let times = match design.kind {
            DesignKind::Sparse { min_obs, max_obs } => {
                let count = rng.random_range(min_obs..=max_obs);
                loop {
                    let mut t: Vec<f64> = (0..count).map(|_| beta_two_thirds(&mut rng)).collect();
                    t.sort_by(|a, b| a.total_cmp(b));
                    if t.windows(2).all(|w| w[1] > w[0]) {
                        break t;
                    }
                }
            }
            DesignKind::Dense { m } => (0..m).map(|j| j as f64 / (m - 1) as f64).collect(),
        };
        for c in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            scores[(i, c)] = model.eigenvalues[c].sqrt() * z;
        }
        let xi: Vec<f64> = scores.row(i).iter().copied().collect();
        let values = times
            .iter()
            .map(|&t| {
                let eps: f64 = rng.sample(StandardNormal);
                model.trajectory(&xi, t) + model.sigma * eps
            })
            .collect();
        subjects.push(Subject::new(format!("{}", i + 1), times, values)?);
    }
    Ok(Simulated {
        data: LongitudinalDataset::new(subjects, (0.0, 1.0))?,
        scores,
    })
}

/// True derivative trajectories `μ′ + ∑ ξ_ik φ_k′` on a grid.
pub fn true_derivative(scores: &DMatrix<f64>, model: &SimModel, grid: &Grid) -> Vec<GridFunction> {
    (0..scores.nrows())
        .map(|i| {
            let xi: Vec<f64> = scores.row(i).iter().copied().collect();
            GridFunction::from_fn(grid, |t| model.derivative(&xi, t))
        })
        .collect()
}

/// Relative mean integrated squared error
/// `(1/n) ∑ ∫(X̂ᵢ′ − Xᵢ′)² / ∫(Xᵢ′)²`.
pub fn rmise(estimates: &[GridFunction], truths: &[GridFunction]) -> Result<f64> {
    if estimates.len() != truths.len() || truths.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: estimates.len(),
        });
    }
    let mut total = 0.0;
    for (i, (e, t)) in estimates.iter().zip(truths).enumerate() {
        if e.grid != t.grid {
            return Err(Error::DimensionMismatch {
                expected: t.grid.len(),
                found: e.grid.len(),
            });
        }
        let denom = t.norm_sq();
        if !(denom > 0.0) {
            return Err(Error::ZeroDenominator { subject: i });
        }
        let w = t.grid.weights();
        let num: f64 = e
            .values
            .iter()
            .zip(&t.values)
            .zip(&w)
            .map(|((a, b), w)| w * (a - b).powi(2))
            .sum();
        total += num / denom;
    }
    Ok(total / truths.len() as f64)
}

/// Scores of the true derivative in a given derivative eigenbasis:
/// `ξ_{ik,1} = ∑_j ξ_ij ⟨φ_j′, ψ_k⟩`.
pub fn true_derivative_scores(scores: &DMatrix<f64>, grid: &Grid, basis: &[GridFunction]) -> Result<DMatrix<f64>> {
    let k = scores.ncols();
    let derivs: Vec<GridFunction> = (1..=k)
        .map(|j| {
            let values = grid.points().iter().map(|&t| legendre(j, t).map(|v| v.1)).collect::<Result<Vec<_>>>()?;
            GridFunction::new(grid.clone(), values)
        })
        .collect::<Result<_>>()?;
    let gram = DMatrix::from_fn(k, basis.len(), |j, c| derivs[j].inner(&basis[c]));
    Ok(scores * gram)
}
