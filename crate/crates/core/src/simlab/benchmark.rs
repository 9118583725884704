//! Monte Carlo RMISE benchmark.
//!
//! Replicate `r` draws its data from `child_seed(seed, r)`, so results do
//! not depend on how replicates are scheduled across threads. Aggregates
//! are formed in replicate order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, rmise, true_derivative, SimDesign};
use super::model::SimModel;
use crate::baselines::{cv_bandwidth_dq, local_deriv, mean_derivative_baseline, smooth_dq, DenseCurve, DqMethod, DQ_CANDIDATES};
use crate::dpca::{eigen_inequality_violation, fit_dpca, select_k_fve, Bandwidth, DpcaConfig, DpcaFit};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Fpca,
    Dpca,
    MeanDerivative,
    Local,
    SmoothDq,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Fpca => "FPCA",
            Method::Dpca => "DPCA",
            Method::MeanDerivative => "MEAN-DERIV",
            Method::Local => "LOCAL",
            Method::SmoothDq => "SMOOTH-DQ",
        }
    }

    /// Methods compared on a design; per-curve baselines need dense curves.
    pub fn defaults_for(design: &SimDesign) -> Vec<Method> {
        if design.is_dense() {
            vec![Method::Fpca, Method::Dpca, Method::Local, Method::SmoothDq]
        } else {
            vec![Method::Fpca, Method::Dpca, Method::MeanDerivative]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub model: SimModel,
    pub design: SimDesign,
    pub methods: Vec<Method>,
    /// Fixed-`K` cells run for `K = 1..=k_max`; FVE selection is capped at `k_max`.
    pub k_max: usize,
    pub fve_threshold: f64,
    pub replicates: usize,
    /// Worker threads; 0 uses every available core. Not serialized, since
    /// results do not depend on it.
    #[serde(skip)]
    pub threads: usize,
    pub seed: u64,
    pub fit: DpcaConfig,
    /// Candidates for the per-curve baselines, in units of the domain.
    pub dq_candidates: Vec<f64>,
    /// Relative tolerance of the per-replicate variance-inequality audit.
    pub inequality_tol: f64,
}

impl BenchmarkConfig {
    pub fn new(model: SimModel, design: SimDesign, replicates: usize, seed: u64) -> Self {
        BenchmarkConfig {
            methods: Method::defaults_for(&design),
            model,
            design,
            k_max: 5,
            fve_threshold: 0.9,
            replicates,
            threads: 1,
            seed,
            fit: DpcaConfig::default(),
            dq_candidates: DQ_CANDIDATES.to_vec(),
            inequality_tol: 5e-2,
        }
    }
}

/// Counter-based seed for replicate `r`.
pub fn child_seed(seed: u64, r: usize) -> u64 {
    let mut z = seed ^ (r as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One cell: method, `K` label (`"1"`…, `"fve"`, or empty) and RMISE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub k: String,
    pub rmise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub selected_k_fpca: Option<usize>,
    pub selected_k_dpca: Option<usize>,
    pub sigma2: Option<f64>,
    pub bandwidths: Option<(f64, f64)>,
    /// `(K, relative gap)` of the first variance-inequality violation.
    pub inequality_violation: Option<(usize, f64)>,
    pub failures: Vec<String>,
}

impl ReplicateOutcome {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub k: String,
    pub mean: f64,
    pub sd: f64,
    pub n_rep: usize,
    /// Mean selected `K` for FVE rows.
    pub mean_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmiseReport {
    pub config: BenchmarkConfig,
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<ReplicateOutcome>,
}

impl RmiseReport {
    pub fn row(&self, method: Method, k: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method.label() && r.k == k)
    }

    pub fn failed_replicates(&self) -> usize {
        self.outcomes.iter().filter(|o| o.failed()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,K,mean,sd,n_rep,mean_k\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{},{}\n",
                r.method,
                r.k,
                r.mean,
                r.sd,
                r.n_rep,
                r.mean_k.map(|v| format!("{v:.16e}")).unwrap_or_default()
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn run_replicate(config: &BenchmarkConfig, index: usize) -> ReplicateOutcome {
    let seed = child_seed(config.seed, index);
    let mut out = ReplicateOutcome {
        index,
        seed,
        cells: Vec::new(),
        selected_k_fpca: None,
        selected_k_dpca: None,
        sigma2: None,
        bandwidths: None,
        inequality_violation: None,
        failures: Vec::new(),
    };
    let sim = match generate(&config.model, &config.design, seed) {
        Ok(s) => s,
        Err(e) => {
            out.failures.push(format!("generate: {e}"));
            return out;
        }
    };
    let (lo, hi) = sim.data.domain;
    let grid = match crate::grid::Grid::new(lo, hi, config.fit.grid_len) {
        Ok(g) => g,
        Err(e) => {
            out.failures.push(format!("grid: {e}"));
            return out;
        }
    };
    let truths = true_derivative(&sim.scores, &config.model, &grid);
    let mut push = |out: &mut ReplicateOutcome, method: Method, k: String, est: Result<Vec<GridFunction>>| {
        match est.and_then(|e| rmise(&e, &truths)) {
            Ok(v) => out.cells.push(Cell {
                method: method.label().into(),
                k,
                rmise: v,
            }),
            Err(e) => out.failures.push(format!("{} K={k}: {e}", method.label())),
        }
    };

    let wants_fit = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::Fpca | Method::Dpca | Method::MeanDerivative));
    if wants_fit {
        let mut fit_config = config.fit.clone();
        fit_config.max_components = fit_config.max_components.max(config.k_max);
        match fit_dpca(&sim.data, &fit_config) {
            Ok(fit) => record_fit(config, &fit, &mut out, &mut push),
            Err(e) => out.failures.push(format!("fit: {e}")),
        }
    }

    for method in [Method::Local, Method::SmoothDq] {
        if !config.methods.contains(&method) {
            continue;
        }
        let est = baseline_estimates(config, &sim.data, method, &grid);
        push(&mut out, method, String::new(), est);
    }
    out
}

fn record_fit(
    config: &BenchmarkConfig,
    fit: &DpcaFit,
    out: &mut ReplicateOutcome,
    push: &mut impl FnMut(&mut ReplicateOutcome, Method, String, Result<Vec<GridFunction>>),
) {
    out.sigma2 = Some(fit.sigma2);
    out.bandwidths = Some((fit.bandwidths.mean, fit.bandwidths.cov));
    let kmax = config.k_max;
    let n_check = kmax.min(fit.trajectory_derivs.len());
    out.inequality_violation = eigen_inequality_violation(
        &fit.derivative,
        &fit.trajectory,
        &fit.trajectory_derivs[..n_check],
        config.inequality_tol,
    );
    let cap = |fve: &[f64]| select_k_fve(&fve[..fve.len().min(kmax)], config.fve_threshold);
    for method in [Method::Fpca, Method::Dpca] {
        if !config.methods.contains(&method) {
            continue;
        }
        for k in 1..=kmax {
            let est = match method {
                Method::Fpca => fit.fpca_derivative_curves(k),
                _ => fit.derivative_curves(k),
            };
            push(out, method, k.to_string(), est);
        }
        let selected = match method {
            Method::Fpca => cap(&fit.fve_fpca),
            _ => cap(&fit.fve_dpca),
        };
        let est = match method {
            Method::Fpca => fit.fpca_derivative_curves(selected),
            _ => fit.derivative_curves(selected),
        };
        push(out, method, "fve".into(), est);
        match method {
            Method::Fpca => out.selected_k_fpca = Some(selected),
            _ => out.selected_k_dpca = Some(selected),
        }
    }
    if config.methods.contains(&Method::MeanDerivative) {
        push(out, Method::MeanDerivative, String::new(), Ok(mean_derivative_baseline(fit)));
    }
}

fn baseline_estimates(
    config: &BenchmarkConfig,
    data: &crate::data::LongitudinalDataset,
    method: Method,
    grid: &crate::grid::Grid,
) -> Result<Vec<GridFunction>> {
    let kernel = config.fit.kernel;
    let width = data.domain.1 - data.domain.0;
    let curves = data
        .subjects
        .iter()
        .map(|s| DenseCurve::new(s.times.clone(), s.values.clone()))
        .collect::<Result<Vec<_>>>()?;
    let dq = match method {
        Method::Local => DqMethod::Local,
        _ => DqMethod::SmoothDq,
    };
    let cands: Vec<f64> = config.dq_candidates.iter().map(|c| c * width).collect();
    let h = cv_bandwidth_dq(&curves, dq, &cands, kernel)?;
    curves
        .iter()
        .map(|c| match dq {
            DqMethod::Local => local_deriv(c, Bandwidth::Fixed(h), kernel, grid),
            DqMethod::SmoothDq => smooth_dq(c, Bandwidth::Fixed(h), kernel, grid),
        })
        .collect()
}

/// Runs every replicate and aggregates per method and `K`.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<RmiseReport> {
    if config.replicates == 0 {
        return Err(Error::InvalidInput("replicates must be at least 1".into()));
    }
    if config.k_max == 0 {
        return Err(Error::InvalidInput("k_max must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, r))
            .collect()
    });

    let mut keys: Vec<(Method, String)> = Vec::new();
    for &method in &config.methods {
        match method {
            Method::Fpca | Method::Dpca => {
                keys.extend((1..=config.k_max).map(|k| (method, k.to_string())));
                keys.push((method, "fve".into()));
            }
            _ => keys.push((method, String::new())),
        }
    }
    let rows = keys
        .into_iter()
        .filter_map(|(method, k)| {
            let values: Vec<f64> = outcomes
                .iter()
                .flat_map(|o| o.cells.iter())
                .filter(|c| c.method == method.label() && c.k == k)
                .map(|c| c.rmise)
                .collect();
            if values.is_empty() {
                return None;
            }
            let (mean, sd) = mean_sd(&values);
            let mean_k = (k == "fve").then(|| {
                let ks: Vec<f64> = outcomes
                    .iter()
                    .filter_map(|o| match method {
                        Method::Fpca => o.selected_k_fpca,
                        _ => o.selected_k_dpca,
                    })
                    .map(|k| k as f64)
                    .collect();
                ks.iter().sum::<f64>() / ks.len().max(1) as f64
            });
            Some(ReportRow {
                method: method.label().into(),
                k,
                mean,
                sd,
                n_rep: values.len(),
                mean_k,
            })
        })
        .collect();
    Ok(RmiseReport {
        config: config.clone(),
        rows,
        outcomes,
    })
}
