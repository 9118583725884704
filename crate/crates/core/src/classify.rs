//! Binary logistic classification on principal component scores.
//!
//! Fits are ridge-penalized (intercept excluded) so that the perfectly
//! separated training sets that small samples produce still have a finite
//! optimum. Splits and folds are stratified by class.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simlab::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-6,
        }
    }
}

/// Fitted coefficients, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn design(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = features.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { features[(i, j - 1)] })
}

fn penalized_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta.iter().zip(y).map(|(e, y)| y * e - softplus(*e)).sum();
    ll - 0.5 * ridge * beta.rows(1, beta.len() - 1).norm_squared()
}

/// Gradient of the penalized log-likelihood.
pub fn penalized_gradient(features: &DMatrix<f64>, labels: &[u8], weights: &[f64], ridge: f64) -> Vec<f64> {
    let x = design(features);
    let beta = DVector::from_column_slice(weights);
    let eta = &x * &beta;
    let resid = DVector::from_iterator(
        labels.len(),
        labels.iter().zip(eta.iter()).map(|(&y, &e)| y as f64 - sigmoid(e)),
    );
    let mut g = x.transpose() * resid;
    for j in 1..g.len() {
        g[j] -= ridge * beta[j];
    }
    g.iter().copied().collect()
}

fn check_labels(labels: &[u8]) -> Result<()> {
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("labels must be 0 or 1, found {l}")));
    }
    Ok(())
}

/// Newton (IRLS) iterations on the ridge-penalized log-likelihood with step halving.
pub fn logistic_fit(features: &DMatrix<f64>, labels: &[u8], opts: &LogisticOptions) -> Result<LogisticFit> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    check_labels(labels)?;
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass);
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    let x = design(features);
    let p = x.ncols();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut beta = DVector::zeros(p);
    let mut ll = penalized_loglik(&x, &y, &beta, opts.ridge);
    for iter in 1..=opts.max_iter {
        let eta = &x * &beta;
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = x.transpose() * DVector::from_iterator(n, y.iter().zip(&prob).map(|(y, p)| y - p));
        let mut hess = DMatrix::zeros(p, p);
        for (i, &pi) in prob.iter().enumerate() {
            let w = pi * (1.0 - pi);
            let row = x.row(i);
            for a in 0..p {
                let wa = w * row[a];
                for b in a..p {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for j in 1..p {
            hess[(j, j)] += opts.ridge;
            grad[j] -= opts.ridge * beta[j];
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                let jitter = 1e-12 * hess.diagonal().amax().max(1.0);
                for j in 0..p {
                    hess[(j, j)] += jitter;
                }
                hess.cholesky()
                    .ok_or_else(|| Error::NonFinite("logistic Hessian is singular".into()))?
                    .solve(&grad)
            }
        };
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = penalized_loglik(&x, &y, &next, opts.ridge);
        while !(next_ll >= ll - 1e-12 * ll.abs()) && scale > 1e-10 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_ll = penalized_loglik(&x, &y, &next, opts.ridge);
        }
        if next.iter().any(|v| !v.is_finite()) || !next_ll.is_finite() {
            return Err(Error::NonFinite("logistic weights diverged".into()));
        }
        let change = (&next - &beta).amax();
        beta = next;
        ll = next_ll;
        if change < opts.tol {
            return Ok(LogisticFit {
                weights: beta.iter().copied().collect(),
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(LogisticFit {
        weights: beta.iter().copied().collect(),
        iterations: opts.max_iter,
        converged: false,
    })
}

impl LogisticFit {
    pub fn probabilities(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() + 1 != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len() - 1,
                found: features.ncols(),
            });
        }
        Ok(features
            .row_iter()
            .map(|row| {
                let eta = self.weights[0] + row.iter().zip(&self.weights[1..]).map(|(x, w)| x * w).sum::<f64>();
                sigmoid(eta)
            })
            .collect())
    }

    /// Class 1 exactly where the fitted probability exceeds 0.5.
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<u8>> {
        Ok(self
            .probabilities(features)?
            .into_iter()
            .map(|p| u8::from(p > 0.5))
            .collect())
    }
}

/// Score features with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub features: DMatrix<f64>,
    pub labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(features: DMatrix<f64>, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        check_labels(&labels)?;
        Ok(LabeledScores { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    fn subset(&self, rows: &[usize], k: usize) -> (DMatrix<f64>, Vec<u8>) {
        let x = DMatrix::from_fn(rows.len(), k, |i, j| self.features[(rows[i], j)]);
        let y = rows.iter().map(|&r| self.labels[r]).collect();
        (x, y)
    }

    fn class_indices(&self) -> [Vec<usize>; 2] {
        let mut out = [Vec::new(), Vec::new()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: k,
            });
        }
        Ok(())
    }
}

/// Fraction misclassified when fitting on `train` and predicting `test`, using the first `k` features.
pub fn holdout_error(data: &LabeledScores, train: &[usize], test: &[usize], k: usize, opts: &LogisticOptions) -> Result<f64> {
    let (xt, yt) = data.subset(train, k);
    let fit = logistic_fit(&xt, &yt, opts)?;
    let (xs, ys) = data.subset(test, k);
    let pred = fit.predict(&xs)?;
    let wrong = pred.iter().zip(&ys).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
    pub errors: Vec<f64>,
}

/// Attempts per repeat before a failing draw aborts the evaluation.
const MAX_REDRAWS: usize = 20;

fn stratified_split(classes: &[Vec<usize>; 2], train_size: usize, n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n1 = classes[1].len();
    let want1 = ((train_size * n1) as f64 / n as f64).round() as usize;
    let take1 = want1.clamp(1, n1.saturating_sub(1).max(1));
    let take0 = (train_size - take1.min(train_size)).min(classes[0].len());
    let mut train = Vec::with_capacity(train_size);
    let mut test = Vec::with_capacity(n - train_size);
    for (class, take) in [(&classes[0], take0), (&classes[1], take1)] {
        let mut idx = class.clone();
        idx.shuffle(rng);
        train.extend_from_slice(&idx[..take]);
        test.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Repeated stratified train/test splits with `train_size` training samples.
pub fn evaluate_split(
    data: &LabeledScores,
    k: usize,
    train_size: usize,
    repeats: usize,
    seed: u64,
    opts: &LogisticOptions,
) -> Result<SplitReport> {
    data.check_k(k)?;
    let runs = repeated_splits(data, train_size, repeats, seed, |train, test, _| {
        Ok((holdout_error(data, train, test, k, opts)?, k))
    })?;
    let errors: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (mean, sd) = mean_sd(&errors);
    Ok(SplitReport { k, mean, sd, errors })
}

/// Repeated splits where each training set picks its own `K` by stratified
/// `folds`-fold CV over `ks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSplitReport {
    pub mean: f64,
    pub sd: f64,
    pub mean_k: f64,
    pub errors: Vec<f64>,
    pub chosen: Vec<usize>,
}

pub fn evaluate_split_cv(
    data: &LabeledScores,
    ks: &[usize],
    folds: usize,
    train_size: usize,
    repeats: usize,
    seed: u64,
    opts: &LogisticOptions,
) -> Result<CvSplitReport> {
    for &k in ks {
        data.check_k(k)?;
    }
    let runs = repeated_splits(data, train_size, repeats, seed, |train, test, fold_seed| {
        let (x, y) = data.subset(train, data.n_features());
        let inner = LabeledScores::new(x, y)?;
        let k = cv_select_k(&inner, ks, folds, fold_seed, opts)?.k;
        Ok((holdout_error(data, train, test, k, opts)?, k))
    })?;
    let errors: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let chosen: Vec<usize> = runs.iter().map(|r| r.1).collect();
    let (mean, sd) = mean_sd(&errors);
    let mean_k = chosen.iter().sum::<usize>() as f64 / chosen.len() as f64;
    Ok(CvSplitReport {
        mean,
        sd,
        mean_k,
        errors,
        chosen,
    })
}

/// Runs `eval(train, test, seed)` on `repeats` stratified splits. A draw whose
/// training set yields a single class or a non-finite fit is redrawn.
fn repeated_splits<F>(data: &LabeledScores, train_size: usize, repeats: usize, seed: u64, eval: F) -> Result<Vec<(f64, usize)>>
where
    F: Fn(&[usize], &[usize], u64) -> Result<(f64, usize)> + Sync,
{
    let n = data.len();
    if train_size < 2 || train_size >= n {
        return Err(Error::InvalidInput(format!("training size {train_size} must lie in [2, {n})")));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    let classes = data.class_indices();
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::SingleClass);
    }
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, r));
            let mut last = Error::SingleClass;
            for attempt in 0..MAX_REDRAWS {
                let (train, test) = stratified_split(&classes, train_size, n, &mut rng);
                match eval(&train, &test, child_seed(seed ^ 0x5eed, r * MAX_REDRAWS + attempt)) {
                    Ok(out) => return Ok(out),
                    Err(e @ (Error::SingleClass | Error::NonFinite(_))) => last = e,
                    Err(e) => return Err(e),
                }
            }
            Err(last)
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = if values.len() > 1 {
        (values.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub k: usize,
    /// `(K, misclassification rate)` for every candidate.
    pub errors: Vec<(usize, f64)>,
}

/// `K` minimizing stratified `folds`-fold CV misclassification; ties go to the smallest `K`.
pub fn cv_select_k(data: &LabeledScores, ks: &[usize], folds: usize, seed: u64, opts: &LogisticOptions) -> Result<CvSelection> {
    if ks.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if folds < 2 || data.len() < folds {
        return Err(Error::InvalidInput(format!("{folds}-fold CV needs at least {folds} samples and 2 folds")));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        data.check_k(k)?;
    }
    let assign = stratified_folds(&data.labels, folds, seed);
    let errors = ks
        .iter()
        .map(|&k| {
            let mut wrong = 0.0;
            for f in 0..folds {
                let train: Vec<usize> = (0..data.len()).filter(|&i| assign[i] != f).collect();
                let test: Vec<usize> = (0..data.len()).filter(|&i| assign[i] == f).collect();
                if test.is_empty() {
                    continue;
                }
                wrong += holdout_error(data, &train, &test, k, opts)? * test.len() as f64;
            }
            Ok((k, wrong / data.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = errors.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let k = errors.iter().find(|e| e.1 <= best).expect("nonempty").0;
    Ok(CvSelection { k, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn intercept_only_is_the_logit() {
        let labels = vec![1, 0, 0, 1, 1, 1, 0, 1];
        let fit = logistic_fit(&DMatrix::zeros(8, 0), &labels, &LogisticOptions::default()).unwrap();
        let frac: f64 = 5.0 / 8.0;
        assert!((fit.weights[0] - (frac / (1.0 - frac)).ln()).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn gradient_vanishes_at_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 60;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels: Vec<u8> = (0..n)
            .map(|i| u8::from(x[(i, 0)] - 0.5 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal) > 0.0))
            .collect();
        let opts = LogisticOptions::default();
        let fit = logistic_fit(&x, &labels, &opts).unwrap();
        let g = penalized_gradient(&x, &labels, &fit.weights, opts.ridge);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn separated_feature_is_classified_perfectly() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let labels = vec![0, 0, 0, 1, 1, 1];
        let fit = logistic_fit(&x, &labels, &LogisticOptions::default()).unwrap();
        assert!(fit.weights.iter().all(|w| w.is_finite()));
        assert_eq!(fit.predict(&x).unwrap(), labels);
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(logistic_fit(&x, &[1, 1, 1], &LogisticOptions::default()).unwrap_err(), Error::SingleClass);
        assert!(LabeledScores::new(x, vec![0, 2, 1]).is_err());
    }

    #[test]
    fn threshold_at_one_half() {
        let fit = LogisticFit {
            weights: vec![0.0, 1.0],
            iterations: 0,
            converged: true,
        };
        let x = DMatrix::from_column_slice(3, 1, &[-1e-3, 0.0, 1e-3]);
        assert_eq!(fit.predict(&x).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let f = stratified_folds(&labels, 5, 9);
        for fold in 0..5 {
            let ones = (0..23).filter(|&i| f[i] == fold && labels[i] == 1).count();
            assert!((1..=2).contains(&ones));
        }
        assert_eq!(f, stratified_folds(&labels, 5, 9));
    }
}
