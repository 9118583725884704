use dpca::classify::{cv_select_k, evaluate_split, logistic_fit, LabeledScores, LogisticOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// Labels are the sign of column 2; the other columns are noise.
fn second_feature_signal(seed: u64, n: usize) -> LabeledScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = noise_matrix(&mut rng, n, 5);
    let labels = (0..n)
        .map(|i| u8::from(x[(i, 1)] > 0.0))
        .collect();
    LabeledScores::new(x, labels).unwrap()
}

#[test]
fn chance_labels_give_half_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = noise_matrix(&mut rng, 120, 3);
    let labels = (0..120).map(|i| (i % 2) as u8).collect();
    let data = LabeledScores::new(x, labels).unwrap();
    let report = evaluate_split(&data, 3, 30, 500, 4, &LogisticOptions::default()).unwrap();
    assert!((report.mean - 0.5).abs() < 0.05, "mean error {}", report.mean);
    assert!((0.0..=0.5).contains(&report.sd));
    assert_eq!(report, evaluate_split(&data, 3, 30, 500, 4, &LogisticOptions::default()).unwrap());
}

#[test]
fn sign_labels_are_learned_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = noise_matrix(&mut rng, 80, 1);
    let labels = x.column(0).iter().map(|&v| u8::from(v > 0.0)).collect();
    let data = LabeledScores::new(x, labels).unwrap();
    let report = evaluate_split(&data, 1, 30, 100, 1, &LogisticOptions::default()).unwrap();
    assert!(report.mean < 0.02, "mean error {}", report.mean);
}

#[test]
fn duplicated_column_leaves_predictions_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = noise_matrix(&mut rng, 60, 2);
    let labels: Vec<u8> = (0..60)
        .map(|i| u8::from(x[(i, 0)] - 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal) > 0.0))
        .collect();
    let dup = DMatrix::from_fn(60, 3, |i, j| x[(i, j.min(1))]);
    let opts = LogisticOptions::default();
    let p = logistic_fit(&x, &labels, &opts).unwrap().probabilities(&x).unwrap();
    let q = logistic_fit(&dup, &labels, &opts).unwrap().probabilities(&dup).unwrap();
    let worst = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "largest change {worst}");
}

#[test]
fn cv_prefers_the_informative_second_feature() {
    let opts = LogisticOptions::default();
    let seeds = 50;
    let hits = (0..seeds)
        .filter(|&s| {
            let data = second_feature_signal(100 + s, 100);
            let sel = cv_select_k(&data, &[1, 2, 3, 4, 5], 5, s, &opts).unwrap();
            sel.k == 2
        })
        .count();
    assert!(hits as f64 / seeds as f64 > 0.8, "K=2 chosen {hits} of {seeds} times");
}

#[test]
fn single_candidate_is_returned() {
    let data = second_feature_signal(1, 40);
    let sel = cv_select_k(&data, &[1], 5, 0, &LogisticOptions::default()).unwrap();
    assert_eq!(sel.k, 1);
    assert_eq!(sel, cv_select_k(&data, &[1], 5, 0, &LogisticOptions::default()).unwrap());
}
