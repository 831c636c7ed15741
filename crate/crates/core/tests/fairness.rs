use proptest::prelude::*;
use rand::Rng;
use trixlab::fairness::{
    attack_policy, build_similarity, class_mean_predictions, compute_weights, scale_epsilon, weight_vector,
    ClassMeanPredictions, ClassWeights, PolicyAverage, SimilarityMatrix,
};
use trixlab::{rng, Error, Tensor64};

/// Independent evaluation of the weight formula: every pair contributes
/// through indicator-masked gain and loss terms.
fn oracle(s: &[Vec<f64>], lambda: f64) -> Vec<f64> {
    let c = s.len();
    let mut w = Vec::with_capacity(c);
    for k in 0..c {
        let mut total = 0.0;
        for j in 0..c {
            if j != k {
                let below = if s[k][k] < s[j][j] { 1.0 } else { 0.0 };
                total += below * s[k][j] * s[j][j] - (1.0 - below) * s[j][k] * s[k][k];
            }
        }
        w.push(1.0 + lambda * total);
    }
    w
}

fn random_pbar(rng: &mut impl Rng, c: usize) -> Vec<Vec<f64>> {
    (0..c)
        .map(|_| {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|v| v / sum).collect()
        })
        .collect()
}

fn similarity(pbar: &[Vec<f64>], mu: f64) -> SimilarityMatrix<f64> {
    let c = pbar.len();
    let pbar = ClassMeanPredictions { matrix: Tensor64::from_rows(pbar).unwrap(), counts: vec![1; c] };
    build_similarity(&pbar, mu).unwrap()
}

#[test]
fn weight_vector_matches_double_loop_bitwise() {
    let mut rng = rng::stream(&[0x7e]);
    for case in 0..100 {
        let c = 2 + case % 19;
        let lambda = [0.0, 0.5, 1.0, 1.5][case % 4];
        let s = similarity(&random_pbar(&mut rng, c), 1e-8);
        let got = weight_vector(&s, lambda);
        let want = oracle(&s.to_rows(), lambda);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.to_bits(), w.to_bits(), "case {case} (C={c}, λ={lambda}): {got:?} vs {want:?}");
        }
        if let Ok(cw) = compute_weights(&s, lambda) {
            assert_eq!(cw.w, got);
        }
    }
}

#[test]
fn two_class_hand_example() {
    let s = similarity(&[vec![0.8, 0.2], vec![0.3, 0.7]], 0.0);
    assert_eq!(compute_weights(&s, 1.0).unwrap().w, vec![0.76, 1.24]);
}

#[test]
fn non_positive_weight_is_an_error() {
    let s = similarity(&[vec![0.8, 0.2], vec![0.3, 0.7]], 0.0);
    match compute_weights(&s, 5.0) {
        Err(Error::NonPositiveWeight { class: 0, weight }) => assert!(weight <= 0.0),
        other => panic!("expected NonPositiveWeight, got {other:?}"),
    }
}

#[test]
fn lambda_zero_gives_uniform_weights() {
    let mut rng = rng::stream(&[0x10]);
    for c in 2..12 {
        let s = similarity(&random_pbar(&mut rng, c), 1e-8);
        assert!(weight_vector(&s, 0.0).iter().all(|&w| w == 1.0));
    }
}

#[test]
fn mu_shifts_only_the_diagonal() {
    let pbar = random_pbar(&mut rng::stream(&[0x11]), 4);
    let s = similarity(&pbar, 0.25).to_rows();
    for i in 0..4 {
        for j in 0..4 {
            let want = pbar[i][j] + if i == j { 0.25 } else { 0.0 };
            assert_eq!(s[i][j], want);
        }
    }
}

proptest! {
    #[test]
    fn class_mean_rows_are_distributions(
        rows in proptest::collection::vec((proptest::collection::vec(0.01f64..1.0, 3), 0usize..3), 1..40)
    ) {
        let probs: Vec<Vec<f64>> = rows.iter().map(|(r, _)| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        }).collect();
        let labels: Vec<usize> = rows.iter().map(|(_, y)| *y).collect();
        let pbar = class_mean_predictions(&Tensor64::from_rows(&probs).unwrap(), &labels, 3).unwrap();
        for c in 0..3 {
            let row = pbar.matrix.row(c);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(pbar.counts[c], labels.iter().filter(|&&y| y == c).count());
        }
    }

    #[test]
    fn weight_deviations_sum_to_zero_free_transfer(c in 2usize..10, seed in any::<u64>(), lambda in 0.0f64..2.0) {
        // Every pair moves S[k][j]·S[j][j] from one class to the other, so
        // when no diagonals tie the deviations from 1 cancel.
        let s = similarity(&random_pbar(&mut rng::stream(&[seed]), c), 1e-8);
        let w = weight_vector(&s, lambda);
        let sum: f64 = w.iter().map(|v| v - 1.0).sum();
        prop_assert!(sum.abs() < 1e-9 * c as f64 * c as f64);
    }

    #[test]
    fn scaled_epsilon_stays_within_half_and_three_halves(
        w in proptest::collection::vec(-1.0f64..4.0, 2..8),
        eps in 0.001f64..0.5,
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..20),
    ) {
        let labels: Vec<usize> = picks.iter().map(|i| i.index(w.len())).collect();
        let cw = ClassWeights { w: w.clone(), lambda: 1.0 };
        for (e, &y) in scale_epsilon(eps, &cw, &labels, true).iter().zip(&labels) {
            prop_assert!(*e >= 0.5 * eps && *e <= 1.5 * eps);
            if (0.5..=1.5).contains(&w[y]) {
                prop_assert_eq!(*e, eps * w[y]);
            }
        }
        prop_assert!(scale_epsilon(eps, &cw, &labels, false).iter().all(|&e| e == eps));
    }

    #[test]
    fn policy_targets_exactly_the_below_average_samples(
        w in proptest::collection::vec(0.1f64..3.0, 2..8),
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..20),
    ) {
        let labels: Vec<usize> = picks.iter().map(|i| i.index(w.len())).collect();
        let cw = ClassWeights { w: w.clone(), lambda: 1.0 };
        let batch_avg = labels.iter().map(|&y| w[y]).sum::<f64>() / labels.len() as f64;
        let flags = attack_policy(&cw, &labels, PolicyAverage::Batch).unwrap();
        for (&f, &y) in flags.iter().zip(&labels) {
            if w[y] < batch_avg - 1e-12 {
                prop_assert!(f);
            } else if w[y] > batch_avg + 1e-12 {
                prop_assert!(!f);
            }
        }
        // The lowest-weight class present is always targeted, even when
        // rounding puts the computed mean just below it.
        let min = labels.iter().map(|&y| w[y]).fold(f64::INFINITY, f64::min);
        prop_assert!(flags.iter().zip(&labels).all(|(&f, &y)| f || w[y] > min));
    }
}

#[test]
fn identical_weights_are_ties() {
    let cw = ClassWeights { w: vec![0.1 + 0.2, 0.7], lambda: 1.0 };
    assert!(attack_policy(&cw, &[0, 0, 0], PolicyAverage::Batch).unwrap().iter().all(|&f| f));
}

#[test]
fn uniform_weights_target_everyone() {
    let cw = ClassWeights::<f64>::uniform(4);
    assert!(attack_policy(&cw, &[0, 1, 2, 3, 3], PolicyAverage::Batch).unwrap().iter().all(|&f| f));
    assert!(attack_policy(&cw, &[0, 2], PolicyAverage::Classes).unwrap().iter().all(|&f| f));
}
