//! Property tests for the evidence, LogME, ranking and predictive invariants.

mod common;

use std::path::PathBuf;

use faer::Mat;
use hubrank::evidence::{decompose, evaluate_evidence, maximize_evidence, Backend, SolverOptions};
use hubrank::logme::{compute_logme, LogMeOptions, TaskLabels};
use hubrank::predictive::{b_tuning_loss, ensemble_target, PredictiveHead};
use hubrank::ranking::{kendall_tau, weighted_tau, ScorePair, TruthDirection};
use hubrank::{FeatureMatrix, LabelVector};
use proptest::prelude::*;
use serde::Deserialize;

use common::*;

fn small_instance(seed: u64, n: usize, d: usize) -> (FeatureMatrix, LabelVector) {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
    let f = FeatureMatrix::from_fn(n, d, |_, _| normal(&mut r)).unwrap();
    let y = (0..n)
        .map(|i| (0..d).map(|j| f.get(i, j) * w[j]).sum::<f64>() + 0.5 * normal(&mut r))
        .collect();
    (f, LabelVector::new(y).unwrap())
}

fn regression_labels(y: &LabelVector) -> TaskLabels {
    TaskLabels::regression(Mat::from_fn(y.len(), 1, |i, _| y.as_slice()[i])).unwrap()
}

fn logme_of(f: &FeatureMatrix, labels: &TaskLabels) -> f64 {
    compute_logme(f, labels, &LogMeOptions::default())
        .unwrap()
        .logme
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evidence_matches_gram_route(seed in 0u64..10_000, n in 5usize..80, d in 1usize..12,
                                   la in -4.0f64..4.0, lb in -4.0f64..4.0) {
        let (f, y) = small_instance(seed, n, d);
        let svd = decompose(&f).unwrap();
        let (alpha, beta) = (la.exp(), lb.exp());
        let (got, _) = evaluate_evidence(&svd, &y, alpha, beta).unwrap();
        let want = GramOracle::new(&to_na(&f), y.as_slice()).log_evidence(alpha, beta);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn backends_agree(seed in 0u64..10_000, n in 20usize..150, d in 1usize..10) {
        let (f, y) = small_instance(seed, n, d);
        let svd = decompose(&f).unwrap();
        let opts = SolverOptions::default();
        let sols: Vec<_> = Backend::ALL
            .iter()
            .map(|&b| maximize_evidence(&f, &svd, &y, b, &opts).unwrap())
            .collect();
        for s in &sols[..2] {
            prop_assert!((s.normalized_evidence - sols[2].normalized_evidence).abs() <= 1e-6);
            prop_assert!((s.t - sols[2].t).abs() <= 1e-4 * sols[2].t);
        }
    }

    #[test]
    fn converged_solution_is_a_stationary_point(seed in 0u64..10_000, n in 30usize..150, d in 1usize..8) {
        let (f, y) = small_instance(seed, n, d);
        let svd = decompose(&f).unwrap();
        let s = maximize_evidence(&f, &svd, &y, Backend::FixedPoint, &SolverOptions {
            tolerance: 1e-12,
            max_iterations: 10_000,
            ..SolverOptions::default()
        }).unwrap();
        prop_assume!(s.converged);
        let oracle = GramOracle::new(&to_na(&f), y.as_slice());
        let best = oracle.log_evidence(s.alpha, s.beta);
        for (fa, fb) in [(1.01, 1.0), (0.99, 1.0), (1.0, 1.01), (1.0, 0.99)] {
            prop_assert!(oracle.log_evidence(s.alpha * fa, s.beta * fb) <= best + 1e-9 * best.abs());
        }
    }

    #[test]
    fn row_permutation_leaves_logme_unchanged(seed in 0u64..10_000, n in 10usize..80, d in 1usize..8) {
        let (f, y) = small_instance(seed, n, d);
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        prop_assume!({
            let mut p = perm.clone();
            p.sort_unstable();
            p.dedup();
            p.len() == n
        });
        let fp = FeatureMatrix::from_fn(n, d, |i, j| f.get(perm[i], j)).unwrap();
        let yp = LabelVector::new(perm.iter().map(|&i| y.as_slice()[i]).collect()).unwrap();
        let a = logme_of(&f, &regression_labels(&y));
        let b = logme_of(&fp, &regression_labels(&yp));
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn duplicated_and_padded_features_leave_logme_unchanged(seed in 0u64..10_000, n in 10usize..80,
                                                             d in 1usize..8, q in 2usize..5, pad in 1usize..20) {
        let (f, y) = small_instance(seed, n, d);
        let labels = regression_labels(&y);
        let base = logme_of(&f, &labels);
        let dup = FeatureMatrix::concat_columns(&vec![&f; q]).unwrap();
        let zeros = FeatureMatrix::from_fn(n, pad, |_, _| 0.0).unwrap();
        let padded = FeatureMatrix::concat_columns(&[&f, &zeros]).unwrap();
        prop_assert!((logme_of(&dup, &labels) - base).abs() <= 1e-8);
        prop_assert!((logme_of(&padded, &labels) - base).abs() <= 1e-8);
    }

    #[test]
    fn scaling_and_rotation_leave_logme_unchanged(seed in 0u64..10_000, n in 10usize..80,
                                                   d in 1usize..8, lc in -4.0f64..6.0) {
        let (f, y) = small_instance(seed, n, d);
        let labels = regression_labels(&y);
        let base = logme_of(&f, &labels);
        let c = lc.exp();
        let scaled = FeatureMatrix::from_fn(n, d, |i, j| c * f.get(i, j)).unwrap();
        let rotated = na_to_features(&(to_na(&f) * random_orthogonal(d, seed)));
        prop_assert!((logme_of(&scaled, &labels) - base).abs() <= 1e-8);
        prop_assert!((logme_of(&rotated, &labels) - base).abs() <= 1e-8);
    }

    #[test]
    fn tau_is_bounded_and_symmetric(x in prop::collection::vec(-5.0f64..5.0, 2..20),
                                    seed in 0u64..1000) {
        let mut r = rng(seed);
        let y: Vec<f64> = x.iter().map(|v| v + normal(&mut r)).collect();
        let pair = ScorePair::new(x.clone(), y.clone(), TruthDirection::HigherBetter).unwrap();
        let swapped = ScorePair::new(y, x, TruthDirection::HigherBetter).unwrap();
        let k = kendall_tau(&pair);
        prop_assert!((-1.0..=1.0).contains(&k));
        prop_assert!((k - kendall_tau(&swapped)).abs() <= 1e-12);
        if let (Ok(a), Ok(b)) = (weighted_tau(&pair), weighted_tau(&swapped)) {
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn weighted_tau_matches_pairwise_definition(seed in 0u64..10_000, m in 2usize..25) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let y: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let pair = ScorePair::new(y.clone(), x.clone(), TruthDirection::HigherBetter).unwrap();
        let got = weighted_tau(&pair).unwrap();
        prop_assert!((got - weighted_tau_pairwise(&x, &y)).abs() <= 1e-12);
    }

    #[test]
    fn monotone_score_maps_preserve_tau(seed in 0u64..10_000, m in 2usize..25) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let s: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let mapped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 2.0).collect();
        let a = ScorePair::new(s, x.clone(), TruthDirection::HigherBetter).unwrap();
        let b = ScorePair::new(mapped, x, TruthDirection::HigherBetter).unwrap();
        prop_assert!((kendall_tau(&a) - kendall_tau(&b)).abs() <= 1e-12);
        prop_assert!((weighted_tau(&a).unwrap() - weighted_tau(&b).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn lower_better_equals_negated_truths(seed in 0u64..10_000, m in 2usize..20) {
        let mut r = rng(seed);
        let t: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let s: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        let a = ScorePair::new(s.clone(), t, TruthDirection::LowerBetter).unwrap();
        let b = ScorePair::new(s, neg, TruthDirection::HigherBetter).unwrap();
        prop_assert_eq!(weighted_tau(&a).unwrap(), weighted_tau(&b).unwrap());
        prop_assert_eq!(kendall_tau(&a), kendall_tau(&b));
    }

    #[test]
    fn covariance_inverts_precision(seed in 0u64..10_000, n in 10usize..60, d in 1usize..10) {
        let (f, labels) = classification_instance(seed, n.max(3), d, 3);
        let report = compute_logme(&f, &TaskLabels::classification(labels, 3).unwrap(),
                                   &LogMeOptions::default()).unwrap();
        let head = PredictiveHead::from_report(&report, "m", f.content_hash(), 3).unwrap();
        let mut r = rng(seed + 1);
        let v: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
        for c in head.class_dimensions() {
            let back = head.apply_covariance(c, &head.apply_precision(c, &v).unwrap()).unwrap();
            let err: f64 = v.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-8 * norm.max(1e-300));
        }
    }
}

#[derive(Deserialize)]
struct Reference {
    truths: Vec<f64>,
    scores: Vec<f64>,
    tau_w: f64,
    tau: f64,
}

#[test]
fn tau_matches_reference_values_with_ties() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tau_reference.json");
    let cases: Vec<Reference> =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    for c in &cases {
        let pair = ScorePair::new(
            c.scores.clone(),
            c.truths.clone(),
            TruthDirection::HigherBetter,
        )
        .unwrap();
        let got = weighted_tau(&pair).unwrap();
        assert!((got - c.tau_w).abs() <= 1e-12, "{got} vs {}", c.tau_w);
        let tie_free = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[0] != w[1])
        };
        if tie_free(&c.truths) && tie_free(&c.scores) {
            assert!((kendall_tau(&pair) - c.tau).abs() <= 1e-12);
        }
    }
}

#[test]
fn predictive_variance_shrinks_with_more_data() {
    let (f, y) = small_instance(17, 400, 5);
    let query = [0.3, -1.0, 0.5, 2.0, -0.7];
    let mut last = f64::INFINITY;
    for n in [25, 50, 100, 200, 400] {
        let sub = FeatureMatrix::from_fn(n, 5, |i, j| f.get(i, j)).unwrap();
        let ys = LabelVector::new(y.as_slice()[..n].to_vec()).unwrap();
        let report =
            compute_logme(&sub, &regression_labels(&ys), &LogMeOptions::default()).unwrap();
        let head = PredictiveHead::from_report(&report, "m", sub.content_hash(), 1).unwrap();
        let (_, var) = head.predictive_distribution(0, &query).unwrap();
        // The noise floor 1/β is re-estimated at each n, so only the
        // parameter part is compared.
        let param = var - 1.0 / head.classes[0].beta;
        assert!(param <= last, "n={n}: {param} > {last}");
        last = param;
    }
}

#[test]
fn bayesian_loss_ignores_teacher_order_and_vanishes_on_self() {
    let (f1, labels) = classification_instance(1, 40, 4, 2);
    let task = TaskLabels::classification(labels.clone(), 2).unwrap();
    let (f2, _) = classification_instance(2, 40, 6, 2);
    let heads: Vec<PredictiveHead> = [&f1, &f2]
        .iter()
        .map(|f| {
            let r = compute_logme(f, &task, &LogMeOptions::default()).unwrap();
            PredictiveHead::from_report(&r, "t", f.content_hash(), 2).unwrap()
        })
        .collect();
    let ab = ensemble_target(&heads, &[&f1, &f2]).unwrap();
    let rev: Vec<PredictiveHead> = heads.iter().rev().cloned().collect();
    let ba = ensemble_target(&rev, &[&f2, &f1]).unwrap();
    let la = b_tuning_loss(&ab, f1.as_mat(), &heads[0]).unwrap();
    let lb = b_tuning_loss(&ba, f1.as_mat(), &heads[0]).unwrap();
    assert!((la - lb).abs() <= 1e-12 * la.max(1.0));

    let single = ensemble_target(&heads[..1], &[&f1]).unwrap();
    assert_eq!(b_tuning_loss(&single, f1.as_mat(), &heads[0]).unwrap(), 0.0);
}
