//! Nonconformity scores, calibration and prediction sets.

use ltlplan::conformal::{
    calibrate, causal_sets, joint_confidence, label, nonconformity_raps, nonconformity_vanilla,
    predict_set, product_size, quantile_index, CalibrationModel, CalibrationPoint, CalibrationSet,
    CalibrationStep, Method, PredictionSet, RapsParams,
};
use ltlplan::scorer::ScoreVector;
use proptest::prelude::*;

fn sv(softmax: Vec<f64>) -> ScoreVector {
    ScoreVector {
        raw: softmax.iter().map(|g| g.ln()).collect(),
        softmax,
    }
}

fn model(method: Method, q_hat: f64) -> CalibrationModel {
    CalibrationModel {
        method,
        alpha: 0.05,
        q_hat,
        raps: (method == Method::Raps).then(RapsParams::default),
        n: 50,
        decision_count: 18,
        degenerate: false,
    }
}

fn single(softmax: Vec<f64>, truth: usize) -> CalibrationPoint {
    CalibrationPoint {
        steps: vec![CalibrationStep {
            prompt_digest: String::new(),
            softmax,
            truth,
        }],
    }
}

fn set_of(points: Vec<CalibrationPoint>, alpha: f64, method: Method) -> CalibrationSet {
    CalibrationSet {
        method,
        alpha,
        raps: RapsParams::default(),
        points,
    }
}

fn sizes(sizes: &[usize]) -> Vec<PredictionSet> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| PredictionSet {
            members: (0..n).collect(),
            step_index: i,
            singleton: n == 1,
            forced_argmax: false,
        })
        .collect()
}

#[test]
fn vanilla_nonconformity_examples() {
    assert_eq!(nonconformity_vanilla(&sv(vec![1.0, 0.0]), 0), 0.0);
    let uniform = sv(vec![1.0 / 18.0; 18]);
    assert!((nonconformity_vanilla(&uniform, 5) - 17.0 / 18.0).abs() < 1e-12);
    assert!((nonconformity_vanilla(&sv(vec![0.95, 0.05]), 0) - 0.05).abs() < 1e-12);
}

#[test]
fn raps_nonconformity_examples() {
    let v = sv(vec![0.6, 0.3, 0.1]);
    let p = RapsParams {
        lambda: 5.0,
        k_reg: 2,
    };
    assert_eq!(nonconformity_raps(&v, 0, &p), 0.6);

    let uniform = sv(vec![0.25; 4]);
    let zero = RapsParams {
        lambda: 0.0,
        k_reg: 2,
    };
    assert!((nonconformity_raps(&uniform, 2, &zero) - 0.75).abs() < 1e-12);

    let g = vec![0.4, 0.25, 0.15, 0.1, 0.06, 0.04];
    let params = RapsParams {
        lambda: 0.01,
        k_reg: 2,
    };
    let truth = 3;
    let want = 0.4 + 0.25 + 0.15 + 0.1 + 0.02;
    assert!((nonconformity_raps(&sv(g), truth, &params) - want).abs() < 1e-12);
}

#[test]
fn fifty_points_use_the_forty_ninth_score() {
    assert_eq!(quantile_index(50, 0.05), 49);
    let points: Vec<CalibrationPoint> = (0..50)
        .map(|i| {
            let g = 1.0 - (i as f64 + 1.0) / 100.0;
            single(vec![g, 1.0 - g], 0)
        })
        .collect();
    let m = calibrate(&set_of(points, 0.05, Method::Vanilla)).unwrap();
    assert!((m.q_hat - 0.49).abs() < 1e-12);
    assert!(!m.degenerate);
}

#[test]
fn tiny_calibration_set_is_degenerate() {
    let points = vec![single(vec![0.9, 0.1], 0); 4];
    let m = calibrate(&set_of(points, 0.05, Method::Vanilla)).unwrap();
    assert!(m.degenerate);
    let s = predict_set(&m, &sv(vec![0.9, 0.1]), 0);
    assert_eq!(s.members, [0, 1]);
}

#[test]
fn zero_threshold_keeps_only_argmax() {
    let points = vec![single(vec![1.0, 0.0, 0.0], 0); 50];
    let m = calibrate(&set_of(points, 0.05, Method::Vanilla)).unwrap();
    assert_eq!(m.q_hat, 0.0);
    let s = predict_set(&m, &sv(vec![0.2, 0.7, 0.1]), 0);
    assert_eq!(s.members, [1]);
    assert!(s.forced_argmax && s.singleton);
}

#[test]
fn prediction_set_examples() {
    let mut g = vec![0.01 / 17.0; 18];
    g[3] = 0.99;
    assert_eq!(
        predict_set(&model(Method::Vanilla, 0.1), &sv(g), 0).members,
        [3]
    );

    let mut g = vec![0.05 / 16.0; 18];
    g[0] = 0.48;
    g[1] = 0.47;
    let s = predict_set(&model(Method::Vanilla, 0.55), &sv(g), 0);
    assert!(s.len() >= 2 && s.contains(0) && s.contains(1));

    let degenerate = CalibrationModel {
        degenerate: true,
        ..model(Method::Vanilla, 1.0)
    };
    assert_eq!(
        predict_set(&degenerate, &sv(vec![1.0 / 18.0; 18]), 0).len(),
        18
    );
}

#[test]
fn product_and_label_examples() {
    assert_eq!(product_size(&sizes(&[1; 7])), 1);
    assert_eq!(product_size(&sizes(&[1, 2, 1])), 2);
    assert!(label(&sizes(&[1; 7])));
    assert!(!label(&sizes(&[1, 2, 1])));
    assert!(label(&[]));
}

#[test]
fn joint_confidence_examples() {
    assert!((joint_confidence(0.05, 5) - 0.7738).abs() < 5e-4);
    assert_eq!(joint_confidence(0.05, 0), 1.0);
    assert!((joint_confidence(0.05, 1) - 0.95).abs() < 1e-12);
}

#[test]
fn invalid_inputs_are_rejected() {
    let p = vec![single(vec![0.5, 0.5], 0)];
    assert!(calibrate(&set_of(p.clone(), 0.0, Method::Vanilla)).is_err());
    assert!(calibrate(&set_of(Vec::new(), 0.05, Method::Vanilla)).is_err());
    assert!(calibrate(&set_of(
        vec![single(vec![0.5, 0.5], 2)],
        0.05,
        Method::Vanilla
    ))
    .is_err());
}

fn softmax_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-4.0f64..4.0, n)
        .prop_map(|raw| ScoreVector::from_raw(raw, 1.0).softmax)
}

fn point_strategy(steps: usize, n: usize) -> impl Strategy<Value = CalibrationPoint> {
    proptest::collection::vec((softmax_strategy(n), 0..n), 1..=steps).prop_map(|steps| {
        CalibrationPoint {
            steps: steps
                .into_iter()
                .map(|(softmax, truth)| CalibrationStep {
                    prompt_digest: String::new(),
                    softmax,
                    truth,
                })
                .collect(),
        }
    })
}

/// Brute-force vanilla threshold: sort `1 - min_t g_t(truth_t)` and take the
/// `ceil((n + 1)(1 - alpha))`-th value, counting with integers.
fn brute_q_hat(points: &[CalibrationPoint], alpha_pct: usize) -> Option<f64> {
    let mut scores: Vec<f64> = points
        .iter()
        .map(|p| {
            p.steps
                .iter()
                .map(|s| 1.0 - s.softmax[s.truth])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((points.len() + 1) * (100 - alpha_pct)).div_ceil(100);
    (k <= points.len()).then(|| scores[k - 1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn quantile_matches_sort_and_index(
        points in proptest::collection::vec(point_strategy(3, 5), 1..=100),
        alpha_pct in 1usize..50,
    ) {
        let m = calibrate(&set_of(points.clone(), alpha_pct as f64 / 100.0, Method::Vanilla)).unwrap();
        match brute_q_hat(&points, alpha_pct) {
            Some(q) => {
                prop_assert!(!m.degenerate);
                prop_assert_eq!(m.q_hat, q);
            }
            None => prop_assert!(m.degenerate),
        }
    }

    #[test]
    fn smaller_alpha_never_lowers_the_threshold(
        points in proptest::collection::vec(point_strategy(3, 5), 1..=60),
        a in 1usize..50,
        b in 1usize..50,
        raps in any::<bool>(),
    ) {
        let method = if raps { Method::Raps } else { Method::Vanilla };
        let (lo, hi) = (a.min(b), a.max(b));
        let strict = calibrate(&set_of(points.clone(), lo as f64 / 100.0, method)).unwrap();
        let loose = calibrate(&set_of(points, hi as f64 / 100.0, method)).unwrap();
        prop_assert!(strict.q_hat >= loose.q_hat);
    }

    #[test]
    fn sets_grow_with_the_threshold(
        g in softmax_strategy(18),
        q1 in 0.0f64..1.2,
        q2 in 0.0f64..1.2,
        raps in any::<bool>(),
    ) {
        let method = if raps { Method::Raps } else { Method::Vanilla };
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let v = sv(g);
        let small = predict_set(&model(method, lo), &v, 0);
        let large = predict_set(&model(method, hi), &v, 0);
        for m in &small.members {
            prop_assert!(large.contains(*m));
        }
        prop_assert!(small.contains(v.argmax()));
    }

    #[test]
    fn product_membership_matches_sequence_membership(
        steps in proptest::collection::vec((softmax_strategy(6), 0usize..6), 3),
        q in 0.0f64..1.0,
    ) {
        let m = model(Method::Vanilla, q);
        let vectors: Vec<ScoreVector> = steps.iter().map(|(g, _)| sv(g.clone())).collect();
        let truth: Vec<usize> = steps.iter().map(|(_, t)| *t).collect();
        let sets = causal_sets(&m, &vectors);
        let mut product = Vec::new();
        for a in &sets[0].members {
            for b in &sets[1].members {
                for c in &sets[2].members {
                    product.push(vec![*a, *b, *c]);
                }
            }
        }
        prop_assert_eq!(product.len() as u128, product_size(&sets));
        let in_product = product.contains(&truth);
        let direct = vectors.iter().zip(&truth).all(|(v, &t)| {
            1.0 - v.softmax[t] < q || t == v.argmax()
        });
        prop_assert_eq!(in_product, direct);
    }

    #[test]
    fn independent_steps_lift_to_single_step_sets(
        steps in proptest::collection::vec(softmax_strategy(18), 1..8),
        q in 0.0f64..1.0,
        raps in any::<bool>(),
    ) {
        let method = if raps { Method::Raps } else { Method::Vanilla };
        let m = model(method, q);
        let vectors: Vec<ScoreVector> = steps.into_iter().map(sv).collect();
        let joint = causal_sets(&m, &vectors);
        for (t, v) in vectors.iter().enumerate() {
            let alone = predict_set(&m, v, 0);
            prop_assert_eq!(&joint[t].members, &alone.members);
            prop_assert_eq!(joint[t].step_index, t);
        }
    }
}
