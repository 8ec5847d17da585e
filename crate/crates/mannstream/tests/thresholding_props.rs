//! Calibration pipeline properties on the planted task, plus safety
//! properties of the early-exit scan.

use mannstream::counters::OpCounters;
use mannstream::data::{synthesize_planted, QASample};
use mannstream::matrix::Matrix;
use mannstream::model::{exact_argmax, forward_hidden, output_logits, oracle_infer};
use mannstream::thresholding::{
    calibrate, collect_samples, thresholded_argmax, CalibrationError, ThresholdTable,
};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planted() -> mannstream::data::PlantedTask {
    synthesize_planted(5, 6, 3, 600, 41).unwrap()
}

#[test]
fn collect_samples_follows_the_update_loop() {
    // A two-class setup where the model is always right: every sample
    // contributes exactly one positive (at its label) and one negative.
    let task = synthesize_planted(2, 2, 1, 40, 13).unwrap();
    assert_eq!(task.model.dims.output_dim, 2);
    let set = collect_samples(&task.model, &task.samples).unwrap();
    assert_eq!(set.correct_samples(), 40);
    let pos_total: usize = (0..2).map(|i| set.positives(i).len()).sum();
    let neg_total: usize = (0..2).map(|i| set.negatives(i).len()).sum();
    assert_eq!(pos_total, 40);
    assert_eq!(neg_total, 40);
    let counts: u64 = set.class_counts().iter().sum();
    assert_eq!(counts, 40);
}

#[test]
fn hopeless_model_fails_calibration() {
    let task = planted();
    // Sabotage the labels so nothing is ever "correct".
    let wrong: Vec<QASample> = task
        .samples
        .iter()
        .map(|s| {
            let (predicted, _) = oracle_infer(&task.model, &s.story, &s.question).unwrap();
            QASample {
                answer: (predicted + 1) % task.model.dims.output_dim,
                ..s.clone()
            }
        })
        .collect();
    assert!(matches!(
        collect_samples(&task.model, &wrong),
        Err(CalibrationError::NoCorrectPredictions)
    ));
}

#[test]
fn planted_positives_dominate_negatives() {
    let task = planted();
    let set = collect_samples(&task.model, &task.samples).unwrap();
    for class in 0..task.model.dims.output_dim {
        let pos = set.positives(class);
        let neg = set.negatives(class);
        if pos.is_empty() {
            continue;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(pos) > mean(neg) + 0.5,
            "class {class}: positives {} vs negatives {}",
            mean(pos),
            mean(neg)
        );
    }
}

#[test]
fn calibration_is_deterministic_and_order_invariant() {
    let task = planted();
    let t1 = calibrate(&task.model, &task.samples, 0.99).unwrap();
    let t2 = calibrate(&task.model, &task.samples, 0.99).unwrap();
    assert_eq!(t1, t2);

    let mut shuffled = task.samples.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(999));
    let t3 = calibrate(&task.model, &shuffled, 0.99).unwrap();
    assert_eq!(t1.theta(), t3.theta());
    assert_eq!(t1.order(), t3.order());
    assert_eq!(t1.silhouette(), t3.silhouette());
}

#[test]
fn rho_one_keeps_a_finite_threshold_on_separable_data() {
    let task = planted();
    let table = calibrate(&task.model, &task.samples, 1.0).unwrap();
    assert!(
        table.finite_theta_count() >= 1,
        "no class is thresholdable at rho = 1.0"
    );
    // Reserved locations never answer, so they must be non-thresholdable
    // and sorted to the back.
    assert_eq!(table.theta()[0], f64::INFINITY);
    assert_eq!(table.theta()[1], f64::INFINITY);
    let order = table.order();
    assert!(order.iter().position(|&c| c == 0).unwrap() >= 4);
    assert!(order.iter().position(|&c| c == 1).unwrap() >= 4);
}

#[test]
fn thresholds_nest_as_rho_decreases() {
    let task = planted();
    let rhos = [1.0, 0.999, 0.99, 0.9, 0.5];
    let tables: Vec<ThresholdTable> = rhos
        .iter()
        .map(|&rho| calibrate(&task.model, &task.samples, rho).unwrap())
        .collect();
    for pair in tables.windows(2) {
        for class in 0..task.model.dims.output_dim {
            assert!(
                pair[1].theta()[class] <= pair[0].theta()[class],
                "thresholds not nested at class {class}"
            );
        }
    }
}

#[test]
fn calibrated_early_exit_agrees_with_exact_argmax() {
    // The end-to-end safety statement: at rho = 1.0 on the planted task the
    // early-exit path agrees with the exact argmax on at least 99.9% of a
    // held-out split, while spending fewer dot products on average.
    let task = synthesize_planted(5, 6, 3, 3000, 77).unwrap();
    let (train, test) = task.samples.split_at(2400);
    let table = calibrate(&task.model, train, 1.0).unwrap();
    let i = task.model.dims.output_dim as u64;

    let mut agree = 0usize;
    let mut dots_total = 0u64;
    for sample in test {
        let mut scratch = OpCounters::new();
        let hidden = forward_hidden(&task.model, &sample.story, &sample.question, &mut scratch)
            .unwrap();
        let logits = output_logits(&hidden, &task.model.w_o, &mut scratch).unwrap();
        let exact = exact_argmax(&logits, &mut scratch).unwrap();
        let (fast, dots) = thresholded_argmax(&hidden, &task.model.w_o, &table, &mut scratch);
        if fast == exact {
            agree += 1;
        }
        dots_total += dots;
        assert!(dots <= i);
    }
    let agreement = agree as f64 / test.len() as f64;
    assert!(agreement >= 0.999, "agreement {agreement}");
    let mean_dots = dots_total as f64 / test.len() as f64;
    assert!(mean_dots < i as f64, "mean dots {mean_dots} not below {i}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With every threshold infinite, the early-exit scan is extensionally
    /// the exact argmax, for arbitrary weights and inputs.
    #[test]
    fn infinite_thresholds_are_a_safe_fallback(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.gen_range(1..12usize);
        let e = rng.gen_range(1..6usize);
        let w_o = Matrix::from_fn(classes, e, |_, _| rng.gen_range(-2.0..2.0));
        let hidden: Vec<f64> = (0..e).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // Random evaluation order; all-equal silhouette keeps it valid.
        let mut order: Vec<usize> = (0..classes).collect();
        order.shuffle(&mut rng);
        let table = ThresholdTable::new(
            1.0,
            vec![f64::INFINITY; classes],
            order,
            vec![0.0; classes],
        )
        .unwrap();
        let mut scratch = OpCounters::new();
        let logits = output_logits(&hidden, &w_o, &mut scratch).unwrap();
        let exact = exact_argmax(&logits, &mut scratch).unwrap();
        let (fast, dots) = thresholded_argmax(&hidden, &w_o, &table, &mut scratch);
        prop_assert_eq!(fast, exact);
        prop_assert_eq!(dots, classes as u64);
    }

    /// Early exits only ever fire on logits that strictly clear their
    /// threshold, and the dot-product count matches the exit position.
    #[test]
    fn exit_position_matches_dot_count(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.gen_range(1..10usize);
        let e = rng.gen_range(1..5usize);
        let w_o = Matrix::from_fn(classes, e, |_, _| rng.gen_range(-1.0..1.0));
        let hidden: Vec<f64> = (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let theta: Vec<f64> = (0..classes)
            .map(|_| if rng.gen_bool(0.5) { f64::INFINITY } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let table = ThresholdTable::new(
            0.5,
            theta.clone(),
            (0..classes).collect(),
            vec![0.0; classes],
        ).unwrap();
        let mut scratch = OpCounters::new();
        let logits = output_logits(&hidden, &w_o, &mut scratch).unwrap();
        let (label, dots) = thresholded_argmax(&hidden, &w_o, &table, &mut scratch);
        // Recompute the expected exit by hand.
        let mut expected = None;
        for (pos, class) in (0..classes).enumerate() {
            if logits.as_slice()[class] > theta[class] {
                expected = Some((class, pos as u64 + 1));
                break;
            }
        }
        match expected {
            Some((class, count)) => {
                prop_assert_eq!(label, class);
                prop_assert_eq!(dots, count);
            }
            None => {
                prop_assert_eq!(dots, classes as u64);
                prop_assert_eq!(label, exact_argmax(&logits, &mut scratch).unwrap());
            }
        }
    }
}
