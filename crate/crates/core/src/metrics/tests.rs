use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn pair_count_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

fn sweep_auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&th| {
            let tp = scores.iter().zip(labels).filter(|(s, &l)| **s >= th && l).count() as f64;
            let pp = scores.iter().filter(|s| **s >= th).count() as f64;
            (tp / pos, tp / pp)
        })
        .collect();
    let mut recalls: Vec<f64> = pts.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        if r <= 0.0 {
            continue;
        }
        let env = pts.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * env;
        prev = r;
    }
    area
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..60);
    let levels = rng.random_range(2..12);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

#[test]
fn auroc_matches_pair_counting_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (s, l) = random_instance(&mut rng);
        assert_eq!(auroc(&s, &l).unwrap(), pair_count_auroc(&s, &l));
    }
}

#[test]
fn auprc_matches_threshold_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (s, l) = random_instance(&mut rng);
        assert!((auprc(&s, &l).unwrap() - sweep_auprc(&s, &l)).abs() < 1e-12);
    }
}

#[test]
fn frozen_values() {
    let s = [0.9, 0.8, 0.1];
    let l = [true, false, true];
    assert_eq!(auroc(&s, &l).unwrap(), 0.5);
    assert!((auprc(&s, &l).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    let s = [0.1, 0.4, 0.35, 0.8];
    let l = [false, false, true, true];
    assert_eq!(auroc(&s, &l).unwrap(), 0.75);
    assert!((auprc(&s, &l).unwrap() - 0.5 * 1.0 - 0.5 * 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(auroc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
}

#[test]
fn undefined_cases() {
    assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
    assert_eq!(auroc(&[0.1, 0.2], &[false, false]), Err(MetricError::SingleClass));
    assert_eq!(auprc(&[0.1, 0.2], &[false, false]), Err(MetricError::NoPositives));
    assert!(matches!(auroc(&[0.1], &[true, false]), Err(MetricError::Length { .. })));
    assert!(matches!(auroc(&[f64::NAN, 0.2], &[true, false]), Err(MetricError::NonFinite(_))));
}

#[test]
fn curves_span_unit_square() {
    let s = [0.9, 0.7, 0.7, 0.2, 0.1];
    let l = [true, false, true, false, true];
    let roc = roc_curve(&s, &l).unwrap();
    assert_eq!((roc[0].0, roc[0].1), (0.0, 0.0));
    let last = roc.last().unwrap();
    assert_eq!((last.0, last.1), (1.0, 1.0));
    // trapezoid area under the ROC equals the rank statistic
    let area: f64 = roc.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    assert!((area - auroc(&s, &l).unwrap()).abs() < 1e-12);
    let pr = pr_curve(&s, &l).unwrap();
    assert_eq!(pr.len(), 4);
    assert_eq!(pr.last().unwrap().0, 1.0);
    let mut buf = Vec::new();
    write_curve(&mut buf, "fpr,tpr,threshold", &roc).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("fpr,tpr,threshold\n0,0,inf\n"));
}

fn sample(id: u64, y: &[bool], p: &[f64]) -> EvalSample {
    EvalSample {
        patient_id: id,
        y_true: y.to_vec(),
        y_pred: p.to_vec(),
        concept_labels: Vec::new(),
        concept_preds: Vec::new(),
    }
}

fn toy_samples(seed: u64, noise: f64) -> Vec<EvalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..60)
        .map(|i| {
            let dies = i % 5 == 0;
            let y: Vec<bool> = (0..6).map(|t| dies && t >= 3).collect();
            let p: Vec<f64> = y
                .iter()
                .map(|&v| (if v { 0.7 } else { 0.3 }) + noise * (rng.random::<f64>() - 0.5))
                .collect();
            sample(i, &y, &p)
        })
        .collect()
}

#[test]
fn identical_models_have_zero_delta_and_unit_p() {
    let a = toy_samples(1, 0.9);
    let c = bootstrap_compare(&a, &a, Metric::Auroc, 200, 7).unwrap();
    assert_eq!(c.delta.point, 0.0);
    assert_eq!((c.delta.lower, c.delta.upper), (0.0, 0.0));
    assert_eq!(c.p_value, 1.0);
    assert_eq!(c.a, c.b);
}

#[test]
fn better_model_wins_with_small_p() {
    let good = toy_samples(1, 0.2);
    let bad = toy_samples(1, 1.6);
    let c = bootstrap_compare(&good, &bad, Metric::Auroc, 300, 3).unwrap();
    assert!(c.delta.point > 0.0);
    assert!(c.delta.lower > 0.0);
    assert!(c.p_value < 0.05);
}

#[test]
fn bootstrap_is_seeded_and_intervals_contain_point() {
    let a = toy_samples(2, 1.0);
    let b = toy_samples(2, 1.2);
    let x = bootstrap_compare(&a, &b, Metric::Auprc, 150, 9).unwrap();
    let y = bootstrap_compare(&a, &b, Metric::Auprc, 150, 9).unwrap();
    assert_eq!(x, y);
    for r in [&x.a, &x.b, &x.delta] {
        assert!(r.lower <= r.point && r.point <= r.upper);
    }
    let single = bootstrap_metric(&a, Metric::Auprc, 150, 9).unwrap();
    assert_eq!(single.point, x.a.point);
}

#[test]
fn single_class_resamples_are_redrawn() {
    // one positive patient among many negatives
    let mut v: Vec<EvalSample> = (0..8).map(|i| sample(i, &[false, false], &[0.1, 0.2])).collect();
    v.push(sample(99, &[false, true], &[0.3, 0.9]));
    let c = bootstrap_compare(&v, &v, Metric::Auroc, 200, 1).unwrap();
    assert!(c.redraws > 0);
    assert_eq!(c.a.point, 1.0);
}

#[test]
fn unpaired_inputs_rejected() {
    let a = toy_samples(1, 0.5);
    let mut b = a.clone();
    b[3].patient_id = 1000;
    assert_eq!(bootstrap_compare(&a, &b, Metric::Auroc, 10, 1), Err(MetricError::Unpaired));
    assert_eq!(bootstrap_compare(&a, &a, Metric::Auroc, 0, 1), Err(MetricError::Empty));
}

#[test]
fn report_formatting() {
    let r = MetricReport {
        name: "auroc".into(),
        point: 0.9234,
        lower: 0.9151,
        upper: 0.9468,
        n_resamples: 1000,
    };
    assert_eq!(r.to_string(), "0.923[0.915-0.947]");
    assert_eq!(r.to_csv_row(), "auroc,0.9234,0.9151,0.9468,1000");
}

#[test]
fn concept_report_against_mean_baseline() {
    let mut s = sample(1, &[false, false], &[0.1, 0.1]);
    s.concept_labels = vec![vec![0.0, 1.0], vec![0.5, 1.0]];
    s.concept_preds = vec![vec![0.0, 0.5], vec![0.5, 0.5]];
    let means = concept_means(std::slice::from_ref(&s)).unwrap();
    assert_eq!(means, vec![0.25, 1.0]);
    let rep = concept_regression_report(&[s], &[0.25, 0.5]).unwrap();
    assert_eq!(rep.rows[0].mse, 0.0);
    assert_eq!(rep.rows[0].baseline_mse, 0.0625);
    assert_eq!(rep.rows[1].mse, 0.25);
    assert_eq!(rep.rows[1].baseline_mse, 0.25);
    assert_eq!(rep.pairs.len(), 4);
    let mut buf = Vec::new();
    write_concept_pairs(&mut buf, &rep, &["a", "b"]).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("concept,actual,predicted\na,0,0\n"));
}

proptest! {
    #[test]
    fn auroc_invariant_under_monotone_transform(
        raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..40),
        a in 0.1f64..5.0,
        b in -3.0f64..3.0,
    ) {
        let mut labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        labels[0] = true;
        labels[1] = false;
        let s: Vec<f64> = raw.iter().map(|r| (r.0 * 20.0).round() / 20.0).collect();
        let t: Vec<f64> = s.iter().map(|x| (a * x + b).exp()).collect();
        prop_assert_eq!(auroc(&s, &labels).unwrap(), auroc(&t, &labels).unwrap());
        prop_assert!((auprc(&s, &labels).unwrap() - auprc(&t, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_bounded(
        raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..40),
    ) {
        let mut labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        labels[0] = true;
        labels[1] = false;
        let s: Vec<f64> = raw.iter().map(|r| r.0).collect();
        let roc = auroc(&s, &labels).unwrap();
        let flipped: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((0.0..=1.0).contains(&roc));
        prop_assert!((roc + auroc(&flipped, &labels).unwrap() - 1.0).abs() < 1e-12);
        let pr = auprc(&s, &labels).unwrap();
        prop_assert!(pr > 0.0 && pr <= 1.0);
    }
}
