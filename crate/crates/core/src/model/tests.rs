use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::sigmoid;
use crate::nn::StepMask;

fn toy_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        d_series: 3,
        d_static: 2,
        n_concepts: 6,
        imputer_hidden: 4,
        lstm_hidden: 4,
        lstm_layers: 3,
        head_hidden: vec![4, 3, 2],
        dropout: 0.5,
        init_seed: 11,
    }
}

/// T = 4, B = 2, second stay one hour shorter.
fn toy_batch(seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_max, b, d) = (4, 2, 3);
    let lengths = vec![4, 3];
    let mut values = Vec::new();
    let mut masks = Vec::new();
    for t in 0..t_max {
        let mut v = vec![0.0; b * d];
        let mut m = vec![0.0; b * d];
        for i in 0..b {
            if t < lengths[i] {
                for f in 0..d {
                    if rng.random_bool(0.7) {
                        v[i * d + f] = rng.random_range(-2.0..2.0);
                        m[i * d + f] = 1.0;
                    }
                }
            }
        }
        values.push(Tensor::new(vec![b, d], v).unwrap());
        masks.push(Tensor::new(vec![b, d], m).unwrap());
    }
    let statics = Tensor::new(vec![b, 2], (0..b * 2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let mut concepts = vec![0.0; t_max * b * 6];
    let mut mortality = vec![0.0; t_max * b];
    for t in 0..t_max {
        for i in 0..b {
            if t < lengths[i] {
                let row = t * b + i;
                for j in 0..6 {
                    concepts[row * 6 + j] = f64::from(rng.random_range(0..5u8)) / 4.0;
                }
                mortality[row] = if i == 0 && t >= 2 { 1.0 } else { 0.0 };
            }
        }
    }
    Batch {
        patient_ids: vec![1, 2],
        steps: StepMask::from_lengths(&lengths),
        lengths,
        values,
        masks,
        statics,
        concept_labels: Tensor::new(vec![t_max * b, 6], concepts).unwrap(),
        mortality_labels: Tensor::new(vec![t_max * b, 1], mortality).unwrap(),
    }
}

fn run(model: &Model, batch: &Batch) -> (Vec<ModelOutput>, Losses) {
    let mut g = Graph::new();
    let p = model.store.bind(&mut g);
    let fwd = model.forward(&mut g, &p, batch, None).unwrap();
    let l = model.losses(&mut g, &fwd, batch, &LossWeights::default()).unwrap();
    (model.outputs(&g, &fwd, batch), l.values(&g))
}

#[test]
fn explanation_recombines_to_probability() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let (outs, _) = run(&model, &toy_batch(1));
    for o in &outs {
        let (c, a) = (o.concepts.as_ref().unwrap(), o.relevance.as_ref().unwrap());
        for (t, &p) in o.mortality_prob.iter().enumerate() {
            assert!((relevance_weighted_probability(c.row(t), a.row(t)) - p).abs() <= 1e-12);
        }
    }
}

#[test]
fn recombination_arithmetic() {
    assert_eq!(relevance_weighted_probability(&[0.3; 6], &[0.0; 6]), 0.5);
    let p = relevance_weighted_probability(&[1.0; 6], &[1.0; 6]);
    assert!((p - 0.9975273768433653).abs() < 1e-15);
}

#[test]
fn outputs_lie_strictly_inside_unit_interval() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let (outs, _) = run(&model, &toy_batch(2));
    for o in outs {
        assert_eq!(o.mortality_prob.len(), if o.patient_id == 1 { 4 } else { 3 });
        let (c, a) = (o.concepts.unwrap(), o.relevance.unwrap());
        for &v in o.mortality_prob.iter().chain(c.data()).chain(a.data()) {
            assert!(v > 0.0 && v < 1.0);
        }
    }
}

#[test]
fn heads_share_no_parameters() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let Heads::Senn { concept, relevance } = &model.heads else {
        panic!("senn heads expected")
    };
    let ids = |m: &Mlp| -> Vec<usize> {
        m.layers
            .iter()
            .flat_map(|l| [l.weight.index(), l.bias.index()])
            .collect()
    };
    let a = ids(concept);
    assert!(ids(relevance).iter().all(|i| !a.contains(i)));
}

#[test]
fn baseline_has_no_concept_or_relevance_parameters() {
    let model = Model::new(toy_config(ModelKind::Baseline)).unwrap();
    assert!(model
        .store
        .iter()
        .all(|p| !p.name.starts_with("concept") && !p.name.starts_with("relevance")));
    let (outs, l) = run(&model, &toy_batch(1));
    assert!(outs.iter().all(|o| o.concepts.is_none() && o.relevance.is_none()));
    assert!(l.aux.is_none());
}

#[test]
fn baseline_zero_head_gives_one_half() {
    let mut model = Model::new(toy_config(ModelKind::Baseline)).unwrap();
    for p in model.store.iter_mut().filter(|p| p.name.starts_with("mortality_head")) {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let (outs, _) = run(&model, &toy_batch(3));
    assert!(outs.iter().flat_map(|o| &o.mortality_prob).all(|&p| p == 0.5));
}

#[test]
fn encoders_match_for_same_seed() {
    let senn = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let base = Model::new(toy_config(ModelKind::Baseline)).unwrap();
    let batch = toy_batch(4);
    let hidden = |m: &Model| {
        let mut g = Graph::new();
        let p = m.store.bind(&mut g);
        let (_, h, _) = m.encode(&mut g, &p, &batch).unwrap();
        h.iter().map(|v| g.value(*v).clone()).collect::<Vec<_>>()
    };
    assert_eq!(hidden(&senn), hidden(&base));
}

#[test]
fn full_model_gradient_check() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let report = loss_gradcheck(&model, &toy_batch(5), &LossWeights::default(), GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err());
}

#[test]
fn baseline_gradient_check() {
    let model = Model::new(toy_config(ModelKind::Baseline)).unwrap();
    let report = loss_gradcheck(&model, &toy_batch(6), &LossWeights::default(), GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err());
}

#[test]
fn graph_losses_match_plain_computation() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let batch = toy_batch(7);
    let mut g = Graph::new();
    let p = model.store.bind(&mut g);
    let fwd = model.forward(&mut g, &p, &batch, None).unwrap();
    let w = LossWeights::default();
    let l = model.losses(&mut g, &fwd, &batch, &w).unwrap().values(&g);
    let plain = compute_losses(
        g.value(fwd.prob).data(),
        Some((g.value(fwd.concepts.unwrap()).data(), batch.concept_labels.data())),
        batch.mortality_labels.data(),
        &batch.valid_rows(),
        l.impute,
        &w,
    )
    .unwrap();
    assert!((l.mort - plain.mort).abs() < 1e-12);
    assert!((l.aux.unwrap() - plain.aux.unwrap()).abs() < 1e-12);
    assert!((l.total - plain.total).abs() < 1e-12);
}

#[test]
fn loss_examples() {
    let w = LossWeights::default();
    let l = compute_losses(&[0.5], None, &[1.0], &[true], 0.0, &w).unwrap();
    assert!((l.mort - std::f64::consts::LN_2).abs() < 1e-15);

    let probs = [1.0, 0.0, 1.0];
    let labels = [1.0, 0.0, 1.0];
    let concepts = [0.25; 18];
    let l = compute_losses(&probs, Some((&concepts, &concepts)), &labels, &[true; 3], 0.0, &w).unwrap();
    assert_eq!(l.aux, Some(0.0));
    assert!(l.mort <= 1.7e-7);

    assert_eq!(w.combine(0.7, 0.02, 3.0), 0.903);
}

#[test]
fn total_reduces_to_mortality_loss_without_other_weights() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let batch = toy_batch(8);
    let w = LossWeights {
        auxiliary: 0.0,
        imputation: 0.0,
        ..LossWeights::default()
    };
    let mut g = Graph::new();
    let p = model.store.bind(&mut g);
    let fwd = model.forward(&mut g, &p, &batch, None).unwrap();
    let l = model.losses(&mut g, &fwd, &batch, &w).unwrap().values(&g);
    assert_eq!(l.total, l.mort);
}

#[test]
fn all_invalid_mask_is_an_error() {
    let r = compute_losses(&[0.5, 0.5], None, &[0.0, 1.0], &[false, false], 0.0, &LossWeights::default());
    assert!(r.is_err());
    let r = compute_losses(&[0.5], None, &[1.5], &[true], 0.0, &LossWeights::default());
    assert!(r.is_err());
}

#[test]
fn dimension_mismatch_is_a_shape_error() {
    let mut cfg = toy_config(ModelKind::Senn);
    cfg.d_series = 5;
    let model = Model::new(cfg).unwrap();
    let mut g = Graph::new();
    let p = model.store.bind(&mut g);
    let err = model.forward(&mut g, &p, &toy_batch(1), None).unwrap_err();
    assert!(matches!(err, ModelError::Tensor(TensorError::Shape { .. })), "{err}");
}

#[test]
fn checkpoint_round_trip_reproduces_predictions() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let mut bytes = Vec::new();
    model.checkpoint().write_to(&mut bytes).unwrap();
    let back = Model::from_checkpoint(&Checkpoint::read_from(bytes.as_slice()).unwrap()).unwrap();
    assert_eq!(back.config, model.config);
    let batch = toy_batch(9);
    assert_eq!(run(&model, &batch).0, run(&back, &batch).0);
}

#[test]
fn dropout_changes_training_outputs_only() {
    let model = Model::new(toy_config(ModelKind::Senn)).unwrap();
    let batch = toy_batch(10);
    let eval = |m: &Model| run(m, &batch).0;
    assert_eq!(eval(&model), eval(&model));
    let mut g = Graph::new();
    let p = model.store.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = model.forward(&mut g, &p, &batch, Some(&mut rng)).unwrap();
    assert_ne!(model.outputs(&g, &fwd, &batch), eval(&model));
}

#[test]
fn config_text_round_trip() {
    for cfg in [ModelConfig::full(ModelKind::Senn), ModelConfig::desk(ModelKind::Baseline)] {
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
    let mut partial = ModelConfig::desk(ModelKind::Senn).to_kv();
    partial = KvMap::from_pairs(partial.iter().filter(|(k, _)| *k != "model.dropout"));
    assert!(ModelConfig::from_kv(&partial).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_concept_never_lowers_probability(
        c in prop::collection::vec(0.001f64..0.999, 6),
        a in prop::collection::vec(0.0f64..1.0, 6),
        j in 0usize..6,
        bump in 0.0f64..0.5,
    ) {
        let p0 = relevance_weighted_probability(&c, &a);
        let mut c2 = c.clone();
        c2[j] += bump;
        prop_assert!(relevance_weighted_probability(&c2, &a) >= p0);
    }

    #[test]
    fn recombination_identity_on_random_models(seed in 0u64..1000) {
        let mut cfg = toy_config(ModelKind::Senn);
        cfg.init_seed = seed;
        let model = Model::new(cfg).unwrap();
        let (outs, _) = run(&model, &toy_batch(seed));
        for o in &outs {
            let (c, a) = (o.concepts.as_ref().unwrap(), o.relevance.as_ref().unwrap());
            for (t, &p) in o.mortality_prob.iter().enumerate() {
                let s: f64 = c.row(t).iter().zip(a.row(t)).map(|(x, y)| x * y).sum();
                prop_assert!((sigmoid(s) - p).abs() <= 1e-12);
            }
        }
    }
}
