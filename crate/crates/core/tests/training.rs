use chrononet::arch::{Architecture, Model, ModelConfig, Precision};
use chrononet::data::{generate_synthetic, Dataset, SampleMeta, Split, SyntheticSpec};
use chrononet::nn::Parameters;
use chrononet::train::{
    adam_step, evaluate, kfold, metrics_csv, softmax, AdamConfig, AdamState, Checkpoint, Control,
    TrainConfig, Trainer,
};
use chrononet::{Error, Graph, Prng, Tensor};
use proptest::prelude::*;

fn toy_config(channels: usize) -> ModelConfig {
    ModelConfig::uniform(Architecture::Chrononet, channels, 2, &[2, 4, 8], 2, 2, &[4, 4, 4], 2)
}

fn toy_data(n_per_class: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        length: 64,
        envelope_period: 16.0,
        motifs_per_sample: 6,
        groups: 4,
        seed,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, n_per_class, Split::Train).unwrap().dataset
}

fn quick(lr: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: 8,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

fn train(cfg: &TrainConfig, data: &Dataset, model_seed: u64) -> (Model<f32>, Vec<chrononet::train::Metrics>) {
    let mut model = Model::<f32>::build(&toy_config(data.channels()), &mut Prng::new(model_seed)).unwrap();
    let out = Trainer::new(cfg.clone())
        .unwrap()
        .run(&mut model, data, Some(data), |_| Control::Continue)
        .unwrap();
    (model, out.metrics)
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = toy_data(8, 1);
    let before = Model::<f32>::build(&toy_config(2), &mut Prng::new(3)).unwrap();
    let (after, metrics) = train(&quick(0.0, 2, 0), &data, 3);
    assert_eq!(metrics.len(), 2);
    for ((na, a), (nb, b)) in before.named_tensors().iter().zip(after.named_tensors().iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.data(), b.data(), "{na} moved");
    }
}

#[test]
fn fixed_seed_reproduces_metrics_exactly() {
    let data = toy_data(8, 2);
    let (a, ma) = train(&quick(0.01, 3, 7), &data, 4);
    let (b, mb) = train(&quick(0.01, 3, 7), &data, 4);
    assert_eq!(metrics_csv(&ma, false), metrics_csv(&mb, false));
    assert_eq!(a.named_tensors(), b.named_tensors());
}

#[test]
fn checkpoint_round_trip_preserves_outputs_bitwise() {
    let data = toy_data(4, 3);
    let (model, _) = train(&quick(0.01, 1, 0), &data, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cncp");
    Checkpoint::from_model(&model, None, 1, 0).save(&path).unwrap();
    let loaded: Model<f32> = Checkpoint::load(&path).unwrap().to_model().unwrap();
    let x = data.batch::<f32>(&[0, 1, 2, 3]).unwrap();
    assert_eq!(model.forward(&x).unwrap().data(), loaded.forward(&x).unwrap().data());
}

#[test]
fn non_finite_input_aborts_naming_epoch_and_batch() {
    let mut data = toy_data(4, 4);
    let w = data.window_len();
    data.values_mut()[5 * w + 3] = f32::NAN;
    let cfg = TrainConfig {
        shuffle: false,
        batch_size: 4,
        ..quick(0.01, 2, 0)
    };
    let mut model = Model::<f32>::build(&toy_config(2), &mut Prng::new(0)).unwrap();
    match Trainer::new(cfg).unwrap().run(&mut model, &data, None, |_| Control::Continue) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch 1, batch 1"), "{msg}"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn training_lowers_loss_on_separable_data() {
    let data = toy_data(16, 9);
    let mut lowered = 0;
    for seed in 0..5 {
        let (_, m) = train(&quick(0.01, 6, seed), &data, seed);
        if m.last().unwrap().train_loss < m[0].train_loss {
            lowered += 1;
        }
    }
    assert!(lowered >= 4, "loss fell in only {lowered}/5 runs");
}

#[test]
fn observer_can_stop_early() {
    let data = toy_data(4, 5);
    let mut model = Model::<f32>::build(&toy_config(2), &mut Prng::new(0)).unwrap();
    let out = Trainer::new(quick(0.01, 10, 0))
        .unwrap()
        .run(&mut model, &data, None, |m| if m.epoch == 3 { Control::Stop } else { Control::Continue })
        .unwrap();
    assert_eq!(out.metrics.len(), 3);
}

#[test]
fn evaluation_ignores_sample_order() {
    let data = toy_data(6, 6);
    let model = Model::<f64>::build(&toy_config(2), &mut Prng::new(1)).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    Prng::new(2).shuffle(&mut order);
    let a = evaluate(&model, &data, 5).unwrap();
    let b = evaluate(&model, &data.subset(&order), 3).unwrap();
    assert_eq!(a.correct, b.correct);
    assert_eq!(a.confusion, b.confusion);
}

#[test]
fn f64_training_path_runs() {
    let data = toy_data(4, 7);
    let cfg = TrainConfig {
        precision: Precision::Check,
        ..quick(0.01, 1, 0)
    };
    let mut model = Model::<f64>::build(&toy_config(2), &mut Prng::new(0)).unwrap();
    let out = Trainer::new(cfg).unwrap().run(&mut model, &data, None, |_| Control::Continue).unwrap();
    assert!(out.metrics[0].train_loss.is_finite());
}

#[test]
fn incompatible_channels_are_a_config_error() {
    let data = toy_data(2, 8);
    let mut model = Model::<f32>::build(&toy_config(3), &mut Prng::new(0)).unwrap();
    let r = Trainer::new(quick(0.01, 1, 0)).unwrap().run(&mut model, &data, None, |_| Control::Continue);
    assert!(matches!(r, Err(Error::Config { .. })));
}

fn random(shape: &[usize], prng: &mut Prng, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * prng.normal()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_entropy_matches_direct_formula(seed in any::<u64>(), rows in 1usize..6, k in 2usize..7, scale in 0.1f64..30.0) {
        let mut prng = Prng::new(seed);
        let logits = random(&[rows, k], &mut prng, scale);
        let labels: Vec<usize> = (0..rows).map(|_| prng.below(k)).collect();
        let mut g = Graph::new();
        let z = g.constant(logits.clone());
        let loss = g.softmax_cross_entropy(z, &labels).unwrap();
        let got = g.value(loss).item().unwrap();
        let mut want = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = &logits.data()[r * k..(r + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            want += lse - row[y];
        }
        want /= rows as f64;
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        let p = softmax(&logits).unwrap();
        for r in 0..rows {
            let s: f64 = p.data()[r * k..(r + 1) * k].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_first_step_is_gradient_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0, lr in 1e-4f64..0.1) {
        let mut prng = Prng::new(seed);
        let theta = random(&[5], &mut prng, 1.0);
        let grad = random(&[5], &mut prng, 1.0);
        let scaled = grad.map(|v| v * c);
        let cfg = AdamConfig { epsilon: 0.0, ..AdamConfig::default() };
        let step = |g: &Tensor<f64>| {
            let mut p = theta.clone();
            let mut state = AdamState::new([p.shape()], cfg);
            adam_step(&mut [&mut p], &[g], &mut state, lr).unwrap();
            p
        };
        let a = step(&grad);
        let b = step(&scaled);
        for ((x, y), t) in a.data().iter().zip(b.data()).zip(theta.data()) {
            prop_assert!((x - y).abs() < 1e-12);
            // the bias-corrected first step moves each coordinate by lr
            prop_assert!(((x - t).abs() - lr).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_leaves_zero_gradient_coordinates_alone(seed in any::<u64>()) {
        let mut prng = Prng::new(seed);
        let theta = random(&[6], &mut prng, 1.0);
        let mut grad = random(&[6], &mut prng, 1.0);
        grad.data_mut()[2] = 0.0;
        let mut p = theta.clone();
        let mut state = AdamState::new([p.shape()], AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut [&mut p], &[&grad], &mut state, 0.01).unwrap();
        }
        prop_assert_eq!(p.data()[2], theta.data()[2]);
    }

    #[test]
    fn kfold_partitions_groups(
        assignment in proptest::collection::vec(0usize..12, 12..60),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let names: Vec<String> = assignment.iter().map(|g| format!("g{g}")).collect();
        let groups: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut distinct = groups.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let folds = match kfold(&groups, k, seed) {
            Ok(f) => f,
            Err(_) => {
                prop_assert!(distinct.len() < k);
                return Ok(());
            }
        };
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; groups.len()];
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.test.len(), groups.len());
            for &i in &f.test {
                seen[i] += 1;
                for &j in &f.train {
                    prop_assert_ne!(groups[i], groups[j]);
                }
            }
        }
        prop_assert!(seen.iter().all(|&n| n == 1));
        let sizes: Vec<usize> = folds.iter().map(|f| f.test_groups.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(kfold(&groups, k, seed).unwrap(), folds);
    }
}

#[test]
fn dataset_meta_drives_groups() {
    let mut ds = Dataset::new(1, 2).unwrap();
    for (i, p) in ["a", "b", "a"].iter().enumerate() {
        ds.push(&[i as f32, 0.0], i % 2, SampleMeta::new(*p, format!("s{i}"), Split::Train)).unwrap();
    }
    assert_eq!(ds.groups(), vec!["a", "b", "a"]);
}
