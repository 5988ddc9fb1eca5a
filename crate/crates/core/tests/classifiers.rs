use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgda_core::classifier::{
    evaluate, Classifier, ClassifierConfig, ClassifierRegistry, FeatureScaling, LinearSvm, Mlp, MlpConfig, ResNet,
    ResNetConfig, SvmConfig,
};
use sgda_core::dataset::LabeledDataset;
use sgda_core::motor_model::FaultClass;
use sgda_core::spectrum::{SpectrumWindow, SPECTRUM_BINS};

const TWO: [FaultClass; 2] = [FaultClass::Healthy, FaultClass::RotorBar];

fn window(m: Vec<f64>, label: FaultClass, i: usize) -> SpectrumWindow {
    SpectrumWindow {
        magnitudes: m,
        bin_width_hz: 1.0,
        source_id: format!("w{i}"),
        window_index: i,
        label: Some(label),
    }
}

/// Noise floor plus a class-specific peak; class `k` peaks at `bins[k]`.
fn peak_data(classes: &[FaultClass], bins: &[usize], per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..per_class {
        for (k, &c) in classes.iter().enumerate() {
            let mut m: Vec<f64> = (0..SPECTRUM_BINS).map(|_| rng.gen_range(0.0..1.0)).collect();
            m[bins[k]] += rng.gen_range(8.0..12.0);
            out.push(window(m, c, i * classes.len() + k));
        }
    }
    LabeledDataset::new(out)
}

fn small_resnet(epochs: usize, seed: u64) -> ResNetConfig {
    ResNetConfig {
        block_channels: vec![4, 8, 16, 32],
        epochs,
        seed,
        ..ResNetConfig::default()
    }
}

/// Class 0 is a flat noise floor; class 1 adds one peak at a random bin.
fn blob_data(per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..2 * per_class {
        let mut m: Vec<f64> = (0..SPECTRUM_BINS).map(|_| rng.gen_range(0.0..1.0)).collect();
        let label = TWO[i % 2];
        if i % 2 == 1 {
            m[rng.gen_range(20..230)] += rng.gen_range(8.0..12.0);
        }
        out.push(window(m, label, i));
    }
    LabeledDataset::new(out)
}

#[test]
fn resnet_learns_separable_blobs() {
    let data = blob_data(32, 1);
    let mut net = ResNet::new(&small_resnet(20, 3), TWO.to_vec()).unwrap();
    let hist = net.fit(&data).unwrap();
    assert!(hist.loss.iter().all(|l| l.is_finite()));
    assert!(hist.loss.last() < hist.loss.first());
    assert_eq!(*hist.train_accuracy.last().unwrap(), 1.0);

    let mut again = ResNet::new(&small_resnet(20, 3), TWO.to_vec()).unwrap();
    assert_eq!(again.fit(&data).unwrap(), hist);
    assert!(net.fit(&LabeledDataset::new(vec![])).is_err());
}

#[test]
fn resnet_rejects_foreign_labels() {
    let data = peak_data(&[FaultClass::Healthy, FaultClass::BearingBall], &[60, 120], 2, 1);
    let net = ResNet::new(&small_resnet(1, 0), TWO.to_vec()).unwrap();
    let e = evaluate(&net, &data).unwrap_err();
    assert!(e.to_string().contains("bearing_ball"), "{e}");
    assert!(evaluate(&net, &LabeledDataset::new(vec![])).is_err());
}

#[test]
fn checkpoint_preserves_logits_bit_exactly() {
    let data = peak_data(&TWO, &[60, 120], 8, 2);
    let dir = tempfile::tempdir().unwrap();
    let registry = ClassifierRegistry::default();
    let cfg = ClassifierConfig {
        resnet: small_resnet(2, 1),
        mlp: MlpConfig {
            epochs: 2,
            ..MlpConfig::default()
        },
        svm: SvmConfig {
            epochs: 20,
            ..SvmConfig::default()
        },
    };
    let windows: Vec<_> = data.windows.iter().collect();
    for name in registry.names() {
        let mut model = registry.build(name, &cfg, TWO.to_vec()).unwrap();
        model.fit(&data).unwrap();
        let path = dir.path().join(format!("{name}.ckpt"));
        model.save(&path).unwrap();
        let loaded = registry.load(&path).unwrap();
        assert_eq!(loaded.name(), name);
        let (a, b) = (model.logits(&windows).unwrap(), loaded.logits(&windows).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }
}

#[test]
fn svm_two_points() {
    let mut a = vec![0.0; SPECTRUM_BINS];
    a[10] = 1.0;
    let mut b = vec![0.0; SPECTRUM_BINS];
    b[20] = 1.0;
    let data = LabeledDataset::new(vec![window(a, TWO[0], 0), window(b, TWO[1], 1)]);
    let mut svm = LinearSvm::new(&SvmConfig::default(), TWO.to_vec()).unwrap();
    let hist = svm.fit(&data).unwrap();
    assert_eq!(*hist.train_accuracy.last().unwrap(), 1.0);
}

#[test]
fn svm_objective_moving_average_does_not_increase() {
    let data = peak_data(&TWO, &[60, 120], 20, 5);
    let cfg = SvmConfig {
        epochs: 300,
        ..SvmConfig::default()
    };
    let mut svm = LinearSvm::new(&cfg, TWO.to_vec()).unwrap();
    let loss = svm.fit(&data).unwrap().loss;
    assert!(*loss.last().unwrap() < 0.5 * 2.0, "objective at w = 0 is 1 per class");
    let avg: Vec<f64> = loss.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
    for pair in avg.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{} > {}", pair[1], pair[0]);
    }
}

#[test]
fn svm_three_orthogonal_classes() {
    let classes = [FaultClass::Healthy, FaultClass::RotorBar, FaultClass::BearingBall];
    let data = peak_data(&classes, &[30, 90, 200], 10, 7);
    let mut svm = LinearSvm::new(&SvmConfig::default(), classes.to_vec()).unwrap();
    svm.fit(&data).unwrap();
    assert_eq!(evaluate(&svm, &data).unwrap().accuracy, 1.0);

    let single = peak_data(&[FaultClass::Healthy], &[30], 4, 0);
    let mut svm = LinearSvm::new(&SvmConfig::default(), classes.to_vec()).unwrap();
    assert!(svm.fit(&single).is_err());
}

#[test]
fn mlp_without_hidden_layers_is_logistic_regression() {
    let data = peak_data(&TWO, &[60, 120], 16, 9);
    let cfg = MlpConfig {
        hidden_dims: vec![],
        epochs: 30,
        lr: 0.01,
        scaling: FeatureScaling::MaxNorm,
        ..MlpConfig::default()
    };
    let mut m = Mlp::new(&cfg, TWO.to_vec()).unwrap();
    assert_eq!(m.params().numel(), 2 * SPECTRUM_BINS + 2);
    m.fit(&data).unwrap();
    assert_eq!(evaluate(&m, &data).unwrap().accuracy, 1.0);

    let out = m.logits(&[&data.windows[0]]).unwrap();
    assert_eq!(out[0].len(), 2);

    let mut a = Mlp::new(&MlpConfig::default(), TWO.to_vec()).unwrap();
    let mut b = Mlp::new(&MlpConfig::default(), TWO.to_vec()).unwrap();
    a.fit(&data).unwrap();
    b.fit(&data).unwrap();
    assert_eq!(a.params(), b.params());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn evaluation_ignores_test_order(seed in 0u64..1000) {
        let data = peak_data(&TWO, &[60, 120], 6, seed);
        let net = ResNet::new(&small_resnet(1, seed), TWO.to_vec()).unwrap();
        let mut shuffled = data.windows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = evaluate(&net, &data).unwrap();
        let b = evaluate(&net, &LabeledDataset::new(shuffled)).unwrap();
        prop_assert_eq!(a, b);
    }
}
