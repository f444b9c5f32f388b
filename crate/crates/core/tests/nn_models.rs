//! Architecture and training-session contracts of the two model specs:
//! parameter counts, initialization properties, optimizer step counts, and
//! evaluation semantics.

use hl_core::data::LabeledSet;
use hl_core::nn::{DqnModelSpec, FoundationModelSpec, ModelWeights, TrainOptions};
use hl_core::rng::seed_rng;
use hl_core::Tensor;
use rand::Rng;

/// Independent recount of the foundation parameter total from first
/// principles: conv kernels + biases and the dense readout.
fn foundation_param_oracle(s: &FoundationModelSpec) -> usize {
    let c1 = s.conv1 * s.kernel * s.kernel * s.channels + s.conv1;
    let c2 = s.conv2 * s.kernel * s.kernel * s.conv1 + s.conv2;
    let p1 = (s.height - s.kernel + 1) / 2;
    let p2 = (p1 - s.kernel + 1) / 2;
    let flat = p2 * p2 * s.conv2;
    c1 + c2 + flat * s.classes + s.classes
}

#[test]
fn digit_foundation_has_exactly_33580_parameters() {
    let spec = FoundationModelSpec::digits();
    assert_eq!(foundation_param_oracle(&spec), 33580);
    assert_eq!(spec.param_count(), 33580);
    // 20 5x5x1 kernels, 50 5x5x20 kernels, 800 -> 10 readout.
    let shapes: Vec<(String, Vec<usize>)> = spec.layout().entries().to_vec();
    assert_eq!(
        shapes,
        vec![
            ("conv1.w".to_string(), vec![20, 5, 5, 1]),
            ("conv1.b".to_string(), vec![20]),
            ("conv2.w".to_string(), vec![50, 5, 5, 20]),
            ("conv2.b".to_string(), vec![50]),
            ("dense.w".to_string(), vec![800, 10]),
            ("dense.b".to_string(), vec![10]),
        ]
    );
}

#[test]
fn dqn_head_widths_are_500_200_n() {
    for nodes in [2usize, 5, 10, 17] {
        let spec = DqnModelSpec::for_nodes(nodes);
        assert_eq!(spec.input_dim, nodes * nodes);
        assert_eq!(spec.hidden1, 500);
        assert_eq!(spec.hidden2, 200);
        assert_eq!(spec.actions, nodes);
        let oracle = (nodes * nodes * 500 + 500) + (500 * 200 + 200) + (200 * nodes + nodes);
        assert_eq!(spec.param_count(), oracle);
    }
    assert_eq!(DqnModelSpec::for_nodes(10).param_count(), 152_710);
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let spec = FoundationModelSpec::digits();
    let a: ModelWeights<f64> = spec.init_weights(5);
    let b: ModelWeights<f64> = spec.init_weights(5);
    let c: ModelWeights<f64> = spec.init_weights(6);
    assert_eq!(a.values(), b.values());
    assert_ne!(a.values(), c.values());
}

#[test]
fn init_draws_identically_for_both_scalar_types() {
    let spec = DqnModelSpec::for_nodes(3);
    let w32: ModelWeights<f32> = spec.init_weights(9);
    let w64: ModelWeights<f64> = spec.init_weights(9);
    for (a, b) in w32.values().iter().zip(w64.values()) {
        assert_eq!(*a, *b as f32);
    }
}

#[test]
fn init_respects_glorot_bounds_and_zero_biases() {
    let spec = FoundationModelSpec::digits();
    let w: ModelWeights<f64> = spec.init_weights(3);
    let bound = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
    let cases = [
        ("conv1.w", bound(5 * 5 * 1, 20 * 5 * 5)),
        ("conv2.w", bound(5 * 5 * 20, 50 * 5 * 5)),
        ("dense.w", bound(800, 10)),
    ];
    for (name, limit) in cases {
        let vals = w.view(name).unwrap();
        assert!(vals.iter().all(|v| v.abs() <= limit), "{name} exceeds {limit}");
        // A degenerate (all tiny) draw would hide a broken limit.
        assert!(vals.iter().any(|v| v.abs() > 0.5 * limit), "{name} suspiciously small");
    }
    for name in ["conv1.b", "conv2.b", "dense.b"] {
        assert!(w.view(name).unwrap().iter().all(|&v| v == 0.0));
    }
}

/// Small spec and random set for cheap training-loop tests.
fn tiny_spec() -> FoundationModelSpec {
    FoundationModelSpec {
        height: 10,
        width: 10,
        channels: 1,
        classes: 4,
        conv1: 3,
        conv2: 5,
        kernel: 3,
    }
}

fn random_set(spec: &FoundationModelSpec, n: usize, seed: u64) -> LabeledSet<f64> {
    let mut rng = seed_rng(seed);
    let images = Tensor::new(
        vec![n, spec.height, spec.width, spec.channels],
        (0..n * spec.height * spec.width).map(|_| rng.gen::<f64>()).collect(),
    )
    .unwrap();
    let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..spec.classes) as u8).collect();
    LabeledSet::new(images, labels, spec.classes).unwrap()
}

#[test]
fn one_epoch_over_500_samples_at_batch_32_takes_16_steps() {
    let spec = tiny_spec();
    let set = random_set(&spec, 500, 1);
    let (_, steps) = spec
        .train_epochs(
            spec.init_weights(2),
            &set,
            &TrainOptions {
                epochs: 1,
                batch_size: 32,
                learning_rate: 0.001,
                shuffle_seed: 3,
            },
        )
        .unwrap();
    assert_eq!(steps, 16); // ceil(500 / 32): the short final batch trains too
}

#[test]
fn step_count_scales_with_epochs_and_counts_short_batches() {
    let spec = tiny_spec();
    let set = random_set(&spec, 40, 4);
    let opts = |epochs| TrainOptions {
        epochs,
        batch_size: 32,
        learning_rate: 0.001,
        shuffle_seed: 5,
    };
    let (_, steps) = spec.train_epochs(spec.init_weights(6), &set, &opts(1)).unwrap();
    assert_eq!(steps, 2); // 32 + 8
    let (_, steps) = spec.train_epochs(spec.init_weights(6), &set, &opts(3)).unwrap();
    assert_eq!(steps, 6);
}

#[test]
fn training_is_deterministic_in_the_shuffle_seed() {
    let spec = tiny_spec();
    let set = random_set(&spec, 64, 7);
    let opts = |seed| TrainOptions {
        epochs: 1,
        batch_size: 16,
        learning_rate: 0.001,
        shuffle_seed: seed,
    };
    let (a, _) = spec.train_epochs(spec.init_weights(8), &set, &opts(1)).unwrap();
    let (b, _) = spec.train_epochs(spec.init_weights(8), &set, &opts(1)).unwrap();
    let (c, _) = spec.train_epochs(spec.init_weights(8), &set, &opts(2)).unwrap();
    assert_eq!(a.values(), b.values());
    assert_ne!(a.values(), c.values(), "different shuffle order must change the result");
    assert_ne!(a.values(), spec.init_weights::<f64>(8).values(), "training must move weights");
}

#[test]
fn zero_weights_predict_the_lowest_class_exactly() {
    let spec = tiny_spec();
    let images = Tensor::new(vec![5, 10, 10, 1], vec![0.3; 500]).unwrap();
    let labels = vec![0u8, 1, 2, 3, 0];
    let set = LabeledSet::new(images, labels, 4).unwrap();
    let zero: ModelWeights<f64> = ModelWeights::zeros(spec.layout());
    let eval = spec.evaluate(&zero, &set).unwrap();
    // All-equal probabilities tie; ties resolve to class 0.
    assert_eq!(eval.accuracy, 2.0 / 5.0);
    assert!((eval.mean_loss - (4.0f64).ln()).abs() < 1e-9);
    assert_eq!(eval.samples, 5);
}

#[test]
fn weights_flatten_and_unflatten_losslessly() {
    let spec = tiny_spec();
    let w: ModelWeights<f64> = spec.init_weights(10);
    let tensors = w.to_tensors();
    assert_eq!(tensors.len(), 6);
    let back = ModelWeights::from_tensors(&tensors).unwrap();
    assert_eq!(back, w);
    // Named views line up with the flat vector.
    let (offset, len) = w.layout().range_of("conv2.b").unwrap();
    assert_eq!(w.view("conv2.b").unwrap(), &w.values()[offset..offset + len]);
}

#[test]
fn forward_rejects_wrong_shapes_and_empty_input() {
    let spec = tiny_spec();
    let w: ModelWeights<f64> = spec.init_weights(11);
    let wrong = Tensor::new(vec![1, 9, 10, 1], vec![0.0; 90]).unwrap();
    assert!(spec.forward(&w, &wrong).is_err());
    let empty = Tensor::new(vec![0, 10, 10, 1], vec![]).unwrap();
    assert!(spec.forward(&w, &empty).is_err());
}

#[test]
fn evaluate_rejects_empty_sets() {
    let spec = tiny_spec();
    let w: ModelWeights<f64> = spec.init_weights(12);
    let images = Tensor::new(vec![0, 10, 10, 1], vec![]).unwrap();
    let set = LabeledSet::new(images, vec![], 4).unwrap();
    assert!(spec.evaluate(&w, &set).is_err());
}

#[test]
fn spec_validation_rejects_misfit_geometry() {
    // 9x9 input with a 4x4 kernel leaves odd maps for pooling.
    let bad = FoundationModelSpec {
        height: 9,
        width: 9,
        channels: 1,
        classes: 4,
        conv1: 3,
        conv2: 5,
        kernel: 4,
    };
    assert!(bad.validate().is_err());
    assert!(FoundationModelSpec::digits().validate().is_ok());
}
