use super::*;
use ndarray::s;
use ndarray::{array, Array2};
use rand::Rng;

const MINI: Architecture = Architecture { repr_dim: 6, hidden: 4, generator_hidden_layers: 1, n_classes: 3 };

fn random_data(n: usize, arch: Architecture, seed: u64) -> DebiasData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, arch.repr_dim), || rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_simple_fn((n, arch.n_classes), || rng.random_bool(0.4) as u8 as f64);
    let s = Array2::from_shape_simple_fn((n, 1), || rng.random_bool(0.5) as u8 as f64);
    DebiasData::new(x, y, s).unwrap()
}

fn zero_model(arch: Architecture) -> DebiasModel {
    let m = init_model(arch, 0);
    DebiasModel {
        arch,
        generator: m.generator.zeroed(),
        classifier: m.classifier.zeroed(),
        adversary: m.adversary.zeroed(),
    }
}

#[test]
fn init_is_deterministic_with_zero_bias() {
    let a = init_model(Architecture::default(), 1);
    assert_eq!(a, init_model(Architecture::default(), 1));
    assert_ne!(a, init_model(Architecture::default(), 2));
    for mlp in [&a.generator, &a.classifier, &a.adversary] {
        for l in &mlp.layers {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            let n = l.weights.len() as f64;
            let var = l.weights.mapv(|w| w * w).sum() / n;
            let target = 2.0 / (l.inputs() + l.outputs()) as f64;
            assert!((var / target - 1.0).abs() < 0.2, "{var} vs {target}");
        }
    }
    assert_eq!(a.generator.widths(), vec![300, 128, 128, 128, 300]);
    assert_eq!(a.classifier.widths(), vec![300, 128, 21]);
    assert_eq!(a.adversary.widths(), vec![300, 128, 1]);
}

#[test]
fn zero_model_forward() {
    let m = zero_model(Architecture::default());
    let x = Array2::from_elem((3, 300), 0.7);
    let out = m.forward(x.view()).unwrap();
    assert!(out.z.iter().all(|&v| v == 0.0));
    assert!(out.y.iter().all(|&v| v == 0.5));
    assert!(out.s.iter().all(|&v| v == 0.5));
    let docs = DocMatrix::new(vec!["a".into(), "b".into(), "c".into()], x).unwrap();
    assert!(transform(&m, &docs).unwrap().rows.iter().all(|&v| v == 0.0));
}

#[test]
fn forward_rows_are_independent_and_in_range() {
    let m = init_model(Architecture::default(), 4);
    let data = random_data(2, Architecture::default(), 4);
    let both = m.forward(data.x.view()).unwrap();
    for i in 0..2 {
        let single = m.forward(data.x.slice(s![i..i + 1, ..])).unwrap();
        for (a, b) in single.z.iter().zip(both.z.row(i)) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        for (a, b) in single.y.iter().zip(both.y.row(i)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    assert!(both.z.iter().all(|v| v.is_finite()));
    assert!(both.y.iter().chain(both.s.iter()).all(|&p| p > 0.0 && p < 1.0));
    assert!(matches!(
        m.forward(Array2::zeros((1, 5)).view()),
        Err(Error::Dimension { expected: 300, got: 5 })
    ));
}

#[test]
fn combined_loss_examples() {
    let l = combined_loss(1.0, 1.0, 0.3, 0.7);
    assert!((l.total - 1.0).abs() < 1e-15);
    assert_eq!(combined_loss(0.0, 0.5, 0.9, 0.8).total, 0.4);
    assert!((combined_loss(2.0, 0.5, 0.4, 0.8).total - 1.2).abs() < 1e-15);
}

/// Relative error with a small absolute floor for near-zero partials.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn for_each_param(mlp: &mut Mlp, mut f: impl FnMut(&mut f64, usize, usize, bool, usize)) {
    for (li, layer) in mlp.layers.iter_mut().enumerate() {
        let cols = layer.weights.ncols();
        for (k, w) in layer.weights.iter_mut().enumerate() {
            f(w, li, k / cols * cols + k % cols, false, k);
        }
        for (k, b) in layer.bias.iter_mut().enumerate() {
            f(b, li, k, true, k);
        }
    }
}

fn grad_at(g: &[LayerParams], li: usize, is_bias: bool, k: usize) -> f64 {
    if is_bias {
        g[li].bias[k]
    } else {
        let cols = g[li].weights.ncols();
        g[li].weights[[k / cols, k % cols]]
    }
}

#[derive(Clone, Copy)]
enum Stack {
    Generator,
    Classifier,
    Adversary,
}

fn stack_mut(m: &mut DebiasModel, s: Stack) -> &mut Mlp {
    match s {
        Stack::Generator => &mut m.generator,
        Stack::Classifier => &mut m.classifier,
        Stack::Adversary => &mut m.adversary,
    }
}

/// Worst relative error between analytic and central-difference partials.
fn check_stack(
    model: &DebiasModel,
    stack: Stack,
    grads: &[LayerParams],
    objective: &dyn Fn(&DebiasModel) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    let n_params: Vec<(usize, bool, usize)> = {
        let mut v = Vec::new();
        for_each_param(stack_mut(&mut probe, stack), |_, li, _, is_bias, k| v.push((li, is_bias, k)));
        v
    };
    for (li, is_bias, k) in n_params {
        let eval = |delta: f64| {
            let mut m = model.clone();
            let layer = &mut stack_mut(&mut m, stack).layers[li];
            if is_bias {
                layer.bias[k] += delta;
            } else {
                layer.weights.as_slice_mut().unwrap()[k] += delta;
            }
            objective(&m)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max(rel_err(fd, grad_at(grads, li, is_bias, k)));
    }
    worst
}

#[test]
fn both_phases_match_finite_differences() {
    for seed in 0..3 {
        // Nonzero biases keep ReLU pre-activations away from the kink at 0,
        // which zero biases hit exactly whenever a hidden layer dies.
        let mut model = init_model(MINI, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mlp in [&mut model.generator, &mut model.classifier, &mut model.adversary] {
            for l in &mut mlp.layers {
                l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
        }
        let batch = random_data(5, MINI, 100 + seed);
        let (_, adv) = adversary_phase_gradients(&model, &batch);
        let adv_obj = |m: &DebiasModel| adversary_phase_gradients(m, &batch).0;
        assert!(check_stack(&model, Stack::Adversary, &adv, &adv_obj) < 1e-4);

        let (alpha, beta) = (1.3, 0.7);
        let phase = generator_phase_gradients(&model, &batch, alpha, beta);
        let gen_obj = |m: &DebiasModel| generator_phase_gradients(m, &batch, alpha, beta).objective;
        assert!(check_stack(&model, Stack::Generator, &phase.generator, &gen_obj) < 1e-4);
        assert!(check_stack(&model, Stack::Classifier, &phase.classifier, &gen_obj) < 1e-4);
    }
}

#[test]
fn phases_only_touch_their_parameters() {
    let data = random_data(16, MINI, 1);
    let cfg = TrainConfig { learning_rate: 1e-2, ..TrainConfig::default() };
    let mut t = Trainer::new(init_model(MINI, 1), &cfg).unwrap();
    let before = t.model.clone();
    t.adversary_update(&data, 0).unwrap();
    assert_eq!(t.model.generator, before.generator);
    assert_eq!(t.model.classifier, before.classifier);
    assert_ne!(t.model.adversary, before.adversary);
    let mid = t.model.clone();
    t.generator_update(&data, 0).unwrap();
    assert_eq!(t.model.adversary, mid.adversary);
    assert_ne!(t.model.generator, mid.generator);
    assert_ne!(t.model.classifier, mid.classifier);
}

#[test]
fn reported_total_is_weighted_sum() {
    let data = random_data(32, MINI, 2);
    for (alpha, beta) in [(1.0, 1.0), (0.0, 2.0), (2.5, 0.3)] {
        let cfg = TrainConfig { alpha, beta, learning_rate: 1e-2, ..TrainConfig::default() };
        let mut t = Trainer::new(init_model(MINI, 3), &cfg).unwrap();
        for b in 0..5 {
            let l = t.train_step(&data, b).unwrap();
            assert_eq!(l.total, alpha * l.l_cla + beta * l.l_adv);
        }
    }
}

#[test]
fn zero_epochs_leaves_model_unchanged() {
    let data = random_data(10, MINI, 0);
    let m = init_model(MINI, 5);
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let (trained, hist) = train(m.clone(), &data, None, &cfg).unwrap();
    assert_eq!(trained, m);
    assert!(hist.is_empty());
}

#[test]
fn training_is_deterministic() {
    let data = random_data(64, MINI, 0);
    let valid = random_data(32, MINI, 1);
    let cfg = TrainConfig { epochs: 3, batch_size: 16, learning_rate: 1e-2, ..TrainConfig::default() };
    let a = train(init_model(MINI, 5), &data, Some(&valid), &cfg).unwrap();
    let b = train(init_model(MINI, 5), &data, Some(&valid), &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.1.len(), 3);
}

#[test]
fn classifier_only_training_reduces_validation_loss() {
    // beta = 0: plain multi-label training on a linearly separable toy set.
    let arch = MINI;
    let make = |n: usize, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, arch.repr_dim), || rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, arch.n_classes), |(i, c)| (x[[i, c]] > 0.0) as u8 as f64);
        let s = Array2::from_shape_fn((n, 1), |(i, _)| (i % 2) as f64);
        DebiasData::new(x, y, s).unwrap()
    };
    let (tr, va) = (make(200, 1), make(100, 2));
    let cfg = TrainConfig { beta: 0.0, epochs: 50, batch_size: 20, learning_rate: 1e-2, ..TrainConfig::default() };
    let (_, hist) = train(init_model(arch, 1), &tr, Some(&va), &cfg).unwrap();
    let first = hist[0].valid.as_ref().unwrap().l_cla;
    let last = hist.last().unwrap().valid.as_ref().unwrap().l_cla;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn run_summaries() {
    let data = random_data(40, MINI, 0);
    let valid = random_data(20, MINI, 1);
    let one = train_runs(MINI, &data, Some(&valid), &TrainConfig { runs: 1, epochs: 2, batch_size: 8, ..TrainConfig::default() }).unwrap();
    let s = &one.summary["valid_adversary_auc"];
    assert_eq!(s.mean, s.values[0]);
    assert_eq!(s.variance, 0.0);

    let five = train_runs(MINI, &data, Some(&valid), &TrainConfig { runs: 5, epochs: 2, batch_size: 8, learning_rate: 1e-2, ..TrainConfig::default() }).unwrap();
    assert_eq!(five.runs.len(), 5);
    assert_eq!(five.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    for s in five.summary.values() {
        assert_eq!(s.values.len(), 5);
        assert!(s.mean >= s.min - 1e-15 && s.mean <= s.max + 1e-15);
        assert!(s.variance >= 0.0);
    }
}

#[test]
fn transform_properties() {
    let m = init_model(MINI, 2);
    let data = random_data(4, MINI, 9);
    let docs = DocMatrix::new((0..4).map(|i| format!("d{i}")).collect(), data.x.clone()).unwrap();
    let z = transform(&m, &docs).unwrap();
    assert_eq!(z.ids, docs.ids);
    assert_eq!(z, transform(&m, &docs).unwrap());
    let perm = [2, 0, 3, 1];
    let zp = transform(&m, &docs.select(&perm)).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        for (a, b) in zp.rows.row(k).iter().zip(z.rows.row(i)) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
    let narrow = DocMatrix::new(vec!["x".into()], array![[1.0, 2.0]]).unwrap();
    assert!(transform(&m, &narrow).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = TrainConfig { learning_rate: 3e-4, ..TrainConfig::default() };
    let data = random_data(30, MINI, 0);
    let (m, _) = train(init_model(MINI, 8), &data, None, &TrainConfig { epochs: 2, batch_size: 8, learning_rate: 1e-2, ..cfg.clone() }).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&m, Some(&cfg), &mut buf).unwrap();
    let (back, back_cfg) = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(back, m);
    assert_eq!(back_cfg, Some(cfg));
    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
    assert!(read_checkpoint(truncated.as_bytes()).is_err());
}

#[test]
fn data_validation() {
    assert!(DebiasData::new(Array2::zeros((2, 3)), Array2::zeros((2, 2)), Array2::from_elem((2, 1), 0.5)).is_err());
    assert!(DebiasData::new(Array2::zeros((2, 3)), Array2::zeros((3, 2)), Array2::zeros((2, 1))).is_err());
}
