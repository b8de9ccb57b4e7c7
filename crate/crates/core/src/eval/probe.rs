//! Small sigmoid classifiers trained with Adam on binary cross-entropy: the
//! gender probe and the industry classifier used for the parity report.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use crate::corpus::split_indices;
use crate::debias::nn::{bce_logit_grad, Activation, Adam, AdamConfig, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Used by [`train_probe_split`] only.
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { hidden: 128, epochs: 30, learning_rate: 1e-3, batch_size: 64, valid_fraction: 0.3, seed: 1 }
    }
}

/// Fits an `in → hidden → k` network with sigmoid outputs to 0/1 targets.
pub fn train_classifier(x: ArrayView2<'_, f64>, targets: &Array2<f64>, cfg: &ClassifierConfig) -> Result<Mlp> {
    if x.nrows() != targets.nrows() {
        return Err(Error::Dimension { expected: x.nrows(), got: targets.nrows() });
    }
    if x.nrows() == 0 || cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(Error::data("classifier needs data, a positive batch size and hidden width"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::new(&[x.ncols(), cfg.hidden, targets.ncols()], Activation::Relu, Activation::Sigmoid, &mut rng);
    let mut opt = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() }, &net);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let tb = targets.select(Axis(0), chunk);
            let cache = net.forward_cached(xb.view());
            let g = bce_logit_grad(cache.output(), &tb);
            let grads = net.param_gradients(&cache, g);
            opt.update(&mut net, &grads);
        }
    }
    if !net.is_finite() {
        return Err(Error::Numeric("classifier training diverged".into()));
    }
    Ok(net)
}

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub probe: Mlp,
    /// Held-out AUC.
    pub auc: f64,
    /// Held-out accuracy at threshold 0.5.
    pub accuracy: f64,
}

fn as_column(labels: &[bool]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), 1), |(i, _)| if labels[i] { 1.0 } else { 0.0 })
}

/// Trains a one-hidden-layer gender probe on the training vectors and scores
/// it on the held-out vectors.
pub fn train_probe(
    train_x: ArrayView2<'_, f64>,
    train_s: &[bool],
    valid_x: ArrayView2<'_, f64>,
    valid_s: &[bool],
    cfg: &ClassifierConfig,
) -> Result<ProbeResult> {
    for labels in [train_s, valid_s] {
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            return Err(Error::data("gender probe needs both genders in train and validation data"));
        }
    }
    let probe = train_classifier(train_x, &as_column(train_s), cfg)?;
    let scores: Vec<f64> = probe.forward(valid_x).iter().copied().collect();
    Ok(ProbeResult { auc: auc(&scores, valid_s)?, accuracy: accuracy(&scores, valid_s, 0.5)?, probe })
}

/// Splits `x` with `cfg.valid_fraction` and `cfg.seed`, then calls
/// [`train_probe`].
pub fn train_probe_split(x: ArrayView2<'_, f64>, s: &[bool], cfg: &ClassifierConfig) -> Result<ProbeResult> {
    let (tr, va) = split_indices(x.nrows(), cfg.valid_fraction, cfg.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| s[i]).collect::<Vec<_>>();
    train_probe(
        x.select(Axis(0), &tr).view(),
        &pick(&tr),
        x.select(Axis(0), &va).view(),
        &pick(&va),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    fn quick() -> ClassifierConfig {
        ClassifierConfig { hidden: 16, epochs: 15, batch_size: 32, ..ClassifierConfig::default() }
    }

    #[test]
    fn predictive_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<bool> = (0..400).map(|_| rng.random_bool(0.5)).collect();
        let mut x = noise(400, 10, 2);
        for (i, &g) in s.iter().enumerate() {
            x[[i, 3]] = if g { 1.0 } else { 0.0 };
        }
        let cfg = ClassifierConfig { epochs: 60, ..quick() };
        let r = train_probe_split(x.view(), &s, &cfg).unwrap();
        assert!(r.auc >= 0.99, "{}", r.auc);
    }

    #[test]
    fn shuffled_labels_are_chance() {
        let mut mean = 0.0;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
            let x = noise(2000, 10, seed);
            let s: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.5)).collect();
            let cfg = ClassifierConfig { seed, epochs: 5, ..quick() };
            let r = train_probe_split(x.view(), &s, &cfg).unwrap();
            mean += r.auc / 5.0;
        }
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn single_gender_is_an_error() {
        let x = noise(20, 3, 0);
        assert!(train_probe_split(x.view(), &[true; 20], &quick()).is_err());
    }

    #[test]
    fn deterministic() {
        let x = noise(100, 4, 0);
        let s: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let a = train_probe_split(x.view(), &s, &quick()).unwrap();
        let b = train_probe_split(x.view(), &s, &quick()).unwrap();
        assert_eq!(a.probe, b.probe);
        assert_eq!(a.auc, b.auc);
    }
}
