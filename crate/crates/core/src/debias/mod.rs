//! Adversarial debiasing: a generator produces representations `Z`, a
//! multi-label classifier predicts industries from `Z` and an adversary
//! predicts gender from `Z`. Training alternates an adversary update with a
//! generator/classifier update that descends `α·L_cla − β·L_adv` while the
//! adversary is held fixed.

mod checkpoint;
pub mod nn;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::DocMatrix;
use crate::error::{Error, Result};
use crate::eval::metrics::auc;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
use nn::{bce, bce_logit_grad, Activation, Adam, AdamConfig, LayerParams, Mlp};

/// Layer widths of the three stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Width of the input and of `Z`.
    pub repr_dim: usize,
    pub hidden: usize,
    pub generator_hidden_layers: usize,
    pub n_classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { repr_dim: 300, hidden: 128, generator_hidden_layers: 3, n_classes: 21 }
    }
}

impl Architecture {
    pub fn generator_widths(&self) -> Vec<usize> {
        let mut w = vec![self.repr_dim];
        w.extend(std::iter::repeat_n(self.hidden, self.generator_hidden_layers));
        w.push(self.repr_dim);
        w
    }

    pub fn classifier_widths(&self) -> Vec<usize> {
        vec![self.repr_dim, self.hidden, self.n_classes]
    }

    pub fn adversary_widths(&self) -> Vec<usize> {
        vec![self.repr_dim, self.hidden, 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasModel {
    pub arch: Architecture,
    pub generator: Mlp,
    pub classifier: Mlp,
    pub adversary: Mlp,
}

/// Glorot-uniform weights and zero biases; ReLU hidden layers, linear
/// generator output, sigmoid heads.
pub fn init_model(arch: Architecture, seed: u64) -> DebiasModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DebiasModel {
        arch,
        generator: Mlp::new(&arch.generator_widths(), Activation::Relu, Activation::Identity, &mut rng),
        classifier: Mlp::new(&arch.classifier_widths(), Activation::Relu, Activation::Sigmoid, &mut rng),
        adversary: Mlp::new(&arch.adversary_widths(), Activation::Relu, Activation::Sigmoid, &mut rng),
    }
}

/// Outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub z: Array2<f64>,
    /// `n × n_classes`, in (0, 1).
    pub y: Array2<f64>,
    /// `n × 1`, in (0, 1).
    pub s: Array2<f64>,
}

impl DebiasModel {
    fn check_width(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.arch.repr_dim {
            return Err(Error::Dimension { expected: self.arch.repr_dim, got: x.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Outputs> {
        self.check_width(x)?;
        let z = self.generator.forward(x);
        let y = self.classifier.forward(z.view());
        let s = self.adversary.forward(z.view());
        Ok(Outputs { z, y, s })
    }

    pub fn is_finite(&self) -> bool {
        self.generator.is_finite() && self.classifier.is_finite() && self.adversary.is_finite()
    }
}

/// Applies the generator to every row.
pub fn transform(model: &DebiasModel, docs: &DocMatrix) -> Result<DocMatrix> {
    model.check_width(docs.rows.view())?;
    DocMatrix::new(docs.ids.clone(), model.generator.forward(docs.rows.view()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_cla: f64,
    pub l_adv: f64,
}

/// `total = alpha·l_cla + beta·l_adv`.
pub fn combined_loss(alpha: f64, beta: f64, l_cla: f64, l_adv: f64) -> LossBreakdown {
    LossBreakdown { total: alpha * l_cla + beta * l_adv, l_cla, l_adv }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight on the classification loss.
    pub alpha: f64,
    /// Weight on the adversarial loss.
    pub beta: f64,
    pub learning_rate: f64,
    /// Adversary learning rate; `learning_rate` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversary_learning_rate: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adversary updates per generator/classifier update.
    pub adversary_steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            learning_rate: 1e-5,
            adversary_learning_rate: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 20,
            batch_size: 256,
            adversary_steps: 1,
            runs: 5,
            seed: 1,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::config("debias.alpha and debias.beta must be >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("debias.learning_rate must be positive"));
        }
        if self.adversary_learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::config("debias.adversary_learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_epsilon <= 0.0 {
            return Err(Error::config("debias Adam constants out of range"));
        }
        if self.batch_size == 0 || self.runs == 0 || self.adversary_steps == 0 {
            return Err(Error::config("debias.batch_size, runs and adversary_steps must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Inputs, multi-hot industry targets and the sensitive attribute (`n × 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasData {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub s: Array2<f64>,
}

impl DebiasData {
    pub fn new(x: Array2<f64>, y: Array2<f64>, s: Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        if y.nrows() != n || s.nrows() != n || s.ncols() != 1 {
            return Err(Error::data("x, y and s must have the same number of rows and s one column"));
        }
        let binary = |v: &f64| *v == 0.0 || *v == 1.0;
        if !y.iter().all(binary) || !s.iter().all(binary) {
            return Err(Error::data("targets must be 0 or 1"));
        }
        Ok(DebiasData { x, y, s })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn batch(&self, idx: &[usize]) -> DebiasData {
        DebiasData {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
            s: self.s.select(Axis(0), idx),
        }
    }
}

/// Gradient of the adversary objective `bce(s′, s)` for adversary parameters.
pub fn adversary_phase_gradients(model: &DebiasModel, batch: &DebiasData) -> (f64, Vec<LayerParams>) {
    let z = model.generator.forward(batch.x.view());
    adversary_gradients_at(&model.adversary, z.view(), &batch.s)
}

fn adversary_gradients_at(adversary: &Mlp, z: ArrayView2<'_, f64>, s: &Array2<f64>) -> (f64, Vec<LayerParams>) {
    let cache = adversary.forward_cached(z);
    let loss = bce(cache.output(), s);
    let g = bce_logit_grad(cache.output(), s);
    let grads = adversary.param_gradients(&cache, g);
    (loss, grads)
}

pub struct GeneratorPhase {
    /// `alpha·l_cla − beta·l_adv`, the quantity being descended.
    pub objective: f64,
    pub losses: LossBreakdown,
    pub generator: Vec<LayerParams>,
    pub classifier: Vec<LayerParams>,
}

/// Gradients of `alpha·bce(y′, y) − beta·bce(s′, s)` for generator and
/// classifier parameters, adversary fixed.
pub fn generator_phase_gradients(model: &DebiasModel, batch: &DebiasData, alpha: f64, beta: f64) -> GeneratorPhase {
    let g_cache = model.generator.forward_cached(batch.x.view());
    let z = g_cache.output();
    let c_cache = model.classifier.forward_cached(z.view());
    let a_cache = model.adversary.forward_cached(z.view());
    let l_cla = bce(c_cache.output(), &batch.y);
    let l_adv = bce(a_cache.output(), &batch.s);

    let gy = bce_logit_grad(c_cache.output(), &batch.y) * alpha;
    let (classifier, dz_cla) = model.classifier.backward(&c_cache, gy, true);
    let gs = bce_logit_grad(a_cache.output(), &batch.s) * (-beta);
    let (_, dz_adv) = model.adversary.backward(&a_cache, gs, false);
    let generator = model.generator.param_gradients(&g_cache, dz_cla + dz_adv);
    GeneratorPhase {
        objective: alpha * l_cla - beta * l_adv,
        losses: combined_loss(alpha, beta, l_cla, l_adv),
        generator,
        classifier,
    }
}

/// Model plus optimizer state for the alternating updates.
pub struct Trainer {
    pub model: DebiasModel,
    cfg: TrainConfig,
    opt_generator: Adam,
    opt_classifier: Adam,
    opt_adversary: Adam,
}

impl Trainer {
    pub fn new(model: DebiasModel, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = cfg.adam();
        Ok(Trainer {
            opt_generator: Adam::new(adam, &model.generator),
            opt_classifier: Adam::new(adam, &model.classifier),
            opt_adversary: Adam::new(
                AdamConfig { learning_rate: cfg.adversary_learning_rate.unwrap_or(cfg.learning_rate), ..adam },
                &model.adversary,
            ),
            model,
            cfg: cfg.clone(),
        })
    }

    /// Adversary update(s), then a generator/classifier update against the
    /// updated adversary. `batch_index` is only used in error reports.
    pub fn train_step(&mut self, batch: &DebiasData, batch_index: usize) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        // The generator is fixed during the adversary phase, so Z is shared.
        let z = self.model.generator.forward(batch.x.view());
        for _ in 0..self.cfg.adversary_steps {
            let (loss, grads) = adversary_gradients_at(&self.model.adversary, z.view(), &batch.s);
            if !loss.is_finite() {
                return Err(Error::NonFinite { phase: "adversary", batch: batch_index });
            }
            self.opt_adversary.update(&mut self.model.adversary, &grads);
        }
        self.generator_update(batch, batch_index)
    }

    /// Descends `bce(s′, s)` in the adversary parameters only.
    pub fn adversary_update(&mut self, batch: &DebiasData, batch_index: usize) -> Result<f64> {
        let (loss, grads) = adversary_phase_gradients(&self.model, batch);
        if !loss.is_finite() {
            return Err(Error::NonFinite { phase: "adversary", batch: batch_index });
        }
        self.opt_adversary.update(&mut self.model.adversary, &grads);
        Ok(loss)
    }

    /// Descends `alpha·bce(y′, y) − beta·bce(s′, s)` in the generator and
    /// classifier parameters; the adversary is left untouched.
    pub fn generator_update(&mut self, batch: &DebiasData, batch_index: usize) -> Result<LossBreakdown> {
        let phase = generator_phase_gradients(&self.model, batch, self.cfg.alpha, self.cfg.beta);
        if !phase.objective.is_finite() {
            return Err(Error::NonFinite { phase: "generator", batch: batch_index });
        }
        self.opt_generator.update(&mut self.model.generator, &phase.generator);
        self.opt_classifier.update(&mut self.model.classifier, &phase.classifier);
        if !self.model.is_finite() {
            return Err(Error::NonFinite { phase: "generator", batch: batch_index });
        }
        Ok(phase.losses)
    }

    pub fn into_model(self) -> DebiasModel {
        self.model
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_cla: f64,
    pub l_adv: f64,
    pub total: f64,
    pub valid: Option<ValidMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidMetrics {
    pub l_cla: f64,
    pub l_adv: f64,
    /// AUC of the co-trained adversary on validation `Z`.
    pub adversary_auc: f64,
    /// Mean over all (document, label) decisions at threshold 0.5.
    pub accuracy: f64,
}

pub fn validation_metrics(model: &DebiasModel, data: &DebiasData) -> Result<ValidMetrics> {
    let out = model.forward(data.x.view())?;
    let scores: Vec<f64> = out.s.iter().copied().collect();
    let labels: Vec<bool> = data.s.iter().map(|&v| v == 1.0).collect();
    let correct = out
        .y
        .iter()
        .zip(data.y.iter())
        .filter(|(&p, &t)| (p >= 0.5) == (t == 1.0))
        .count();
    Ok(ValidMetrics {
        l_cla: bce(&out.y, &data.y),
        l_adv: bce(&out.s, &data.s),
        adversary_auc: auc(&scores, &labels)?,
        accuracy: correct as f64 / data.y.len().max(1) as f64,
    })
}

/// Shuffled minibatch training for `cfg.epochs` epochs.
pub fn train(
    model: DebiasModel,
    train_data: &DebiasData,
    valid_data: Option<&DebiasData>,
    cfg: &TrainConfig,
) -> Result<(DebiasModel, Vec<EpochRecord>)> {
    if train_data.x.ncols() != model.arch.repr_dim {
        return Err(Error::Dimension { expected: model.arch.repr_dim, got: train_data.x.ncols() });
    }
    let mut trainer = Trainer::new(model, cfg)?;
    if cfg.epochs > 0 && train_data.is_empty() {
        return Err(Error::data("empty training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch_index = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut weight) = ((0.0, 0.0, 0.0), 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_data.batch(chunk);
            let l = trainer.train_step(&batch, batch_index)?;
            let w = chunk.len() as f64;
            sum = (sum.0 + w * l.l_cla, sum.1 + w * l.l_adv, sum.2 + w * l.total);
            weight += w;
            batch_index += 1;
        }
        let valid = valid_data.map(|v| validation_metrics(&trainer.model, v)).transpose()?;
        history.push(EpochRecord {
            epoch,
            l_cla: sum.0 / weight,
            l_adv: sum.1 / weight,
            total: sum.2 / weight,
            valid,
        });
    }
    Ok((trainer.into_model(), history))
}

/// Mean, variance and range of one metric across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            variance,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            values: values.to_vec(),
        }
    }
}

pub struct TrainedRun {
    pub seed: u64,
    pub model: DebiasModel,
    pub history: Vec<EpochRecord>,
}

pub struct RunsResult {
    pub runs: Vec<TrainedRun>,
    /// Final-epoch metrics summarized across runs.
    pub summary: BTreeMap<String, Summary>,
}

/// `cfg.runs` independent trainings with seeds `cfg.seed + k`.
pub fn train_runs(
    arch: Architecture,
    train_data: &DebiasData,
    valid_data: Option<&DebiasData>,
    cfg: &TrainConfig,
) -> Result<RunsResult> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.runs);
    for k in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(k as u64);
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        let (model, history) = train(init_model(arch, seed), train_data, valid_data, &run_cfg)?;
        runs.push(TrainedRun { seed, model, history });
    }
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in &runs {
        if let Some(last) = run.history.last() {
            let mut push = |k: &str, v: f64| per_metric.entry(k.to_string()).or_default().push(v);
            push("l_cla", last.l_cla);
            push("l_adv", last.l_adv);
            push("total", last.total);
            if let Some(v) = &last.valid {
                push("valid_l_cla", v.l_cla);
                push("valid_l_adv", v.l_adv);
                push("valid_adversary_auc", v.adversary_auc);
                push("valid_accuracy", v.accuracy);
            }
        }
    }
    let summary = per_metric.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect();
    Ok(RunsResult { runs, summary })
}

/// Writes one JSON object per epoch.
pub fn write_history<W: std::io::Write>(history: &[EpochRecord], mut w: W) -> std::io::Result<()> {
    for rec in history {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests;
