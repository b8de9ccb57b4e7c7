//! Skip-gram with negative sampling.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and gradients of one (center, context) pair with its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// `−ln σ(c·o) − Σ_k ln σ(−c·n_k)` and its exact partial derivatives.
pub fn sgns_pair_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<PairGradient> {
    let dim = center.len();
    for v in std::iter::once(context).chain(negatives.iter().copied()) {
        if v.len() != dim {
            return Err(Error::Dimension { expected: dim, got: v.len() });
        }
    }
    let pos = dot(center, context);
    let mut loss = -log_sigmoid(pos);
    let coef_pos = sigmoid(pos) - 1.0;
    let mut g_center: Vec<f64> = context.iter().map(|o| coef_pos * o).collect();
    let g_context: Vec<f64> = center.iter().map(|c| coef_pos * c).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let s = dot(center, n);
        loss -= log_sigmoid(-s);
        let coef = sigmoid(s);
        for (g, x) in g_center.iter_mut().zip(n.iter()) {
            *g += coef * x;
        }
        g_negs.push(center.iter().map(|c| coef * c).collect());
    }
    Ok(PairGradient { loss, center: g_center, context: g_context, negatives: g_negs })
}

/// Row storage the update loop writes into.
pub(crate) trait RowStore {
    fn read(&mut self, row: usize, out: &mut [f64]);
    fn add(&mut self, row: usize, delta: &[f64]);
}

pub(crate) struct DenseRows<'a> {
    pub data: &'a mut [f64],
    pub dim: usize,
}

impl RowStore for DenseRows<'_> {
    #[inline]
    fn read(&mut self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[row * self.dim..(row + 1) * self.dim]);
    }

    #[inline]
    fn add(&mut self, row: usize, delta: &[f64]) {
        for (x, d) in self.data[row * self.dim..(row + 1) * self.dim].iter_mut().zip(delta) {
            *x += d;
        }
    }
}

/// Lock-free shared matrix for concurrent (Hogwild-style) updates.
pub(crate) struct AtomicRows {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl AtomicRows {
    pub fn from_slice(values: &[f64], dim: usize) -> Self {
        AtomicRows {
            data: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            dim,
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
    }
}

impl RowStore for &AtomicRows {
    #[inline]
    fn read(&mut self, row: usize, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.data[row * self.dim..(row + 1) * self.dim]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    #[inline]
    fn add(&mut self, row: usize, delta: &[f64]) {
        // Racy read-modify-write by design of the parallel mode: concurrent
        // updates to the same row may be lost.
        for (a, d) in self.data[row * self.dim..(row + 1) * self.dim].iter().zip(delta) {
            let v = f64::from_bits(a.load(Ordering::Relaxed)) + d;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Per-worker scratch buffers and sampling state.
pub(crate) struct Worker {
    pub rng: ChaCha8Rng,
    center: Vec<f64>,
    target: Vec<f64>,
    grad_center: Vec<f64>,
    delta: Vec<f64>,
    pub loss_sum: f64,
    pub pairs: u64,
}

pub(crate) struct Sampling<'a> {
    pub negatives: &'a WeightedAliasIndex<f64>,
    /// Probability of keeping each vocabulary entry.
    pub keep: &'a [f64],
    pub window: usize,
    pub n_negatives: usize,
}

impl Worker {
    pub fn new(dim: usize, seed: u64) -> Self {
        Worker {
            rng: ChaCha8Rng::seed_from_u64(seed),
            center: vec![0.0; dim],
            target: vec![0.0; dim],
            grad_center: vec![0.0; dim],
            delta: vec![0.0; dim],
            loss_sum: 0.0,
            pairs: 0,
        }
    }

    /// One descent step on the pair loss; returns the pre-update loss.
    #[inline]
    fn pair_step<I: RowStore, O: RowStore>(
        &mut self,
        input: &mut I,
        output: &mut O,
        center: usize,
        context: usize,
        s: &Sampling<'_>,
        lr: f64,
    ) {
        input.read(center, &mut self.center);
        self.grad_center.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for k in 0..=s.n_negatives {
            let (target, label) = if k == 0 {
                (context, 1.0)
            } else {
                let t = s.negatives.sample(&mut self.rng);
                if t == context {
                    continue;
                }
                (t, 0.0)
            };
            output.read(target, &mut self.target);
            let score = dot(&self.center, &self.target);
            loss -= if label == 1.0 { log_sigmoid(score) } else { log_sigmoid(-score) };
            // −∂loss/∂score
            let g = label - sigmoid(score);
            for ((gc, t), (d, c)) in self
                .grad_center
                .iter_mut()
                .zip(&self.target)
                .zip(self.delta.iter_mut().zip(&self.center))
            {
                *gc += g * t;
                *d = lr * g * c;
            }
            output.add(target, &self.delta);
        }
        for g in self.grad_center.iter_mut() {
            *g *= lr;
        }
        input.add(center, &self.grad_center);
        self.loss_sum += loss;
        self.pairs += 1;
    }

    /// Trains on one tokenized sentence of vocabulary ids.
    #[allow(clippy::too_many_arguments)]
    pub fn sentence<I: RowStore, O: RowStore>(
        &mut self,
        input: &mut I,
        output: &mut O,
        sentence: &[usize],
        s: &Sampling<'_>,
        lr: f64,
        kept: &mut Vec<usize>,
    ) {
        kept.clear();
        for &w in sentence {
            let p = s.keep[w];
            if p >= 1.0 || self.rng.random::<f64>() < p {
                kept.push(w);
            }
        }
        for pos in 0..kept.len() {
            let shrink = self.rng.random_range(0..s.window);
            let span = s.window - shrink;
            let lo = pos.saturating_sub(span);
            let hi = (pos + span).min(kept.len() - 1);
            for ctx in lo..=hi {
                if ctx != pos {
                    self.pair_step(input, output, kept[pos], kept[ctx], s, lr);
                }
            }
        }
    }
}
