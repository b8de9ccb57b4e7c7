//! Dense layers with hand-written backpropagation, plus Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, a: &mut Array2<f64>) {
        match self {
            Activation::Relu => a.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => a.mapv_inplace(sigmoid),
            Activation::Identity => {}
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights are `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LayerParams { weights: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    /// Uniform in ±sqrt(6 / (in + out)), zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-limit..limit));
        LayerParams { weights, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Feed-forward stack; `activations[i]` follows `layers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<LayerParams>,
    pub activations: Vec<Activation>,
}

/// Layer outputs kept for the backward pass. `outputs[0]` is the input.
pub struct ForwardCache {
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("nonempty")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.outputs.pop().expect("nonempty")
    }
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new<R: Rng>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let n = widths.len() - 1;
        let layers = widths.windows(2).map(|w| LayerParams::glorot(w[0], w[1], rng)).collect();
        let activations = (0..n).map(|i| if i + 1 == n { output } else { hidden }).collect();
        Mlp { layers, activations }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(LayerParams::outputs));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            act.apply(&mut z);
            a = z;
        }
        a
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_owned());
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let mut z = outputs.last().unwrap().dot(&layer.weights.t());
            z += &layer.bias;
            act.apply(&mut z);
            outputs.push(z);
        }
        ForwardCache { outputs }
    }

    /// Backpropagates `grad_pre`, the gradient with respect to the last
    /// layer's pre-activation. Returns per-layer parameter gradients and the
    /// gradient with respect to the input. Parameter gradients are skipped
    /// when `want_params` is false.
    pub fn backward(&self, cache: &ForwardCache, grad_pre: Array2<f64>, want_params: bool) -> (Vec<LayerParams>, Array2<f64>) {
        let (grads, dx) = self.backprop(cache, grad_pre, want_params, true);
        (grads, dx.expect("input gradient requested"))
    }

    /// Parameter gradients only; skips the product for the input gradient.
    pub fn param_gradients(&self, cache: &ForwardCache, grad_pre: Array2<f64>) -> Vec<LayerParams> {
        self.backprop(cache, grad_pre, true, false).0
    }

    fn backprop(&self, cache: &ForwardCache, grad_pre: Array2<f64>, want_params: bool, want_input: bool) -> (Vec<LayerParams>, Option<Array2<f64>>) {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(if want_params { n } else { 0 });
        let mut delta = grad_pre;
        for i in (0..n).rev() {
            let input = &cache.outputs[i];
            if want_params {
                grads.push(LayerParams { weights: delta.t().dot(input), bias: delta.sum_axis(Axis(0)) });
            }
            if i == 0 && !want_input {
                grads.reverse();
                return (grads, None);
            }
            let mut grad_in = delta.dot(&self.layers[i].weights);
            if i > 0 {
                // `input` is the post-activation output of layer i-1.
                match self.activations[i - 1] {
                    Activation::Relu => Zip::from(&mut grad_in).and(input).for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }),
                    Activation::Sigmoid => Zip::from(&mut grad_in).and(input).for_each(|g, &a| *g *= a * (1.0 - a)),
                    Activation::Identity => {}
                }
            }
            delta = grad_in;
        }
        grads.reverse();
        (grads, Some(delta))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerParams::is_finite)
    }

    pub fn zeroed(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(|l| LayerParams::zeros(l.inputs(), l.outputs())).collect(),
            activations: self.activations.clone(),
        }
    }
}

/// Probability clamp applied before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all elements, predictions clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "bce shape mismatch");
    let n = pred.len() as f64;
    let sum: f64 = Zip::from(pred).and(target).fold(0.0, |acc, &p, &t| {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        acc - (t * p.ln() + (1.0 - t) * (1.0 - p).ln())
    });
    sum / n
}

/// Gradient of [`bce`] with respect to the logits of sigmoid outputs `pred`,
/// `(p − t) / N`.
///
/// The clamp only guards the logarithm of the reported loss; the gradient is
/// that of the unclamped logit-space loss. A saturated unit therefore still
/// receives the full corrective signal instead of a zero gradient, which
/// would leave it stuck.
pub fn bce_logit_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    (pred - target) / pred.len() as f64
}

/// Moments of parameters whose gradient stays zero (dead ReLU units) decay
/// geometrically into the subnormal range, where arithmetic is very slow.
/// They are cut to zero there instead; the update they would produce is far
/// below the parameter's precision.
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE { 0.0 } else { x }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moments for one stack.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<LayerParams>,
    v: Vec<LayerParams>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, like: &Mlp) -> Self {
        let z = like.zeroed();
        Adam { cfg, step: 0, m: z.layers.clone(), v: z.layers }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut Mlp, grads: &[LayerParams]) {
        self.step += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = self.cfg;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, g), m), v) in params.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let upd = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = flush(b1 * *m + (1.0 - b1) * g);
                *v = flush(b2 * *v + (1.0 - b2) * g * g);
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            Zip::from(&mut p.weights).and(&g.weights).and(&mut m.weights).and(&mut v.weights).for_each(upd);
            Zip::from(&mut p.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(upd);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce(&array![[0.5]], &array![[1.0]]) - ln2).abs() < 1e-15);
        let clamped = bce(&array![[1.0]], &array![[1.0]]);
        assert!((clamped - -(1.0 - PROB_EPS).ln()).abs() < 1e-20);
        assert!((clamped - 1e-7).abs() < 1e-13);
        // Saturated and wrong still pushes back.
        let g = bce_logit_grad(&array![[1.0, 0.0]], &array![[0.0, 0.0]]);
        assert_eq!(g, array![[0.5, 0.0]]);
        let v = bce(&array![[0.9, 0.2]], &array![[1.0, 0.0]]);
        assert!((v - 0.164252).abs() < 5e-7, "{v}");
        assert!((v - 0.5 * (-(0.9f64).ln() - (0.8f64).ln())).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn bce_shape_mismatch() {
        bce(&array![[0.5, 0.5]], &array![[1.0]]);
    }

    #[test]
    fn glorot_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = LayerParams::glorot(300, 128, &mut rng);
        let n = l.weights.len() as f64;
        let mean = l.weights.sum() / n;
        let var = l.weights.mapv(|w| (w - mean).powi(2)).sum() / n;
        let target = 2.0 / (300.0 + 128.0);
        assert!((var / target - 1.0).abs() < 0.2);
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[3, 5, 2], Activation::Sigmoid, Activation::Identity, &mut rng);
        let x = array![[0.3, -0.1, 0.7], [-0.4, 0.2, 0.5]];
        // loss = sum(output * w) for a fixed w
        let w = array![[0.7, -1.3], [0.2, 0.9]];
        let loss = |net: &Mlp| (net.forward(x.view()) * &w).sum();
        let cache = net.forward_cached(x.view());
        let (grads, _) = net.backward(&cache, w.clone(), true);
        assert_eq!(net.param_gradients(&cache, w.clone()), grads);
        let h = 1e-6;
        for (li, layer) in net.layers.iter().enumerate() {
            for idx in 0..layer.weights.len() {
                let (r, c) = (idx / layer.weights.ncols(), idx % layer.weights.ncols());
                let mut p = net.clone();
                p.layers[li].weights[[r, c]] += h;
                let mut m = net.clone();
                m.layers[li].weights[[r, c]] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - grads[li].weights[[r, c]]).abs() < 1e-7);
            }
            for k in 0..layer.bias.len() {
                let mut p = net.clone();
                p.layers[li].bias[k] += h;
                let mut m = net.clone();
                m.layers[li].bias[k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - grads[li].bias[k]).abs() < 1e-7, "layer {li} bias {k}: {fd} vs {}", grads[li].bias[k]);
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[2, 1], Activation::Identity, Activation::Identity, &mut rng);
        let before = net.clone();
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.01, ..AdamConfig::default() }, &net);
        let grads = vec![LayerParams { weights: array![[2.0, -3.0]], bias: array![0.5] }];
        opt.update(&mut net, &grads);
        let dw = &net.layers[0].weights - &before.layers[0].weights;
        assert!((dw[[0, 0]] + 0.01).abs() < 1e-8);
        assert!((dw[[0, 1]] - 0.01).abs() < 1e-8);
        assert_eq!(opt.steps(), 1);
    }
}
