//! A small dense feedforward network with hand-written backpropagation.
//!
//! Everything is `f64`. Batches are row-major [`Matrix`] values with one
//! sample per row; the single-sample [`Mlp::forward`] / [`Mlp::backward`]
//! pair is a thin wrapper over a batch of one.

mod io;
mod optim;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use io::{load_mlp, mlp_from_text, mlp_to_text, save_mlp, MAGIC};
pub use optim::{optimizer_step, OptimizerState};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("{context}: expected {expected}, got {got}")]
    Dimension { context: &'static str, expected: usize, got: usize },
    #[error("non-finite parameter in layer {layer} at index {index}")]
    NonFinite { layer: usize, index: usize },
    #[error("network has no layers")]
    Empty,
    #[error("unknown activation {0:?}")]
    UnknownActivation(String),
    #[error("optimizer {name} = {value} out of range")]
    Hyperparameter { name: &'static str, value: f64 },
    #[error("finite-difference step {0} outside (0, 1e-3]")]
    Step(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            _ => Err(NetError::UnknownActivation(s.to_string())),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NetError> {
        if data.len() != rows * cols {
            return Err(NetError::Dimension { context: "matrix data", expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NetError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NetError::Dimension { context: "matrix row", expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        outputs: usize,
        inputs: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self, NetError> {
        if outputs == 0 || inputs == 0 {
            return Err(NetError::Dimension { context: "layer width", expected: 1, got: 0 });
        }
        if weights.len() != outputs * inputs {
            return Err(NetError::Dimension { context: "layer weights", expected: outputs * inputs, got: weights.len() });
        }
        if biases.len() != outputs {
            return Err(NetError::Dimension { context: "layer biases", expected: outputs, got: biases.len() });
        }
        Ok(Self { inputs, outputs, weights, biases, activation })
    }

    /// Uniform weights in `±√(6 / (in + out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(outputs: usize, inputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..outputs * inputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Self { inputs, outputs, weights, biases: vec![0.0; outputs], activation }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_batch(&self, input: &Matrix) -> (Matrix, Matrix) {
        let mut pre = Matrix::zeros(input.rows, self.outputs);
        let mut post = Matrix::zeros(input.rows, self.outputs);
        for r in 0..input.rows {
            let x = input.row(r);
            let z = pre.row_mut(r);
            for (o, zo) in z.iter_mut().enumerate() {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                *zo = self.biases[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            for (a, &zo) in post.row_mut(r).iter_mut().zip(pre.row(r)) {
                *a = self.activation.apply(zo);
            }
        }
        (pre, post)
    }
}

/// Parameter-shaped buffer: one weight and one bias vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    pub(crate) fn check_shape(&self, net: &Mlp) -> Result<(), NetError> {
        if self.layers.len() != net.layers.len() {
            return Err(NetError::Dimension { context: "gradient layers", expected: net.layers.len(), got: self.layers.len() });
        }
        for (g, l) in self.layers.iter().zip(&net.layers) {
            if g.weights.len() != l.weights.len() {
                return Err(NetError::Dimension { context: "gradient weights", expected: l.weights.len(), got: g.weights.len() });
            }
            if g.biases.len() != l.biases.len() {
                return Err(NetError::Dimension { context: "gradient biases", expected: l.biases.len(), got: g.biases.len() });
            }
        }
        Ok(())
    }

    /// All values in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }
}

/// Per-layer inputs, pre-activations and outputs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.post.last().expect("cache of a non-empty network")
    }

    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Empty);
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(NetError::Dimension { context: "layer chain", expected: pair[0].outputs, got: pair[1].inputs });
            }
        }
        let net = Self { layers };
        net.check_finite()?;
        Ok(net)
    }

    /// Glorot-initialised network with widths `sizes[0] → … → sizes[n]`.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self, NetError> {
        if sizes.len() < 2 {
            return Err(NetError::Empty);
        }
        if activations.len() != sizes.len() - 1 {
            return Err(NetError::Dimension { context: "activation count", expected: sizes.len() - 1, got: activations.len() });
        }
        if sizes.contains(&0) {
            return Err(NetError::Dimension { context: "layer width", expected: 1, got: 0 });
        }
        let layers = sizes.windows(2).zip(activations).map(|(w, &act)| Layer::glorot(w[1], w[0], act, rng)).collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn check_finite(&self) -> Result<(), NetError> {
        for (li, l) in self.layers.iter().enumerate() {
            if let Some(index) = l.weights.iter().chain(&l.biases).position(|v| !v.is_finite()) {
                return Err(NetError::NonFinite { layer: li, index });
            }
        }
        Ok(())
    }

    /// Flat parameter view in the same order as [`Gradients::flatten`].
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.biases.len() {
                return &mut l.biases[k];
            }
            k -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// `self ← decay·self + (1 − decay)·other`, for parameter averaging.
    pub fn blend_toward(&mut self, other: &Mlp, decay: f64) -> Result<(), NetError> {
        Gradients::zeros_like(other).check_shape(self)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights).chain(a.biases.iter_mut().zip(&b.biases)) {
                *x = decay * *x + (1.0 - decay) * y;
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NetError> {
        let m = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let cache = self.forward_batch(&m)?;
        Ok((cache.output().row(0).to_vec(), cache))
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<ForwardCache, NetError> {
        if input.cols != self.input_dim() {
            return Err(NetError::Dimension { context: "network input", expected: self.input_dim(), got: input.cols });
        }
        let n = self.layers.len();
        let mut cache = ForwardCache { inputs: Vec::with_capacity(n), pre: Vec::with_capacity(n), post: Vec::with_capacity(n) };
        let mut x = input.clone();
        for l in &self.layers {
            let (pre, post) = l.forward_batch(&x);
            cache.inputs.push(x);
            cache.pre.push(pre);
            x = post.clone();
            cache.post.push(post);
        }
        Ok(cache)
    }

    /// Output only, without keeping a cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NetError> {
        if input.cols != self.input_dim() {
            return Err(NetError::Dimension { context: "network input", expected: self.input_dim(), got: input.cols });
        }
        let mut x = input.clone();
        for l in &self.layers {
            x = l.forward_batch(&x).1;
        }
        Ok(x)
    }

    pub fn backward(&self, cache: &ForwardCache, output_gradient: &[f64]) -> Result<(Gradients, Vec<f64>), NetError> {
        let g = Matrix::from_vec(1, output_gradient.len(), output_gradient.to_vec())?;
        let (grads, input_grad) = self.backward_batch(cache, &g)?;
        Ok((grads, input_grad.into_vec()))
    }

    /// Gradients summed over the batch, plus the per-sample input gradient.
    pub fn backward_batch(&self, cache: &ForwardCache, output_gradient: &Matrix) -> Result<(Gradients, Matrix), NetError> {
        if cache.pre.len() != self.layers.len() {
            return Err(NetError::Dimension { context: "cache layers", expected: self.layers.len(), got: cache.pre.len() });
        }
        for (l, z) in self.layers.iter().zip(&cache.pre) {
            if z.cols != l.outputs {
                return Err(NetError::Dimension { context: "cache width", expected: l.outputs, got: z.cols });
            }
        }
        let out = cache.output();
        if output_gradient.rows != out.rows || output_gradient.cols != out.cols {
            return Err(NetError::Dimension {
                context: "output gradient",
                expected: out.rows * out.cols,
                got: output_gradient.rows * output_gradient.cols,
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = output_gradient.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let (x, z, a) = (&cache.inputs[li], &cache.pre[li], &cache.post[li]);
            let lg = &mut grads.layers[li];
            let mut downstream = Matrix::zeros(x.rows, l.inputs);
            for r in 0..x.rows {
                let xr = x.row(r);
                let dr = downstream.row_mut(r);
                for o in 0..l.outputs {
                    let delta = upstream.row(r)[o] * l.activation.derivative(z.row(r)[o], a.row(r)[o]);
                    if delta == 0.0 {
                        continue;
                    }
                    lg.biases[o] += delta;
                    let w = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let gw = &mut lg.weights[o * l.inputs..(o + 1) * l.inputs];
                    for i in 0..l.inputs {
                        gw[i] += delta * xr[i];
                        dr[i] += delta * w[i];
                    }
                }
            }
            upstream = downstream;
        }
        Ok((grads, upstream))
    }
}

/// Mean binary cross-entropy and its gradient with respect to the predictions.
/// Predictions are clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
    const EPS: f64 = 1e-7;
    if predictions.len() != labels.len() {
        return Err(NetError::Dimension { context: "bce labels", expected: predictions.len(), got: labels.len() });
    }
    if predictions.is_empty() {
        return Err(NetError::Dimension { context: "bce batch", expected: 1, got: 0 });
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            (p - y) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok((loss / n, grad))
}

fn probe_weights(n: usize) -> Vec<f64> {
    (0..n).map(|k| if k % 2 == 0 { 1.0 + 0.5 * k as f64 } else { -(1.0 + 0.5 * k as f64) }).collect()
}

fn probe_loss(net: &Mlp, input: &[f64], c: &[f64]) -> Result<f64, NetError> {
    let (out, _) = net.forward(input)?;
    Ok(out.iter().zip(c).map(|(o, w)| o * w).sum())
}

/// Worst relative disagreement between [`Mlp::backward`] and central
/// differences with step `h`, over every parameter, for the scalar loss
/// `Σ c_k·y_k` with fixed alternating weights `c`.
pub fn gradcheck(net: &Mlp, input: &[f64], h: f64) -> Result<f64, NetError> {
    gradcheck_with(net, input, h, |n, cache, g| Ok(n.backward(cache, g)?.0))
}

/// [`gradcheck`] with the analytic gradient supplied by `backward`.
pub(crate) fn gradcheck_with<F>(net: &Mlp, input: &[f64], h: f64, backward: F) -> Result<f64, NetError>
where
    F: Fn(&Mlp, &ForwardCache, &[f64]) -> Result<Gradients, NetError>,
{
    if !(h > 0.0 && h <= 1e-3) {
        return Err(NetError::Step(h));
    }
    net.check_finite()?;
    if let Some(index) = input.iter().position(|v| !v.is_finite()) {
        return Err(NetError::NonFinite { layer: 0, index });
    }
    let c = probe_weights(net.output_dim());
    let (_, cache) = net.forward(input)?;
    let analytic = backward(net, &cache, &c)?.flatten();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + h;
        let up = probe_loss(&probe, input, &c)?;
        *probe.param_mut(k) = orig - h;
        let down = probe_loss(&probe, input, &c)?;
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if !rel.is_finite() {
            return Err(NetError::NonFinite { layer: 0, index: k });
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Worst relative error per case of the standard gradient-check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub cases: Vec<(String, f64)>,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.cases.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

/// Finite-difference step used by the suite.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// `n_random` random nets (depth 1 to 4, widths 1 to 16, mixed activations)
/// plus the generator shape 4→64→128→64→4 and the discriminator shape
/// 4→64→64→1, all drawn from `seed`.
pub fn gradcheck_suite(seed: u64, n_random: usize) -> Result<GradcheckReport, NetError> {
    gradcheck_suite_with(seed, n_random, |n, cache, g| Ok(n.backward(cache, g)?.0))
}

pub(crate) fn gradcheck_suite_with<F>(seed: u64, n_random: usize, backward: F) -> Result<GradcheckReport, NetError>
where
    F: Fn(&Mlp, &ForwardCache, &[f64]) -> Result<Gradients, NetError> + Copy,
{
    use rand::Rng;
    use Activation::*;

    let mut rng = crate::seed::stream(seed, "gradcheck", 0);
    let mut cases = Vec::with_capacity(n_random + 2);
    let mut check = |name: String, sizes: &[usize], acts: &[Activation], rng: &mut crate::seed::StreamRng| {
        let mut net = Mlp::glorot(sizes, acts, rng)?;
        // Nonzero biases keep ReLU units off their kink at exactly zero.
        for l in net.layers_mut() {
            l.biases_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        cases.push((name, gradcheck_with(&net, &x, GRADCHECK_STEP, backward)?));
        Ok::<(), NetError>(())
    };
    let pool = [Relu, Tanh, Sigmoid, Identity];
    for i in 0..n_random {
        let depth = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=16)).collect();
        let acts: Vec<Activation> = (0..depth).map(|_| pool[rng.random_range(0..4)]).collect();
        check(format!("random-{i}"), &sizes, &acts, &mut rng)?;
    }
    check("generator 4-64-128-64-4".into(), &[4, 64, 128, 64, 4], &[Relu, Relu, Relu, Tanh], &mut rng)?;
    check("discriminator 4-64-64-1".into(), &[4, 64, 64, 1], &[Relu, Relu, Sigmoid], &mut rng)?;
    Ok(GradcheckReport { cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn single(out: usize, inp: usize, w: Vec<f64>, b: Vec<f64>, act: Activation) -> Mlp {
        Mlp::new(vec![Layer::new(out, inp, w, b, act).unwrap()]).unwrap()
    }

    #[test]
    fn zero_identity_net_outputs_zero() {
        let net = single(3, 2, vec![0.0; 6], vec![0.0; 3], Activation::Identity);
        assert_eq!(net.forward(&[0.7, -1.2]).unwrap().0, vec![0.0; 3]);
    }

    #[test]
    fn tanh_identity_at_origin() {
        let net = single(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], Activation::Tanh);
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap().0, vec![0.0, 0.0]);
    }

    #[test]
    fn golden_two_three_one() {
        // Hand-evaluated reference for these exact parameters and input.
        let l1 = Layer::new(3, 2, vec![0.5, -0.25, -0.75, 0.4, 0.3, 0.9], vec![0.1, -0.2, 0.05], Activation::Relu).unwrap();
        let l2 = Layer::new(1, 3, vec![0.6, -0.8, 1.1], vec![0.02], Activation::Tanh).unwrap();
        let net = Mlp::new(vec![l1, l2]).unwrap();
        let out = net.forward(&[0.8, -0.6]).unwrap().0;
        assert!((out[0] - GOLDEN_2_3_1).abs() < 1e-14, "{}", out[0]);
    }

    const GOLDEN_2_3_1: f64 = 0.3884726802160611;

    #[test]
    fn forward_rejects_wrong_width() {
        let net = single(1, 2, vec![1.0, 1.0], vec![0.0], Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(NetError::Dimension { .. })));
    }

    #[test]
    fn construction_checks() {
        let a = Layer::new(3, 2, vec![0.0; 6], vec![0.0; 3], Activation::Relu).unwrap();
        let b = Layer::new(1, 2, vec![0.0; 2], vec![0.0], Activation::Relu).unwrap();
        assert!(Mlp::new(vec![a.clone(), b]).is_err());
        assert!(Mlp::new(vec![]).is_err());
        assert!(Layer::new(3, 2, vec![0.0; 5], vec![0.0; 3], Activation::Relu).is_err());
        let bad = Layer::new(1, 1, vec![f64::NAN], vec![0.0], Activation::Relu).unwrap();
        assert!(matches!(Mlp::new(vec![bad]), Err(NetError::NonFinite { .. })));
    }

    #[test]
    fn identity_weight_gradient_is_outer_product() {
        let net = single(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], vec![0.0; 2], Activation::Identity);
        let x = [1.0, -2.0, 0.5];
        let g = [0.3, -0.7];
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, input_grad) = net.backward(&cache, &g).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(grads.layers[0].weights[o * 3 + i], g[o] * x[i]);
            }
        }
        assert_eq!(grads.layers[0].biases, g.to_vec());
        assert!((input_grad[0] - (0.3 * 0.1 - 0.7 * 0.4)).abs() < 1e-15);
    }

    #[test]
    fn relu_blocks_negative_preactivation() {
        let net = single(2, 1, vec![1.0, -1.0], vec![0.0, 0.0], Activation::Relu);
        let (_, cache) = net.forward(&[2.0]).unwrap();
        let (grads, _) = net.backward(&cache, &[1.0, 1.0]).unwrap();
        assert_eq!(grads.layers[0].weights, vec![2.0, 0.0]);
        assert_eq!(grads.layers[0].biases, vec![1.0, 0.0]);
    }

    #[test]
    fn backward_shape_errors() {
        let net = single(2, 1, vec![1.0, -1.0], vec![0.0, 0.0], Activation::Relu);
        let (_, cache) = net.forward(&[2.0]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
        let other = single(3, 1, vec![1.0; 3], vec![0.0; 3], Activation::Relu);
        assert!(other.backward(&cache, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn batch_gradient_is_sum_of_singles() {
        let mut rng = seed::stream(3, "batch", 0);
        let net = Mlp::glorot(&[3, 5, 2], &[Activation::Tanh, Activation::Sigmoid], &mut rng).unwrap();
        let xs = vec![vec![0.1, -0.4, 0.9], vec![-1.0, 0.3, 0.2]];
        let gs = vec![vec![0.5, -1.0], vec![2.0, 0.25]];
        let cache = net.forward_batch(&Matrix::from_rows(&xs).unwrap()).unwrap();
        let (batch, _) = net.backward_batch(&cache, &Matrix::from_rows(&gs).unwrap()).unwrap();
        let mut sum = vec![0.0; net.param_count()];
        for (x, g) in xs.iter().zip(&gs) {
            let (_, c) = net.forward(x).unwrap();
            for (s, v) in sum.iter_mut().zip(net.backward(&c, g).unwrap().0.flatten()) {
                *s += v;
            }
        }
        for (a, b) in batch.flatten().iter().zip(&sum) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradcheck_linear_net_is_exact() {
        let mut rng = seed::stream(1, "lin", 0);
        let net = Mlp::glorot(&[4, 3], &[Activation::Identity], &mut rng).unwrap();
        assert!(gradcheck(&net, &[0.5, -0.1, 0.3, 0.9], 1e-5).unwrap() < 1e-9);
    }

    #[test]
    fn gradcheck_random_4_8_4() {
        let mut rng = seed::stream(1, "848", 0);
        let net = Mlp::glorot(&[4, 8, 4], &[Activation::Tanh, Activation::Sigmoid], &mut rng).unwrap();
        assert!(gradcheck(&net, &[0.2, -0.7, 1.1, 0.4], 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn gradcheck_generator_shape() {
        let mut rng = seed::stream(1, "gen-shape", 0);
        let acts = [Activation::Relu, Activation::Relu, Activation::Relu, Activation::Tanh];
        let net = Mlp::glorot(&[4, 64, 128, 64, 4], &acts, &mut rng).unwrap();
        assert!(gradcheck(&net, &[0.3, -1.2, 0.8, 0.05], 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn gradcheck_suite_passes_and_is_deterministic() {
        let report = gradcheck_suite(0, 50).unwrap();
        assert_eq!(report.cases.len(), 52);
        assert!(report.worst() < 1e-4, "{report:?}");
        assert_eq!(gradcheck_suite(0, 50).unwrap(), report);
    }

    #[test]
    fn gradcheck_suite_catches_wrong_backward() {
        let report = gradcheck_suite_with(0, 3, |n, c, g| {
            let mut grads = n.backward(c, g)?.0;
            grads.scale(1.01);
            Ok(grads)
        })
        .unwrap();
        assert!(report.worst() > 1e-3, "{report:?}");
    }

    #[test]
    fn gradcheck_rejects_non_finite_and_bad_step() {
        let mut net = single(1, 1, vec![1.0], vec![0.0], Activation::Identity);
        assert!(matches!(gradcheck(&net, &[1.0], 0.0), Err(NetError::Step(_))));
        assert!(matches!(gradcheck(&net, &[1.0], 1e-2), Err(NetError::Step(_))));
        net.layers_mut()[0].weights_mut()[0] = f64::INFINITY;
        assert!(matches!(gradcheck(&net, &[1.0], 1e-5), Err(NetError::NonFinite { .. })));
    }

    #[test]
    fn bce_examples() {
        let (l, _) = bce_loss(&[0.5, 0.5, 0.5], &[1.0, 0.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l - 0.693).abs() < 5e-4);
        let (l, _) = bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(l <= 1.7e-7);
        let (l, g) = bce_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
        assert!((l + 0.9f64.ln()).abs() < 1e-15);
        assert!((l - 0.105).abs() < 1e-3);
        assert!((g[0] + 1.0 / (2.0 * 0.9)).abs() < 1e-12);
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn bce_through_sigmoid_is_p_minus_y() {
        for (z, y) in [(0.3, 1.0), (-2.0, 0.0), (4.0, 0.0)] {
            let net = single(1, 1, vec![1.0], vec![0.0], Activation::Sigmoid);
            let (p, cache) = net.forward(&[z]).unwrap();
            let (_, g) = bce_loss(&p, &[y]).unwrap();
            let (_, dz) = net.backward(&cache, &g).unwrap();
            assert!((dz[0] - (p[0] - y)).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_output_stays_inside_open_interval() {
        let net = single(1, 1, vec![1.0], vec![0.0], Activation::Tanh);
        for x in [-5.0, -1.0, 0.0, 1.0, 5.0] {
            let y = net.forward(&[x]).unwrap().0[0];
            assert!(y > -1.0 && y < 1.0);
        }
    }

    #[test]
    fn blend_toward_interpolates() {
        let mut a = single(1, 1, vec![1.0], vec![0.0], Activation::Identity);
        let b = single(1, 1, vec![3.0], vec![2.0], Activation::Identity);
        a.blend_toward(&b, 0.75).unwrap();
        assert_eq!(a.params(), vec![1.5, 0.5]);
        let c = single(2, 1, vec![1.0, 1.0], vec![0.0, 0.0], Activation::Identity);
        assert!(a.blend_toward(&c, 0.5).is_err());
    }
}
