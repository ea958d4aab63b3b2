use super::{Gradients, Mlp, NetError};

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Gradients,
    second: Gradients,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl OptimizerState {
    /// Adam with decay rates 0.9 / 0.999 and `eps = 1e-8`.
    pub fn adam(net: &Mlp, lr: f64) -> Result<Self, NetError> {
        Self::new(net, lr, 0.9, 0.999, 1e-8)
    }

    pub fn new(net: &Mlp, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self, NetError> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(NetError::Hyperparameter { name: "lr", value: lr });
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NetError::Hyperparameter { name, value: b });
            }
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(NetError::Hyperparameter { name: "eps", value: eps });
        }
        Ok(Self {
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }
}

/// One bias-corrected Adam update of `net` along `-grads`.
pub fn optimizer_step(net: &mut Mlp, grads: &Gradients, state: &mut OptimizerState) -> Result<(), NetError> {
    grads.check_shape(net)?;
    state.first.check_shape(net)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first.layers)
        .zip(&mut state.second.layers)
    {
        let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
        let gs = g.weights.iter().chain(&g.biases);
        let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
        let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
        for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinynet::{Activation, Layer};

    fn scalar(w: f64) -> Mlp {
        Mlp::new(vec![Layer::new(1, 1, vec![w], vec![0.0], Activation::Identity).unwrap()]).unwrap()
    }

    fn grad(w: f64, b: f64) -> Gradients {
        Gradients { layers: vec![crate::tinynet::LayerGradient { weights: vec![w], biases: vec![b] }] }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar(0.7);
        let mut st = OptimizerState::adam(&net, 0.1).unwrap();
        for _ in 0..5 {
            optimizer_step(&mut net, &grad(0.0, 0.0), &mut st).unwrap();
        }
        assert_eq!(net.params(), vec![0.7, 0.0]);
        assert_eq!(st.step(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut net = scalar(1.0);
        let mut st = OptimizerState::adam(&net, 0.01).unwrap();
        optimizer_step(&mut net, &grad(3.0, -0.5), &mut st).unwrap();
        let p = net.params();
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn quadratic_converges_like_scalar_recurrence() {
        let mut net = scalar(1.0);
        let mut st = OptimizerState::adam(&net, 0.1).unwrap();
        for _ in 0..100 {
            let w = net.params()[0];
            optimizer_step(&mut net, &grad(2.0 * w, 0.0), &mut st).unwrap();
        }
        // Independent evaluation of the same recurrence.
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            w -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        let got = net.params()[0];
        assert!(got.abs() < 0.05);
        assert!((got - w).abs() < 1e-15);
        assert!((got - 0.002936675681102579).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut net = scalar(1.0);
        let mut st = OptimizerState::adam(&net, 0.1).unwrap();
        let bad = Gradients { layers: vec![] };
        assert!(optimizer_step(&mut net, &bad, &mut st).is_err());
        assert!(OptimizerState::new(&net, 0.1, 1.0, 0.999, 1e-8).is_err());
        assert!(OptimizerState::new(&net, -0.1, 0.9, 0.999, 1e-8).is_err());
    }
}
