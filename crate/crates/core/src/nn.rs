//! A small sigmoid feedforward network used as both twins of a Siamese pair,
//! trained with Adam on a pairwise surrogate of the same-group distance loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HIDDEN: usize = 8;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters of a `d -> 8 -> 8 -> 1` sigmoid network, stored flat as
/// `W1 (8 x d), b1, W2 (8 x 8), b2, w3 (8), b3`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseMlp {
    input_dim: usize,
    params: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Offsets {
    fn new(d: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + HIDDEN * d;
        let w2 = b1 + HIDDEN;
        let b2 = w2 + HIDDEN * HIDDEN;
        let w3 = b2 + HIDDEN;
        let b3 = w3 + HIDDEN;
        Self { w1, b1, w2, b2, w3, b3, len: b3 + 1 }
    }
}

/// Hidden activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Activations {
    h1: [f64; HIDDEN],
    h2: [f64; HIDDEN],
    pub output: f64,
}

impl SiameseMlp {
    pub fn zeros(input_dim: usize) -> Self {
        Self { input_dim, params: vec![0.0; Offsets::new(input_dim).len] }
    }

    /// Uniform Glorot initialization of weights, zero biases.
    pub fn init(input_dim: usize, seed: u64) -> Self {
        let mut net = Self::zeros(input_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = Offsets::new(input_dim);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[range] {
                *p = rng.random_range(-limit..limit);
            }
        };
        fill(o.w1..o.b1, input_dim, HIDDEN);
        fill(o.w2..o.b2, HIDDEN, HIDDEN);
        fill(o.w3..o.b3, HIDDEN, 1);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Activations {
        debug_assert_eq!(x.len(), self.input_dim);
        let o = Offsets::new(self.input_dim);
        let p = &self.params;
        let d = self.input_dim;
        let mut h1 = [0.0; HIDDEN];
        for (j, h) in h1.iter_mut().enumerate() {
            let row = &p[o.w1 + j * d..o.w1 + (j + 1) * d];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[o.b1 + j];
            *h = sigmoid(z);
        }
        let mut h2 = [0.0; HIDDEN];
        for (j, h) in h2.iter_mut().enumerate() {
            let row = &p[o.w2 + j * HIDDEN..o.w2 + (j + 1) * HIDDEN];
            let z: f64 = row.iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>() + p[o.b2 + j];
            *h = sigmoid(z);
        }
        let z: f64 = p[o.w3..o.b3].iter().zip(&h2).map(|(w, v)| w * v).sum::<f64>() + p[o.b3];
        Activations { h1, h2, output: sigmoid(z) }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_cached(x).output
    }

    /// Accumulates `d_output * d(output)/d(params)` into `grads`.
    pub fn accumulate_grad(&self, x: &[f64], act: &Activations, d_output: f64, grads: &mut [f64]) {
        if d_output == 0.0 {
            return;
        }
        let o = Offsets::new(self.input_dim);
        let p = &self.params;
        let d = self.input_dim;
        let dz3 = d_output * act.output * (1.0 - act.output);
        grads[o.b3] += dz3;
        let mut dz2 = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            grads[o.w3 + j] += dz3 * act.h2[j];
            dz2[j] = dz3 * p[o.w3 + j] * act.h2[j] * (1.0 - act.h2[j]);
        }
        let mut dh1 = [0.0; HIDDEN];
        for (j, &g) in dz2.iter().enumerate() {
            grads[o.b2 + j] += g;
            for k in 0..HIDDEN {
                grads[o.w2 + j * HIDDEN + k] += g * act.h1[k];
                dh1[k] += g * p[o.w2 + j * HIDDEN + k];
            }
        }
        for k in 0..HIDDEN {
            let dz1 = dh1[k] * act.h1[k] * (1.0 - act.h1[k]);
            grads[o.b1 + k] += dz1;
            let row = &mut grads[o.w1 + k * d..o.w1 + (k + 1) * d];
            for (g, v) in row.iter_mut().zip(x) {
                *g += dz1 * v;
            }
        }
    }
}

/// Group side chosen by an output: `true` for the second group.
#[inline]
pub fn second_group(output: f64) -> bool {
    output >= 0.5
}

#[inline]
fn same_side(ox: f64, oy: f64) -> bool {
    second_group(ox) == second_group(oy)
}

/// `(0.5 - |o_x - o_y|) * dissim` when both outputs fall on the same side of
/// 0.5, zero otherwise.
pub fn surrogate_loss(ox: f64, oy: f64, dissim: f64) -> f64 {
    if same_side(ox, oy) {
        (0.5 - (ox - oy).abs()) * dissim
    } else {
        0.0
    }
}

/// Derivatives of [`surrogate_loss`] with respect to both outputs. The side
/// indicator carries no gradient and the kink at `o_x = o_y` takes
/// subgradient 0.
pub fn surrogate_loss_grad(ox: f64, oy: f64, dissim: f64) -> (f64, f64) {
    if !same_side(ox, oy) || ox == oy {
        return (0.0, 0.0);
    }
    let s = (ox - oy).signum();
    (-s * dissim, s * dissim)
}

/// A training pair: two normalized representations and `1 - Sim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub rep_x: Vec<f64>,
    pub rep_y: Vec<f64>,
    pub dissim: f64,
}

/// Loss of one pair and its gradient summed over both weight-shared twins.
pub fn backward(net: &SiameseMlp, pair: &PairSample) -> (f64, Vec<f64>) {
    let mut grads = vec![0.0; net.num_params()];
    let loss = backward_into(net, &pair.rep_x, &pair.rep_y, pair.dissim, &mut grads, 1.0);
    (loss, grads)
}

/// Adds `scale * d loss / d params` for one pair into `grads`; returns the loss.
pub fn backward_into(
    net: &SiameseMlp,
    x: &[f64],
    y: &[f64],
    dissim: f64,
    grads: &mut [f64],
    scale: f64,
) -> f64 {
    let ax = net.forward_cached(x);
    let ay = net.forward_cached(y);
    let loss = surrogate_loss(ax.output, ay.output, dissim);
    let (gx, gy) = surrogate_loss_grad(ax.output, ay.output, dissim);
    net.accumulate_grad(x, &ax, scale * gx, grads);
    net.accumulate_grad(y, &ay, scale * gy, grads);
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self::with_hyper(num_params, 1e-3, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(num_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut SiameseMlp, state: &mut AdamState, grads: &[f64]) {
    assert_eq!(grads.len(), net.num_params());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (i, p) in net.params.iter_mut().enumerate() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        let net = SiameseMlp::zeros(6);
        assert_eq!(net.forward(&[0.3, 0.1, 0.0, 1.0, 0.5, 0.2]), 0.5);
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let net = SiameseMlp::init(4, 1);
        for x in [[0.0; 4], [1.0; 4], [0.5, 0.0, 1.0, 0.25]] {
            let o = net.forward(&x);
            assert!(o > 0.0 && o < 1.0);
            assert_eq!(o, net.forward(&x));
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(surrogate_loss(0.6, 0.4, 0.9), 0.0);
        assert_eq!(surrogate_loss(0.5, 0.5, 0.7), 0.35);
        assert!((surrogate_loss(0.2, 0.3, 0.8) - 0.32).abs() < 1e-15);
        assert_eq!(surrogate_loss_grad(0.6, 0.4, 0.9), (0.0, 0.0));
        assert_eq!(surrogate_loss_grad(0.3, 0.3, 0.9), (0.0, 0.0));
        assert_eq!(surrogate_loss_grad(0.2, 0.3, 0.8), (0.8, -0.8));
    }

    #[test]
    fn split_pairs_have_zero_gradient() {
        let mut net = SiameseMlp::zeros(2);
        // A single path from the first input puts x above and y below 0.5.
        let o = Offsets::new(2);
        net.params[o.w1] = 8.0;
        net.params[o.w2] = 20.0;
        net.params[o.b2] = -10.0;
        net.params[o.w3] = 4.0;
        net.params[o.b3] = -3.0;
        let pair = PairSample { rep_x: vec![1.0, 0.0], rep_y: vec![0.0, 0.0], dissim: 1.0 };
        let ox = net.forward(&pair.rep_x);
        let oy = net.forward(&pair.rep_y);
        assert!(second_group(ox) && !second_group(oy), "{ox} {oy}");
        let (loss, g) = backward(&net, &pair);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut net = SiameseMlp::init(3, 5);
        let before = net.clone();
        let mut st = AdamState::new(net.num_params());
        adam_step(&mut net, &mut st, &vec![0.0; before.num_params()]);
        assert_eq!(net, before);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn adam_constant_gradient_moves_by_lr() {
        let mut net = SiameseMlp::zeros(1);
        let n = net.num_params();
        let mut st = AdamState::new(n);
        let grads: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.3 } else { -2.0 }).collect();
        let mut prev = net.params.clone();
        for _ in 0..5000 {
            adam_step(&mut net, &mut st, &grads);
            let delta: Vec<f64> = net.params.iter().zip(&prev).map(|(a, b)| a - b).collect();
            prev = net.params.clone();
            if st.step() == 5000 {
                for (d, g) in delta.iter().zip(&grads) {
                    assert!((d + st.lr * g.signum()).abs() < 1e-6 * st.lr, "{d}");
                }
            }
        }
        assert_eq!(st.step(), 5000);
    }
}
