//! Feedforward Q-function approximator with hand-written backprop and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One dense layer, `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Flat, shape-tagged layer parameters for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backprop.
pub struct ForwardCache {
    /// Input to each layer (post-ReLU for hidden layers).
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// ReLU MLP with He-uniform init. The last layer is scaled down so initial
    /// Q-values start near zero.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let limit = (6.0 / fan_in as f64).sqrt() * if i + 1 == n { 0.1 } else { 1.0 };
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                w: Array2::zeros((w[0], w[1])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i + 1 < n {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let next = h.dot(&l.w) + &l.b;
            inputs.push(h);
            h = next;
            if i + 1 < n {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        ForwardCache { inputs, output: h }
    }

    /// Parameter gradients given `dLoss/dOutput`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>) -> Vec<Dense> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let gw = x.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            if i > 0 {
                let mut gx = g.dot(&l.w.t());
                // x is the ReLU output of the previous layer
                ndarray::Zip::from(&mut gx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                g = gx;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        grads
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = it.next().expect("flat params too short"));
            l.b.iter_mut().for_each(|x| *x = it.next().expect("flat params too short"));
        }
    }

    pub fn to_params(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .map(|l| LayerParams {
                shape: [l.w.nrows(), l.w.ncols()],
                weights: l.w.iter().copied().collect(),
                bias: l.b.to_vec(),
            })
            .collect()
    }

    pub fn from_params(params: &[LayerParams]) -> Option<Self> {
        let mut layers = Vec::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            if i > 0 && params[i - 1].shape[1] != p.shape[0] {
                return None;
            }
            let w = Array2::from_shape_vec((p.shape[0], p.shape[1]), p.weights.clone()).ok()?;
            if p.bias.len() != p.shape[1] {
                return None;
            }
            layers.push(Dense {
                w,
                b: Array1::from(p.bias.clone()),
            });
        }
        (!layers.is_empty()).then_some(Self { layers })
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Adam with externally scheduled step size.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        let zeros = |net: &Mlp| {
            net.layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(net),
            v: zeros(net),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &[Dense], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((layer, g), (m, v)) in net.layers.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Scales every gradient so the global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [Dense], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.w.iter().chain(g.b.iter()).map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.w.mapv_inplace(|x| x * s);
            g.b.mapv_inplace(|x| x * s);
        }
    }
    norm
}

/// Mean squared TD error of the taken actions against fixed targets, and its
/// gradient with respect to the network output.
pub fn td_loss_grad(output: &Array2<f64>, actions: &[usize], targets: &[f64]) -> (f64, Array2<f64>) {
    let n = actions.len() as f64;
    let mut grad = Array2::zeros(output.raw_dim());
    let mut loss = 0.0;
    for (row, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        let diff = output[[row, a]] - y;
        loss += diff * diff / n;
        grad[[row, a]] = 2.0 * diff / n;
    }
    (loss, grad)
}
