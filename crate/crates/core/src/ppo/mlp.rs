//! Fixed-topology tanh MLP with hand-written backpropagation.
//!
//! Samples are rows. Layer weights are stored `out x in`, so a layer computes
//! `Z = X W^T + b`. Hidden layers apply tanh; the last layer is linear.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Scaled orthogonal weights (gain sqrt 2 on hidden layers), zero biases.
    #[default]
    Orthogonal,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` on weights and biases.
    FanInUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((output, input)),
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations saved by a forward pass: `acts[0]` is the input, `acts[i]` the
/// output of layer `i - 1`.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace always holds the input")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.acts.pop().expect("trace always holds the input")
    }
}

fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (n, k) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(n, k, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // sign fix makes the distribution uniform over orthogonal matrices
    let q = DMatrix::from_fn(n, k, |i, j| if r[(j, j)] < 0.0 { -q[(i, j)] } else { q[(i, j)] });
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        gain * if rows >= cols { q[(i, j)] } else { q[(j, i)] }
    })
}

/// `exp(y)` for `y` in `[-40, 0]`: range reduction by powers of two and a
/// degree-13 Taylor polynomial on `|r| <= ln2 / 2`. Branch-free so the loop in
/// [`tanh_inplace`] vectorizes.
#[inline(always)]
fn exp_neg(y: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    let kf = y * LOG2E + SHIFT;
    let k_bits = kf.to_bits();
    let k = kf - SHIFT;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    // low bits of k_bits hold k in two's complement; build 2^k directly
    let scale = f64::from_bits((k_bits.wrapping_add(1023) & 0x7ff) << 52);
    p * scale
}

/// Elementwise tanh, accurate to a few ulps in absolute terms. The wide-vector
/// path performs the same IEEE operations, so results are identical.
pub fn tanh_inplace(xs: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at runtime.
        unsafe { tanh_avx2(xs) };
        return;
    }
    tanh_body(xs);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_avx2(xs: &mut [f64]) {
    tanh_body(xs);
}

#[inline(always)]
fn tanh_body(xs: &mut [f64]) {
    for x in xs.iter_mut() {
        let a = x.abs().min(20.0);
        let e = exp_neg(-2.0 * a);
        let t = (1.0 - e) / (1.0 + e);
        *x = t.copysign(*x);
    }
}

impl Mlp {
    /// Builds an MLP from explicit layers; panics if consecutive dimensions disagree.
    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty());
        for pair in layers.windows(2) {
            assert_eq!(pair[0].output_dim(), pair[1].input_dim(), "layer dimensions do not chain");
        }
        for l in &layers {
            assert_eq!(l.b.len(), l.output_dim());
        }
        Self { layers }
    }

    /// All-zero network with the given layer widths, input first.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::from_layers(dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect())
    }

    /// Randomly initialized network. `out_gain` scales the last layer under
    /// orthogonal init.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], init: Init, out_gain: f64, rng: &mut R) -> Self {
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| match init {
                Init::Orthogonal => {
                    let gain = if i + 1 == n { out_gain } else { 2f64.sqrt() };
                    Dense {
                        w: orthogonal(d[1], d[0], gain, rng),
                        b: Array1::zeros(d[1]),
                    }
                }
                Init::FanInUniform => {
                    let bound = 1.0 / (d[0] as f64).sqrt();
                    let u = Uniform::new(-bound, bound);
                    Dense {
                        w: Array2::from_shape_fn((d[1], d[0]), |_| rng.sample(u)),
                        b: Array1::from_shape_fn(d[1], |_| rng.sample(u)),
                    }
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.trace(x).into_output()
    }

    pub fn trace(&self, x: ArrayView2<f64>) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w.t());
            z += &l.b;
            if i < last {
                tanh_inplace(z.as_slice_mut().expect("fresh product is contiguous"));
            }
            acts.push(z);
        }
        Trace { acts }
    }

    /// Parameter gradients of `sum(dout * output)`, returned as a network of
    /// the same shape.
    pub fn backward(&self, trace: &Trace, dout: ArrayView2<f64>) -> Mlp {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut dz = dout.to_owned();
        for i in (0..self.layers.len()).rev() {
            let input = &trace.acts[i];
            let gw = dz.t().dot(input);
            let gb = dz.sum_axis(Axis(0));
            grads.push(Dense { w: gw, b: gb });
            if i > 0 {
                let mut da = dz.dot(&self.layers[i].w);
                // input of layer i is tanh output of layer i-1
                ndarray::Zip::from(&mut da)
                    .and(input)
                    .for_each(|d, &h| *d *= 1.0 - h * h);
                dz = da;
            }
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in storage order: per layer, weights row-major then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    /// The `k`-th parameter in storage order.
    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            let (nw, nb) = (l.w.len(), l.b.len());
            if k < nw {
                let c = l.w.ncols();
                return &mut l.w[[k / c, k % c]];
            }
            k -= nw;
            if k < nb {
                return &mut l.b[k];
            }
            k -= nb;
        }
        panic!("parameter index out of range");
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Mlp, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.scaled_add(s, &b.w);
            a.b.scaled_add(s, &b.b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.params().map(|p| p * p).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}
