//! Minimal sequential network: conv / relu / flatten / linear layers with
//! explicit forward caches and backward passes, all f64.
//!
//! Networks here are small by design (the desk-scale stand-ins for the
//! pretrained backbones), so the layer zoo stays tiny and everything is
//! plain loops over flat slices.

pub mod optim;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Shape3;
use crate::util::{derive_seed, Fnv1a};

/// Fully connected layer; weights are `[out][in]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Linear {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = self.b.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (xi, wi) in x.iter().zip(row) {
                acc += xi * wi;
            }
            *yo += acc;
        }
        y
    }

    /// Backpropagates `dy`; accumulates parameter gradients into `grads`
    /// when given and returns the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: Option<&mut LinearGrads>) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        if let Some(g) = grads {
            for (o, &d) in dy.iter().enumerate() {
                g.gb[o] += d;
                let grow = &mut g.gw[o * self.in_dim..(o + 1) * self.in_dim];
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    grow[i] += d * x[i];
                    dx[i] += d * wrow[i];
                }
            }
        } else {
            for (o, &d) in dy.iter().enumerate() {
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    dx[i] += d * wrow[i];
                }
            }
        }
        dx
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub gw: Vec<f64>,
    pub gb: Vec<f64>,
}

impl LinearGrads {
    pub fn zeros_like(l: &Linear) -> Self {
        LinearGrads {
            gw: vec![0.0; l.w.len()],
            gb: vec![0.0; l.b.len()],
        }
    }

    pub fn zero(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}

/// 2-D convolution; weights are `[out_c][in_c][k][k]`, zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = in_c * k * k;
        let fan_out = out_c * k * k;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..out_c * in_c * k * k)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Conv2d {
            w,
            b: vec![0.0; out_c],
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, in_h: usize, in_w: usize) -> (usize, usize) {
        (
            (in_h + 2 * self.pad - self.k) / self.stride + 1,
            (in_w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &[f64], in_h: usize, in_w: usize) -> Vec<f64> {
        let (oh, ow) = self.out_hw(in_h, in_w);
        let mut y = vec![0.0; self.out_c * oh * ow];
        let kk = self.k * self.k;
        for oc in 0..self.out_c {
            let w_oc = oc * self.in_c * kk;
            for oy in 0..oh {
                let iy0 = (oy * self.stride) as isize - self.pad as isize;
                for ox in 0..ow {
                    let ix0 = (ox * self.stride) as isize - self.pad as isize;
                    let mut acc = self.b[oc];
                    for ic in 0..self.in_c {
                        let xc = ic * in_h * in_w;
                        let wc = w_oc + ic * kk;
                        for ky in 0..self.k {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            let xrow = xc + iy as usize * in_w;
                            let wrow = wc + ky * self.k;
                            for kx in 0..self.k {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= in_w as isize {
                                    continue;
                                }
                                acc += x[xrow + ix as usize] * self.w[wrow + kx];
                            }
                        }
                    }
                    y[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        in_h: usize,
        in_w: usize,
        dy: &[f64],
        mut grads: Option<&mut ConvGrads>,
    ) -> Vec<f64> {
        let (oh, ow) = self.out_hw(in_h, in_w);
        let mut dx = vec![0.0; self.in_c * in_h * in_w];
        let kk = self.k * self.k;
        for oc in 0..self.out_c {
            let w_oc = oc * self.in_c * kk;
            for oy in 0..oh {
                let iy0 = (oy * self.stride) as isize - self.pad as isize;
                for ox in 0..ow {
                    let ix0 = (ox * self.stride) as isize - self.pad as isize;
                    let d = dy[(oc * oh + oy) * ow + ox];
                    if let Some(g) = grads.as_deref_mut() {
                        g.gb[oc] += d;
                    }
                    for ic in 0..self.in_c {
                        let xc = ic * in_h * in_w;
                        let wc = w_oc + ic * kk;
                        for ky in 0..self.k {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            let xrow = xc + iy as usize * in_w;
                            let wrow = wc + ky * self.k;
                            for kx in 0..self.k {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= in_w as isize {
                                    continue;
                                }
                                let xi = xrow + ix as usize;
                                dx[xi] += d * self.w[wrow + kx];
                                if let Some(g) = grads.as_deref_mut() {
                                    g.gw[wrow + kx] += d * x[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub gw: Vec<f64>,
    pub gb: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros_like(c: &Conv2d) -> Self {
        ConvGrads {
            gw: vec![0.0; c.w.len()],
            gb: vec![0.0; c.b.len()],
        }
    }

    pub fn zero(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    Flatten,
    Linear(Linear),
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Conv(ConvGrads),
    None,
    Linear(LinearGrads),
}

/// Architecture description, serializable for checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Flatten,
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetSpec {
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
}

/// A fixed sequential network over CHW inputs.
#[derive(Debug, Clone)]
pub struct Net {
    layers: Vec<Layer>,
    input_shape: Shape3,
    /// Input shape of each layer, fixed at construction.
    layer_shapes: Vec<Shape3>,
    out_dim: usize,
}

/// Per-layer inputs captured during forward, consumed by backward.
pub struct NetCache {
    inputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &Net) -> Self {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => LayerGrads::Conv(ConvGrads::zeros_like(c)),
                    Layer::Linear(l) => LayerGrads::Linear(LinearGrads::zeros_like(l)),
                    _ => LayerGrads::None,
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.layers {
            match g {
                LayerGrads::Conv(c) => c.zero(),
                LayerGrads::Linear(l) => l.zero(),
                LayerGrads::None => {}
            }
        }
    }

    /// Gradient slices in the same order as [`Net::param_vecs`].
    pub fn grad_vecs(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrads::Conv(c) => {
                    out.push(&c.gw);
                    out.push(&c.gb);
                }
                LayerGrads::Linear(l) => {
                    out.push(&l.gw);
                    out.push(&l.gb);
                }
                LayerGrads::None => {}
            }
        }
        out
    }
}

impl Net {
    pub fn new(input_shape: Shape3, layers: Vec<Layer>) -> Self {
        let mut shape = input_shape;
        let mut layer_shapes = Vec::with_capacity(layers.len());
        for layer in &layers {
            layer_shapes.push(shape);
            shape = match layer {
                Layer::Conv(c) => {
                    assert_eq!(shape.c, c.in_c, "conv input channels");
                    let (oh, ow) = c.out_hw(shape.h, shape.w);
                    Shape3::new(c.out_c, oh, ow)
                }
                Layer::Relu => shape,
                Layer::Flatten => Shape3::new(shape.len(), 1, 1),
                Layer::Linear(l) => {
                    assert_eq!(shape.len(), l.in_dim, "linear input dim");
                    Shape3::new(l.out_dim, 1, 1)
                }
            };
        }
        let out_dim = shape.len();
        Net {
            layers,
            input_shape,
            layer_shapes,
            out_dim,
        }
    }

    /// Three stride-2 convs and a projection head; halves spatial dims per
    /// stage. Channel widths stay narrow so desk-scale training is cheap.
    pub fn small_cnn(input_shape: Shape3, feat_dim: usize, seed: u64) -> Self {
        let c1 = Conv2d::new(input_shape.c, 6, 3, 2, 1, derive_seed(seed, "conv", 0));
        let c2 = Conv2d::new(6, 12, 3, 2, 1, derive_seed(seed, "conv", 1));
        let c3 = Conv2d::new(12, 24, 3, 2, 1, derive_seed(seed, "conv", 2));
        let (h1, w1) = c1.out_hw(input_shape.h, input_shape.w);
        let (h2, w2) = c2.out_hw(h1, w1);
        let (h3, w3) = c3.out_hw(h2, w2);
        let flat = 24 * h3 * w3;
        let fc = Linear::new(flat, feat_dim, derive_seed(seed, "fc", 0));
        Net::new(
            input_shape,
            vec![
                Layer::Conv(c1),
                Layer::Relu,
                Layer::Conv(c2),
                Layer::Relu,
                Layer::Conv(c3),
                Layer::Relu,
                Layer::Flatten,
                Layer::Linear(fc),
            ],
        )
    }

    /// Flatten + two linear layers; the alternate backbone axis and the
    /// toy embedder for gradient checks.
    pub fn tiny_mlp(input_shape: Shape3, hidden: usize, feat_dim: usize, seed: u64) -> Self {
        let l1 = Linear::new(input_shape.len(), hidden, derive_seed(seed, "fc", 0));
        let l2 = Linear::new(hidden, feat_dim, derive_seed(seed, "fc", 1));
        Net::new(
            input_shape,
            vec![
                Layer::Flatten,
                Layer::Linear(l1),
                Layer::Relu,
                Layer::Linear(l2),
            ],
        )
    }

    pub fn input_shape(&self) -> Shape3 {
        self.input_shape
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, NetCache) {
        debug_assert_eq!(x.len(), self.input_shape.len());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (layer, shape) in self.layers.iter().zip(&self.layer_shapes) {
            let next = match layer {
                Layer::Conv(c) => c.forward(&cur, shape.h, shape.w),
                Layer::Relu => cur.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                Layer::Flatten => cur.clone(),
                Layer::Linear(l) => l.forward(&cur),
            };
            inputs.push(cur);
            cur = next;
        }
        (cur, NetCache { inputs })
    }

    /// Forward without keeping the cache.
    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Backward through the whole net. Accumulates parameter gradients into
    /// `grads` when provided and returns the gradient w.r.t. the input.
    pub fn backward(&self, cache: &NetCache, dout: &[f64], mut grads: Option<&mut NetGrads>) -> Vec<f64> {
        let mut d = dout.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let shape = self.layer_shapes[i];
            d = match layer {
                Layer::Conv(c) => {
                    let g = grads.as_deref_mut().map(|g| match &mut g.layers[i] {
                        LayerGrads::Conv(cg) => cg,
                        _ => unreachable!("grads layout mismatch"),
                    });
                    c.backward(x, shape.h, shape.w, &d, g)
                }
                Layer::Relu => x
                    .iter()
                    .zip(&d)
                    .map(|(&xi, &di)| if xi > 0.0 { di } else { 0.0 })
                    .collect(),
                Layer::Flatten => d,
                Layer::Linear(l) => {
                    let g = grads.as_deref_mut().map(|g| match &mut g.layers[i] {
                        LayerGrads::Linear(lg) => lg,
                        _ => unreachable!("grads layout mismatch"),
                    });
                    l.backward(x, &d, g)
                }
            };
        }
        d
    }

    /// Parameter slices in a stable order (conv/linear weights then biases,
    /// layer by layer).
    pub fn param_vecs(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                Layer::Linear(l) => {
                    out.push(&l.w);
                    out.push(&l.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_vecs_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
                Layer::Linear(l) => {
                    out.push(&mut l.w);
                    out.push(&mut l.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_vecs().iter().map(|p| p.len()).sum()
    }

    /// Bitwise digest of all parameters; used by frozen-network audits.
    pub fn param_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for p in self.param_vecs() {
            h.write_f64_slice(p);
        }
        h.finish()
    }

    pub fn spec(&self) -> NetSpec {
        NetSpec {
            input_shape: self.input_shape,
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => LayerSpec::Conv {
                        in_c: c.in_c,
                        out_c: c.out_c,
                        k: c.k,
                        stride: c.stride,
                        pad: c.pad,
                    },
                    Layer::Relu => LayerSpec::Relu,
                    Layer::Flatten => LayerSpec::Flatten,
                    Layer::Linear(l) => LayerSpec::Linear {
                        in_dim: l.in_dim,
                        out_dim: l.out_dim,
                    },
                })
                .collect(),
        }
    }

    /// Rebuilds a net (zero-initialized parameters) from a spec; parameter
    /// values come from the checkpoint blob.
    pub fn from_spec(spec: &NetSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv {
                    in_c,
                    out_c,
                    k,
                    stride,
                    pad,
                } => Layer::Conv(Conv2d {
                    w: vec![0.0; out_c * in_c * k * k],
                    b: vec![0.0; *out_c],
                    in_c: *in_c,
                    out_c: *out_c,
                    k: *k,
                    stride: *stride,
                    pad: *pad,
                }),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Linear { in_dim, out_dim } => Layer::Linear(Linear {
                    w: vec![0.0; in_dim * out_dim],
                    b: vec![0.0; *out_dim],
                    in_dim: *in_dim,
                    out_dim: *out_dim,
                }),
            })
            .collect();
        Net::new(spec.input_shape, layers)
    }
}
