//! Sequential models: layer definitions, forward/backward execution,
//! batch-norm folding, and a small SGD trainer used to produce the
//! full-precision baselines that quantization starts from.
//!
//! Batch norm runs in inference mode (running statistics are fixed
//! buffers); γ and β still receive gradients so the trainer can fit them.

use crate::error::{Error, Result};
use crate::io::DatasetHandle;
use crate::quant::{quantize_nearest, QuantSpec};
use crate::tensor::{
    col2im_add, conv_out_extent, im2col_into, matmul, matmul_nt, matmul_nt_into, matmul_tn, Rng,
    Tensor,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Linear {
        inp: usize,
        out: usize,
        bias: bool,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm {
        ch: usize,
        eps: f32,
    },
    Relu,
    AvgPool {
        k: usize,
    },
    Flatten,
}

impl LayerKind {
    pub fn has_weight(&self) -> bool {
        matches!(self, LayerKind::Linear { .. } | LayerKind::Conv2d { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

/// Ordered sequential network plus its parameter store.
///
/// Parameters live in a flat map keyed `{layer}.w`, `{layer}.b`,
/// `{layer}.gamma`, `{layer}.beta`, `{layer}.mean`, `{layer}.var`.
/// `act_quant` holds per-layer activation quantizers applied to that
/// layer's output during forward; `weight_quant` records the spec each
/// stored (already-quantized) weight was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub layers: Vec<LayerSpec>,
    pub params: BTreeMap<String, Tensor>,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub act_quant: BTreeMap<String, QuantSpec>,
    pub weight_quant: BTreeMap<String, QuantSpec>,
}

pub fn wkey(name: &str) -> String {
    format!("{name}.w")
}
pub fn bkey(name: &str) -> String {
    format!("{name}.b")
}

/// Gradients from one reverse pass.
pub struct Gradients {
    pub params: BTreeMap<String, Tensor>,
    pub input: Tensor,
}

impl ModelGraph {
    /// Builds the graph and initializes parameters (He-normal weights,
    /// zero biases, identity batch norm). Validates that names are unique
    /// and shapes compose.
    pub fn new(
        layers: Vec<LayerSpec>,
        input_shape: Vec<usize>,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut params = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        for layer in &layers {
            if !seen.insert(layer.name.clone()) {
                return Err(Error::Structure(format!(
                    "duplicate layer name '{}'",
                    layer.name
                )));
            }
            match &layer.kind {
                LayerKind::Linear { inp, out, bias } => {
                    let std = (2.0 / *inp as f64).sqrt();
                    let w = crate::tensor::rng_normal(rng, 0.0, std, inp * out)
                        .reshape(vec![*out, *inp])?;
                    params.insert(wkey(&layer.name), w);
                    if *bias {
                        params.insert(bkey(&layer.name), Tensor::zeros(vec![*out]));
                    }
                }
                LayerKind::Conv2d {
                    in_ch,
                    out_ch,
                    k,
                    bias,
                    ..
                } => {
                    let fan_in = in_ch * k * k;
                    let std = (2.0 / fan_in as f64).sqrt();
                    let w = crate::tensor::rng_normal(rng, 0.0, std, out_ch * fan_in)
                        .reshape(vec![*out_ch, *in_ch, *k, *k])?;
                    params.insert(wkey(&layer.name), w);
                    if *bias {
                        params.insert(bkey(&layer.name), Tensor::zeros(vec![*out_ch]));
                    }
                }
                LayerKind::BatchNorm { ch, .. } => {
                    params.insert(format!("{}.gamma", layer.name), Tensor::filled(vec![*ch], 1.0));
                    params.insert(format!("{}.beta", layer.name), Tensor::zeros(vec![*ch]));
                    params.insert(format!("{}.mean", layer.name), Tensor::zeros(vec![*ch]));
                    params.insert(format!("{}.var", layer.name), Tensor::filled(vec![*ch], 1.0));
                }
                LayerKind::Relu | LayerKind::AvgPool { .. } | LayerKind::Flatten => {}
            }
        }
        let graph = Self {
            layers,
            params,
            input_shape,
            classes,
            act_quant: BTreeMap::new(),
            weight_quant: BTreeMap::new(),
        };
        // dry-run shape composition on a single empty-ish sample
        let mut shape = vec![1usize];
        shape.extend_from_slice(&graph.input_shape);
        let probe = Tensor::zeros(shape);
        graph.forward(&probe, None)?;
        Ok(graph)
    }

    /// The classifier this project's experiments run on: two conv+BN+ReLU
    /// stages (the first strided), then a two-layer MLP head. Input 1×28×28.
    pub fn small_cnn(rng: &mut Rng) -> Result<Self> {
        let l = |name: &str, kind: LayerKind| LayerSpec {
            name: name.into(),
            kind,
        };
        Self::new(
            vec![
                l("conv1", LayerKind::Conv2d { in_ch: 1, out_ch: 4, k: 3, stride: 2, pad: 1, bias: true }),
                l("bn1", LayerKind::BatchNorm { ch: 4, eps: 1e-5 }),
                l("relu1", LayerKind::Relu),
                l("conv2", LayerKind::Conv2d { in_ch: 4, out_ch: 6, k: 5, stride: 1, pad: 2, bias: true }),
                l("bn2", LayerKind::BatchNorm { ch: 6, eps: 1e-5 }),
                l("relu2", LayerKind::Relu),
                l("flatten", LayerKind::Flatten),
                l("fc1", LayerKind::Linear { inp: 6 * 14 * 14, out: 16, bias: true }),
                l("relu3", LayerKind::Relu),
                l("fc2", LayerKind::Linear { inp: 16, out: 10, bias: true }),
            ],
            vec![1, 28, 28],
            10,
            rng,
        )
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::Lookup(format!("no layer named '{name}'")))
    }

    /// Indices of the weight-bearing (quantizable) layers, in order.
    pub fn weight_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.has_weight())
            .map(|(i, _)| i)
            .collect()
    }

    fn param(&self, key: &str) -> Result<&Tensor> {
        self.params
            .get(key)
            .ok_or_else(|| Error::Lookup(format!("missing parameter '{key}'")))
    }

    /// Applies layer `idx` to `x`, optionally substituting its weight.
    pub fn apply_layer(&self, idx: usize, x: &Tensor, weight: Option<&Tensor>) -> Result<Tensor> {
        let layer = &self.layers[idx];
        let name = &layer.name;
        let mut y = match &layer.kind {
            LayerKind::Linear { inp, out, bias } => {
                if x.rank() != 2 || x.shape()[1] != *inp {
                    return Err(Error::Shape(format!(
                        "layer '{name}' expects [N, {inp}], got {:?}",
                        x.shape()
                    )));
                }
                let w = match weight {
                    Some(w) => w,
                    None => self.param(&wkey(name))?,
                };
                let mut y = matmul_nt(x, w)?;
                if *bias {
                    let b = self.param(&bkey(name))?;
                    add_row_bias(&mut y, b.data(), *out);
                }
                y
            }
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                k: _,
                stride,
                pad,
                bias,
            } => {
                if x.rank() != 4 || x.shape()[1] != *in_ch {
                    return Err(Error::Shape(format!(
                        "layer '{name}' expects NCHW with C={in_ch}, got {:?}",
                        x.shape()
                    )));
                }
                let w = match weight {
                    Some(w) => w,
                    None => self.param(&wkey(name))?,
                };
                let mut y = crate::tensor::conv2d(x, w, *stride, *pad)?;
                if *bias {
                    let b = self.param(&bkey(name))?;
                    let plane: usize = y.shape()[2] * y.shape()[3];
                    let n = y.shape()[0];
                    for s in 0..n {
                        for o in 0..*out_ch {
                            let base = (s * out_ch + o) * plane;
                            let bv = b.data()[o];
                            for v in &mut y.data_mut()[base..base + plane] {
                                *v += bv;
                            }
                        }
                    }
                }
                y
            }
            LayerKind::BatchNorm { ch, eps } => {
                let gamma = self.param(&format!("{name}.gamma"))?;
                let beta = self.param(&format!("{name}.beta"))?;
                let mean = self.param(&format!("{name}.mean"))?;
                let var = self.param(&format!("{name}.var"))?;
                bn_forward(x, *ch, gamma, beta, mean, var, *eps)?
            }
            LayerKind::Relu => x.map(|v| v.max(0.0)),
            LayerKind::AvgPool { k } => avgpool_forward(x, *k)?,
            LayerKind::Flatten => {
                let n = x.shape()[0];
                x.reshape(vec![n, x.numel() / n.max(1)])?
            }
        };
        if let Some(spec) = self.act_quant.get(name) {
            y = quantize_nearest(&y, spec);
        }
        Ok(y)
    }

    /// Runs the network. With `tap`, returns the activation just after the
    /// named layer (activation quantization included) instead of the final
    /// output.
    pub fn forward(&self, x: &Tensor, tap: Option<&str>) -> Result<Tensor> {
        if x.rank() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        let mut act = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            act = self.apply_layer(i, &act, None)?;
            if tap == Some(layer.name.as_str()) {
                return Ok(act);
            }
        }
        match tap {
            None => Ok(act),
            Some(t) => Err(Error::Lookup(format!("no layer named '{t}'"))),
        }
    }

    /// Reverse-mode gradients of every parameter and of the input, given
    /// ∂L/∂output. Activation quantizers are treated as identity
    /// (straight-through) so calibration can see through them.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<Gradients> {
        // forward, keeping every layer input
        let mut acts: Vec<Tensor> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for i in 0..self.layers.len() {
            let next = self.apply_layer(i, acts.last().unwrap(), None)?;
            acts.push(next);
        }
        let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut dy = grad_out.clone();
        if dy.shape() != acts.last().unwrap().shape() {
            return Err(Error::Shape(format!(
                "grad_out shape {:?} vs output {:?}",
                dy.shape(),
                acts.last().unwrap().shape()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let xin = &acts[i];
            let name = &layer.name;
            dy = match &layer.kind {
                LayerKind::Linear { bias, .. } => {
                    let w = self.param(&wkey(name))?;
                    grads.insert(wkey(name), matmul_tn(&dy, xin)?);
                    if *bias {
                        grads.insert(bkey(name), col_sum(&dy));
                    }
                    matmul(&dy, w)?
                }
                LayerKind::Conv2d {
                    in_ch,
                    out_ch,
                    k,
                    stride,
                    pad,
                    bias,
                } => {
                    let w = self.param(&wkey(name))?;
                    let (dw, db, dx) =
                        conv_backward(xin, w, &dy, (*in_ch, *out_ch, *k, *stride, *pad))?;
                    grads.insert(wkey(name), dw);
                    if *bias {
                        grads.insert(bkey(name), db);
                    }
                    dx
                }
                LayerKind::BatchNorm { ch, eps } => {
                    let gamma = self.param(&format!("{name}.gamma"))?;
                    let mean = self.param(&format!("{name}.mean"))?;
                    let var = self.param(&format!("{name}.var"))?;
                    let (dgamma, dbeta, dx) = bn_backward(xin, &dy, *ch, gamma, mean, var, *eps)?;
                    grads.insert(format!("{name}.gamma"), dgamma);
                    grads.insert(format!("{name}.beta"), dbeta);
                    dx
                }
                LayerKind::Relu => {
                    let mut dx = dy.clone();
                    for (d, &v) in dx.data_mut().iter_mut().zip(xin.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    dx
                }
                LayerKind::AvgPool { k } => avgpool_backward(xin, &dy, *k)?,
                LayerKind::Flatten => dy.reshape(xin.shape().to_vec())?,
            };
        }
        Ok(Gradients {
            params: grads,
            input: dy,
        })
    }

    /// Folds every BatchNorm into the affine layer immediately before it.
    /// The affine layer gains a bias if it had none.
    pub fn fuse_bn(&self) -> Result<ModelGraph> {
        let mut out = self.clone();
        let mut layers: Vec<LayerSpec> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let LayerKind::BatchNorm { ch, eps } = &layer.kind else {
                layers.push(layer.clone());
                continue;
            };
            let prev = layers
                .last_mut()
                .filter(|p| p.kind.has_weight())
                .ok_or_else(|| {
                    Error::Structure(format!(
                        "batch norm '{}' does not follow a Linear/Conv2d layer",
                        layer.name
                    ))
                })?;
            let out_units = match &prev.kind {
                LayerKind::Linear { out, .. } => *out,
                LayerKind::Conv2d { out_ch, .. } => *out_ch,
                _ => unreachable!(),
            };
            if out_units != *ch {
                return Err(Error::Structure(format!(
                    "batch norm '{}' has {} channels but '{}' outputs {}",
                    layer.name, ch, prev.name, out_units
                )));
            }
            let gamma = out.param(&format!("{}.gamma", layer.name))?.clone();
            let beta = out.param(&format!("{}.beta", layer.name))?.clone();
            let mean = out.param(&format!("{}.mean", layer.name))?.clone();
            let var = out.param(&format!("{}.var", layer.name))?.clone();

            let wk = wkey(&prev.name);
            let bk = bkey(&prev.name);
            let mut w = out.params.remove(&wk).expect("weight exists");
            let mut b = out
                .params
                .remove(&bk)
                .unwrap_or_else(|| Tensor::zeros(vec![out_units]));
            let per = w.numel() / out_units;
            for o in 0..out_units {
                let inv = (var.data()[o] as f64 + *eps as f64).sqrt().recip();
                let g = gamma.data()[o] as f64 * inv;
                for v in &mut w.data_mut()[o * per..(o + 1) * per] {
                    *v = (*v as f64 * g) as f32;
                }
                b.data_mut()[o] = (beta.data()[o] as f64
                    + g * (b.data()[o] as f64 - mean.data()[o] as f64))
                    as f32;
            }
            out.params.insert(wk, w);
            out.params.insert(bk, b);
            match &mut prev.kind {
                LayerKind::Linear { bias, .. } => *bias = true,
                LayerKind::Conv2d { bias, .. } => *bias = true,
                _ => unreachable!(),
            }
            for suffix in ["gamma", "beta", "mean", "var"] {
                out.params.remove(&format!("{}.{suffix}", layer.name));
            }
        }
        out.layers = layers;
        Ok(out)
    }
}

fn add_row_bias(y: &mut Tensor, b: &[f32], out: usize) {
    for (i, v) in y.data_mut().iter_mut().enumerate() {
        *v += b[i % out];
    }
}

fn col_sum(dy: &Tensor) -> Tensor {
    let (n, c) = (dy.shape()[0], dy.shape()[1]);
    let mut acc = vec![0.0f64; c];
    for i in 0..n {
        for j in 0..c {
            acc[j] += dy.data()[i * c + j] as f64;
        }
    }
    Tensor::new(vec![c], acc.iter().map(|&x| x as f32).collect()).unwrap()
}

fn bn_channel_layout(x: &Tensor, ch: usize) -> Result<(usize, usize)> {
    match x.rank() {
        2 if x.shape()[1] == ch => Ok((x.shape()[0], 1)),
        4 if x.shape()[1] == ch => Ok((x.shape()[0], x.shape()[2] * x.shape()[3])),
        _ => Err(Error::Shape(format!(
            "batch norm over {ch} channels cannot apply to {:?}",
            x.shape()
        ))),
    }
}

fn bn_forward(
    x: &Tensor,
    ch: usize,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f32,
) -> Result<Tensor> {
    let (n, plane) = bn_channel_layout(x, ch)?;
    let mut y = x.clone();
    for s in 0..n {
        for c in 0..ch {
            let inv = (var.data()[c] as f64 + eps as f64).sqrt().recip();
            let g = gamma.data()[c] as f64 * inv;
            let m = mean.data()[c] as f64;
            let b = beta.data()[c] as f64;
            let base = (s * ch + c) * plane;
            for v in &mut y.data_mut()[base..base + plane] {
                *v = ((*v as f64 - m) * g + b) as f32;
            }
        }
    }
    Ok(y)
}

fn bn_backward(
    x: &Tensor,
    dy: &Tensor,
    ch: usize,
    gamma: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f32,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, plane) = bn_channel_layout(x, ch)?;
    let mut dgamma = vec![0.0f64; ch];
    let mut dbeta = vec![0.0f64; ch];
    let mut dx = dy.clone();
    for s in 0..n {
        for c in 0..ch {
            let inv = (var.data()[c] as f64 + eps as f64).sqrt().recip();
            let m = mean.data()[c] as f64;
            let g = gamma.data()[c] as f64 * inv;
            let base = (s * ch + c) * plane;
            for i in base..base + plane {
                let d = dy.data()[i] as f64;
                dgamma[c] += d * (x.data()[i] as f64 - m) * inv;
                dbeta[c] += d;
                dx.data_mut()[i] = (d * g) as f32;
            }
        }
    }
    Ok((
        Tensor::new(vec![ch], dgamma.iter().map(|&v| v as f32).collect())?,
        Tensor::new(vec![ch], dbeta.iter().map(|&v| v as f32).collect())?,
        dx,
    ))
}

fn avgpool_forward(x: &Tensor, k: usize) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!("avg pool expects NCHW, got {:?}", x.shape())));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let ho = conv_out_extent(h, k, k, 0)
        .ok_or_else(|| Error::Shape(format!("pool window {k} exceeds input {h}")))?;
    let wo = conv_out_extent(w, k, k, 0)
        .ok_or_else(|| Error::Shape(format!("pool window {k} exceeds input {w}")))?;
    let mut y = Tensor::zeros(vec![n, c, ho, wo]);
    let inv = 1.0 / (k * k) as f64;
    for s in 0..n {
        for ch in 0..c {
            let plane = &x.data()[(s * c + ch) * h * w..(s * c + ch + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0f64;
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += plane[(oy * k + ky) * w + (ox * k + kx)] as f64;
                        }
                    }
                    y.data_mut()[((s * c + ch) * ho + oy) * wo + ox] = (acc * inv) as f32;
                }
            }
        }
    }
    Ok(y)
}

fn avgpool_backward(x: &Tensor, dy: &Tensor, k: usize) -> Result<Tensor> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (dy.shape()[2], dy.shape()[3]);
    let mut dx = Tensor::zeros(x.shape().to_vec());
    let inv = 1.0 / (k * k) as f32;
    for s in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let d = dy.data()[((s * c + ch) * ho + oy) * wo + ox] * inv;
                    for ky in 0..k {
                        for kx in 0..k {
                            dx.data_mut()
                                [((s * c + ch) * h + oy * k + ky) * w + ox * k + kx] += d;
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Weight, bias, and input gradients of one conv layer.
fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    (in_ch, out_ch, k, stride, pad): (usize, usize, usize, usize, usize),
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, h, wid) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (dy.shape()[2], dy.shape()[3]);
    let ckk = in_ch * k * k;
    let mut col = vec![0.0f32; ckk * ho * wo];
    let mut dw = vec![0.0f64; out_ch * ckk];
    let mut dw_s = vec![0.0f32; out_ch * ckk];
    let mut db = vec![0.0f64; out_ch];
    let mut dcol = vec![0.0f32; ckk * ho * wo];
    let mut dx = Tensor::zeros(x.shape().to_vec());
    for s in 0..n {
        im2col_into(x.sample(s), (in_ch, h, wid), k, stride, pad, (ho, wo), &mut col);
        let dy_s = &dy.data()[s * out_ch * ho * wo..(s + 1) * out_ch * ho * wo];
        // dW += dy_s · colᵀ
        matmul_nt_into(dy_s, &col, out_ch, ho * wo, ckk, &mut dw_s);
        for (acc, &v) in dw.iter_mut().zip(&dw_s) {
            *acc += v as f64;
        }
        for o in 0..out_ch {
            db[o] += dy_s[o * ho * wo..(o + 1) * ho * wo]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
        // dcol = Wᵀ · dy_s
        crate::tensor::matmul_tn_into(w.data(), dy_s, out_ch, ckk, ho * wo, &mut dcol);
        col2im_add(
            &dcol,
            (in_ch, h, wid),
            k,
            stride,
            pad,
            (ho, wo),
            &mut dx.data_mut()[s * in_ch * h * wid..(s + 1) * in_ch * h * wid],
        );
    }
    Ok((
        Tensor::new(
            vec![out_ch, in_ch, k, k],
            dw.iter().map(|&v| v as f32).collect(),
        )?,
        Tensor::new(vec![out_ch], db.iter().map(|&v| v as f32).collect())?,
        dx,
    ))
}

/// Affine map of a weight layer with an explicit weight tensor and no
/// bias. Reconstruction losses compare two weightings of the same input,
/// so the bias cancels and is skipped on both sides.
pub(crate) fn weight_forward(kind: &LayerKind, x: &Tensor, w: &Tensor) -> Result<Tensor> {
    match kind {
        LayerKind::Linear { .. } => matmul_nt(x, w),
        LayerKind::Conv2d { stride, pad, .. } => crate::tensor::conv2d(x, w, *stride, *pad),
        other => Err(Error::Capability(format!(
            "layer kind {other:?} has no weight to apply"
        ))),
    }
}

/// ∂L/∂W of `weight_forward` given ∂L/∂output.
pub(crate) fn weight_grad_w(kind: &LayerKind, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    match kind {
        LayerKind::Linear { .. } => matmul_tn(dy, x),
        LayerKind::Conv2d {
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            ..
        } => {
            let (n, h, wid) = (x.shape()[0], x.shape()[2], x.shape()[3]);
            let (ho, wo) = (dy.shape()[2], dy.shape()[3]);
            let ckk = in_ch * k * k;
            let mut col = vec![0.0f32; ckk * ho * wo];
            let mut dw = vec![0.0f64; out_ch * ckk];
            let mut dw_s = vec![0.0f32; out_ch * ckk];
            for s in 0..n {
                im2col_into(x.sample(s), (*in_ch, h, wid), *k, *stride, *pad, (ho, wo), &mut col);
                let dy_s = &dy.data()[s * out_ch * ho * wo..(s + 1) * out_ch * ho * wo];
                matmul_nt_into(dy_s, &col, *out_ch, ho * wo, ckk, &mut dw_s);
                for (acc, &v) in dw.iter_mut().zip(&dw_s) {
                    *acc += v as f64;
                }
            }
            Tensor::new(
                vec![*out_ch, *in_ch, *k, *k],
                dw.iter().map(|&v| v as f32).collect(),
            )
        }
        other => Err(Error::Capability(format!(
            "layer kind {other:?} has no weight gradient"
        ))),
    }
}

// ── Loss and training ─────────────────────────────────────────────────

/// Mean cross-entropy of softmax(logits) against integer labels, plus
/// ∂loss/∂logits.
pub fn softmax_xent(logits: &Tensor, labels: &[u32]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::Shape(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    let mut grad = Tensor::zeros(vec![n, c]);
    let mut loss = 0.0f64;
    for i in 0..n {
        let row = &logits.data()[i * c..(i + 1) * c];
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v as f64 - max).exp();
        }
        let label = labels[i] as usize;
        if label >= c {
            return Err(Error::Domain(format!("label {label} out of range for {c} classes")));
        }
        loss -= (row[label] as f64 - max) - denom.ln();
        for j in 0..c {
            let p = (row[j] as f64 - max).exp() / denom;
            let ind = if j == label { 1.0 } else { 0.0 };
            grad.data_mut()[i * c + j] = ((p - ind) / n as f64) as f32;
        }
    }
    Ok((loss / n as f64, grad))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub momentum: f32,
    /// L2 penalty on weights (not biases or BN parameters); keeps outlier
    /// weights down so per-layer quantization grids stay tight
    pub weight_decay: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            lr: 0.1,
            batch: 64,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Minibatch SGD with momentum and weight decay on softmax cross-entropy,
/// cosine-decaying the learning rate to 1% over the run. Returns the
/// trained model and its accuracy on `test`. Deterministic given the rng.
pub fn train_baseline(
    model: &ModelGraph,
    train: &DatasetHandle,
    test: &DatasetHandle,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(ModelGraph, f64)> {
    let mut m = model.clone();
    let mut velocity: BTreeMap<String, Tensor> = BTreeMap::new();
    let n = train.len();
    if n == 0 {
        return Err(Error::Size("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_stable = m.clone();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let progress = epoch as f32 / cfg.epochs as f32;
        let lr = cfg.lr * (0.01 + 0.99 * 0.5 * (1.0 + (std::f32::consts::PI * progress).cos()));
        // Fisher-Yates shuffle driven by the run rng
        for i in (1..n).rev() {
            order.swap(i, rng.below(i + 1));
        }
        for chunk in order.chunks(cfg.batch) {
            let x = train.images.gather_samples(chunk);
            let labels: Vec<u32> = chunk.iter().map(|&i| train.labels[i]).collect();
            let logits = m.forward(&x, None)?;
            let (loss, dlogits) = softmax_xent(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    step,
                    last_stable: Box::new(last_stable),
                });
            }
            let grads = m.backward(&x, &dlogits)?;
            for (key, g) in grads.params {
                let wd = if key.ends_with(".w") { cfg.weight_decay } else { 0.0 };
                let v = velocity
                    .entry(key.clone())
                    .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
                let p = m.params.get_mut(&key).expect("gradient for known param");
                for i in 0..g.numel() {
                    let vel = cfg.momentum * v.data()[i] + g.data()[i] + wd * p.data()[i];
                    v.data_mut()[i] = vel;
                    p.data_mut()[i] -= lr * vel;
                }
            }
            step += 1;
        }
        last_stable = m.clone();
        // opt-in progress trace; handy when tuning schedules on new data
        if std::env::var_os("QUANT_TRAIN_LOG").is_some() {
            eprintln!("epoch {}: test accuracy {:.4}", epoch + 1, evaluate(&m, test)?);
        }
    }
    let acc = evaluate(&m, test)?;
    Ok((m, acc))
}

/// Top-1 accuracy over a dataset, evaluated in fixed-size batches.
pub fn evaluate(model: &ModelGraph, ds: &DatasetHandle) -> Result<f64> {
    let per = evaluate_per_class(model, ds)?;
    let total: usize = per.iter().map(|c| c.total).sum();
    let hit: usize = per.iter().map(|c| c.correct).sum();
    Ok(hit as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassAccuracy {
    pub class: u32,
    pub correct: usize,
    pub total: usize,
}

pub fn evaluate_per_class(model: &ModelGraph, ds: &DatasetHandle) -> Result<Vec<ClassAccuracy>> {
    let n = ds.len();
    if n == 0 {
        return Err(Error::Size("evaluation set is empty".into()));
    }
    let mut per: Vec<ClassAccuracy> = (0..model.classes as u32)
        .map(|class| ClassAccuracy {
            class,
            correct: 0,
            total: 0,
        })
        .collect();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(256) {
        let x = ds.images.gather_samples(chunk);
        let logits = model.forward(&x, None)?;
        let c = logits.shape()[1];
        for (row, &i) in chunk.iter().enumerate() {
            let scores = &logits.data()[row * c..(row + 1) * c];
            let pred = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .unwrap();
            let label = ds.labels[i] as usize;
            per[label].total += 1;
            if pred == label {
                per[label].correct += 1;
            }
        }
    }
    Ok(per)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng_normal;

    fn l(name: &str, kind: LayerKind) -> LayerSpec {
        LayerSpec {
            name: name.into(),
            kind,
        }
    }

    #[test]
    fn relu_forward() {
        let mut rng = Rng::from_seed(0);
        let g = ModelGraph::new(vec![l("r", LayerKind::Relu)], vec![2], 2, &mut rng).unwrap();
        let x = Tensor::new(vec![1, 2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(g.forward(&x, None).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn linear_identity() {
        let mut rng = Rng::from_seed(0);
        let mut g = ModelGraph::new(
            vec![l("fc", LayerKind::Linear { inp: 3, out: 3, bias: true })],
            vec![3],
            3,
            &mut rng,
        )
        .unwrap();
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        g.params.insert("fc.w".into(), eye);
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        assert_eq!(g.forward(&x, None).unwrap(), x);
    }

    #[test]
    fn tap_equals_truncated_graph() {
        let mut rng = Rng::from_seed(3);
        let g = ModelGraph::new(
            vec![
                l("fc1", LayerKind::Linear { inp: 4, out: 5, bias: true }),
                l("r", LayerKind::Relu),
                l("fc2", LayerKind::Linear { inp: 5, out: 2, bias: true }),
            ],
            vec![4],
            2,
            &mut rng,
        )
        .unwrap();
        let mut rng2 = Rng::from_seed(3);
        let trunc = ModelGraph::new(
            vec![
                l("fc1", LayerKind::Linear { inp: 4, out: 5, bias: true }),
                l("r", LayerKind::Relu),
            ],
            vec![4],
            2,
            &mut rng2,
        )
        .unwrap();
        let x = rng_normal(&mut rng, 0.0, 1.0, 3 * 4).reshape(vec![3, 4]).unwrap();
        assert_eq!(
            g.forward(&x, Some("r")).unwrap(),
            trunc.forward(&x, None).unwrap()
        );
        assert!(matches!(
            g.forward(&x, Some("nope")),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn linear_weight_grad_is_outer_product_sum() {
        let mut rng = Rng::from_seed(5);
        let g = ModelGraph::new(
            vec![l("fc", LayerKind::Linear { inp: 3, out: 2, bias: true })],
            vec![3],
            2,
            &mut rng,
        )
        .unwrap();
        let x = rng_normal(&mut rng, 0.0, 1.0, 4 * 3).reshape(vec![4, 3]).unwrap();
        let ones = Tensor::filled(vec![4, 2], 1.0);
        let grads = g.backward(&x, &ones).unwrap();
        // dW[o][i] = Σ_n x[n][i]
        let dw = &grads.params["fc.w"];
        for o in 0..2 {
            for i in 0..3 {
                let expect: f32 = (0..4).map(|n| x.data()[n * 3 + i]).sum();
                assert!((dw.data()[o * 3 + i] - expect).abs() < 1e-5);
            }
        }
        let db = &grads.params["fc.b"];
        assert!(db.data().iter().all(|&v| (v - 4.0).abs() < 1e-6));
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = Rng::from_seed(6);
        let g = ModelGraph::small_cnn(&mut rng).unwrap();
        let x = rng_normal(&mut rng, 0.0, 1.0, 2 * 784).reshape(vec![2, 1, 28, 28]).unwrap();
        let out = g.forward(&x, None).unwrap();
        let grads = g.backward(&x, &Tensor::zeros(out.shape().to_vec())).unwrap();
        for (_, t) in grads.params {
            assert_eq!(t.max_abs(), 0.0);
        }
        assert_eq!(grads.input.max_abs(), 0.0);
    }

    /// Smallest |pre-activation| feeding any ReLU. The network is piecewise
    /// affine, so a central difference is exact (up to f32 rounding) as long
    /// as the perturbation cannot flip an activation sign — FD cases must
    /// keep a margin well above eps × path gain.
    fn relu_margin(g: &ModelGraph, x: &Tensor) -> f32 {
        let mut margin = f32::INFINITY;
        let mut act = x.clone();
        for i in 0..g.layers.len() {
            if matches!(g.layers[i].kind, LayerKind::Relu) {
                for &v in act.data() {
                    margin = margin.min(v.abs());
                }
            }
            act = g.apply_layer(i, &act, None).unwrap();
        }
        margin
    }

    /// Test-only double-precision forward, written directly from the layer
    /// definitions rather than the production kernels, so finite
    /// differences are not polluted by f32 activation storage.
    fn forward_f64(
        g: &ModelGraph,
        params: &BTreeMap<String, Vec<f64>>,
        x: &[f64],
        x_shape: &[usize],
    ) -> Vec<f64> {
        let mut act = x.to_vec();
        let mut shape = x_shape.to_vec();
        let n = shape[0];
        for layer in &g.layers {
            let name = &layer.name;
            match &layer.kind {
                LayerKind::Linear { inp, out, bias } => {
                    let w = &params[&wkey(name)];
                    let mut y = vec![0.0f64; n * out];
                    for s in 0..n {
                        for o in 0..*out {
                            let mut acc = if *bias { params[&bkey(name)][o] } else { 0.0 };
                            for i in 0..*inp {
                                acc += act[s * inp + i] * w[o * inp + i];
                            }
                            y[s * out + o] = acc;
                        }
                    }
                    act = y;
                    shape = vec![n, *out];
                }
                LayerKind::Conv2d { in_ch, out_ch, k, stride, pad, bias } => {
                    let (h, w) = (shape[2], shape[3]);
                    let ho = (h + 2 * pad - k) / stride + 1;
                    let wo = (w + 2 * pad - k) / stride + 1;
                    let wt = &params[&wkey(name)];
                    let mut y = vec![0.0f64; n * out_ch * ho * wo];
                    for s in 0..n {
                        for o in 0..*out_ch {
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let mut acc =
                                        if *bias { params[&bkey(name)][o] } else { 0.0 };
                                    for ic in 0..*in_ch {
                                        for ky in 0..*k {
                                            for kx in 0..*k {
                                                let iy = (oy * stride + ky) as isize - *pad as isize;
                                                let ix = (ox * stride + kx) as isize - *pad as isize;
                                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                                    continue;
                                                }
                                                acc += act[((s * in_ch + ic) * h + iy as usize) * w
                                                    + ix as usize]
                                                    * wt[((o * in_ch + ic) * k + ky) * k + kx];
                                            }
                                        }
                                    }
                                    y[((s * out_ch + o) * ho + oy) * wo + ox] = acc;
                                }
                            }
                        }
                    }
                    act = y;
                    shape = vec![n, *out_ch, ho, wo];
                }
                LayerKind::BatchNorm { ch, eps } => {
                    let plane: usize = shape[2..].iter().product::<usize>().max(1);
                    let (ga, be) = (
                        &params[&format!("{name}.gamma")],
                        &params[&format!("{name}.beta")],
                    );
                    let (mu, va) = (
                        &params[&format!("{name}.mean")],
                        &params[&format!("{name}.var")],
                    );
                    for s in 0..n {
                        for c in 0..*ch {
                            let inv = (va[c] + *eps as f64).sqrt().recip();
                            for i in 0..plane {
                                let idx = (s * ch + c) * plane + i;
                                act[idx] = (act[idx] - mu[c]) * ga[c] * inv + be[c];
                            }
                        }
                    }
                }
                LayerKind::Relu => {
                    for v in &mut act {
                        *v = v.max(0.0);
                    }
                }
                LayerKind::AvgPool { k } => {
                    let (c, h, w) = (shape[1], shape[2], shape[3]);
                    let (ho, wo) = (h / k, w / k);
                    let mut y = vec![0.0f64; n * c * ho * wo];
                    for s in 0..n {
                        for ch in 0..c {
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let mut acc = 0.0;
                                    for ky in 0..*k {
                                        for kx in 0..*k {
                                            acc += act[((s * c + ch) * h + oy * k + ky) * w
                                                + ox * k
                                                + kx];
                                        }
                                    }
                                    y[((s * c + ch) * ho + oy) * wo + ox] = acc / (k * k) as f64;
                                }
                            }
                        }
                    }
                    act = y;
                    shape = vec![n, c, ho, wo];
                }
                LayerKind::Flatten => {
                    let rest: usize = shape[1..].iter().product();
                    shape = vec![n, rest];
                }
            }
        }
        act
    }

    /// Central finite differences of the linear functional Σ c⊙forward(x)
    /// over every parameter, against backward(x, c). Differences run
    /// through the f64 oracle forward.
    fn check_fd(g: &ModelGraph, x: &Tensor, c: &Tensor, tol: f64) {
        let eps = 1e-3f64;
        let base: BTreeMap<String, Vec<f64>> = g
            .params
            .iter()
            .map(|(k, t)| (k.clone(), t.data().iter().map(|&v| v as f64).collect()))
            .collect();
        let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        let loss = |p: &BTreeMap<String, Vec<f64>>| -> f64 {
            forward_f64(g, p, &xs, x.shape())
                .iter()
                .zip(c.data())
                .map(|(&a, &b)| a * b as f64)
                .sum()
        };

        // the oracle must agree with the production forward to f32 accuracy
        let y32 = g.forward(x, None).unwrap();
        let y64 = forward_f64(g, &base, &xs, x.shape());
        for (a, &b) in y64.iter().zip(y32.data()) {
            assert!((a - b as f64).abs() < 1e-4, "oracle {a} vs forward {b}");
        }

        let grads = g.backward(x, c).unwrap();
        for (key, grad) in &grads.params {
            let gmax = (grad.max_abs() as f64).max(1e-9);
            for i in 0..grad.numel() {
                let mut pp = base.clone();
                pp.get_mut(key).unwrap()[i] += eps;
                let mut pm = base.clone();
                pm.get_mut(key).unwrap()[i] -= eps;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * eps);
                let an = grad.data()[i] as f64;
                assert!(
                    (an - fd).abs() <= tol * fd.abs().max(an.abs()) + 1e-5 * gmax,
                    "{key}[{i}]: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    fn mlp_case(seed: u64) -> (ModelGraph, Tensor, Tensor) {
        let mut rng = Rng::from_seed(seed);
        let g = ModelGraph::new(
            vec![
                l("fc1", LayerKind::Linear { inp: 6, out: 8, bias: true }),
                l("r1", LayerKind::Relu),
                l("fc2", LayerKind::Linear { inp: 8, out: 3, bias: true }),
            ],
            vec![6],
            3,
            &mut rng,
        )
        .unwrap();
        let x = rng_normal(&mut rng, 0.0, 1.0, 5 * 6).reshape(vec![5, 6]).unwrap();
        let c = rng_normal(&mut rng, 0.0, 1.0, 5 * 3).reshape(vec![5, 3]).unwrap();
        (g, x, c)
    }

    #[test]
    fn backward_matches_finite_differences_mlp() {
        let (g, x, c) = (0..)
            .map(mlp_case)
            .find(|(g, x, _)| relu_margin(g, x) > 0.02)
            .unwrap();
        check_fd(&g, &x, &c, 1e-3);
    }

    fn conv_bn_pool_case(seed: u64) -> (ModelGraph, Tensor, Tensor) {
        let mut rng = Rng::from_seed(seed);
        let mut g = ModelGraph::new(
            vec![
                l("c", LayerKind::Conv2d { in_ch: 2, out_ch: 3, k: 3, stride: 1, pad: 1, bias: true }),
                l("bn", LayerKind::BatchNorm { ch: 3, eps: 1e-5 }),
                l("r", LayerKind::Relu),
                l("p", LayerKind::AvgPool { k: 2 }),
                l("f", LayerKind::Flatten),
                l("fc", LayerKind::Linear { inp: 3 * 3 * 3, out: 2, bias: true }),
            ],
            vec![2, 6, 6],
            2,
            &mut rng,
        )
        .unwrap();
        // spread BN stats away from identity so their chain is exercised
        g.params.insert("bn.gamma".into(), Tensor::new(vec![3], vec![1.3, 0.7, 1.1]).unwrap());
        g.params.insert("bn.beta".into(), Tensor::new(vec![3], vec![0.2, -0.1, 0.0]).unwrap());
        g.params.insert("bn.mean".into(), Tensor::new(vec![3], vec![0.1, -0.2, 0.05]).unwrap());
        g.params.insert("bn.var".into(), Tensor::new(vec![3], vec![0.9, 1.4, 0.6]).unwrap());
        let x = rng_normal(&mut rng, 0.0, 1.0, 4 * 2 * 36).reshape(vec![4, 2, 6, 6]).unwrap();
        let c = rng_normal(&mut rng, 0.0, 1.0, 4 * 2).reshape(vec![4, 2]).unwrap();
        (g, x, c)
    }

    #[test]
    fn backward_matches_finite_differences_conv_bn_pool() {
        let (g, x, c) = (0..)
            .map(conv_bn_pool_case)
            .find(|(g, x, _)| relu_margin(g, x) > 0.02)
            .unwrap();
        check_fd(&g, &x, &c, 1e-3);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = Rng::from_seed(9);
        let g = ModelGraph::new(
            vec![
                l("c", LayerKind::Conv2d { in_ch: 1, out_ch: 2, k: 3, stride: 2, pad: 1, bias: true }),
                l("f", LayerKind::Flatten),
                l("fc", LayerKind::Linear { inp: 2 * 3 * 3, out: 2, bias: false }),
            ],
            vec![1, 5, 5],
            2,
            &mut rng,
        )
        .unwrap();
        let x = rng_normal(&mut rng, 0.0, 1.0, 2 * 25).reshape(vec![2, 1, 5, 5]).unwrap();
        let c = rng_normal(&mut rng, 0.0, 1.0, 2 * 2).reshape(vec![2, 2]).unwrap();
        let params: BTreeMap<String, Vec<f64>> = g
            .params
            .iter()
            .map(|(k, t)| (k.clone(), t.data().iter().map(|&v| v as f64).collect()))
            .collect();
        let loss = |xs: &[f64]| -> f64 {
            forward_f64(&g, &params, xs, x.shape())
                .iter()
                .zip(c.data())
                .map(|(&a, &b)| a * b as f64)
                .sum()
        };
        let grads = g.backward(&x, &c).unwrap();
        let eps = 1e-3f64;
        let gmax = (grads.input.max_abs() as f64).max(1e-9);
        let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        for i in 0..x.numel() {
            let mut xp = xs.clone();
            xp[i] += eps;
            let mut xm = xs.clone();
            xm[i] -= eps;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * eps);
            let an = grads.input.data()[i] as f64;
            assert!(
                (an - fd).abs() <= 1e-3 * fd.abs().max(an.abs()) + 1e-5 * gmax,
                "x[{i}]: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn bn_fusion_identity_and_scaling() {
        let mut rng = Rng::from_seed(10);
        let mut g = ModelGraph::new(
            vec![
                l("c", LayerKind::Conv2d { in_ch: 1, out_ch: 2, k: 3, stride: 1, pad: 1, bias: true }),
                l("bn", LayerKind::BatchNorm { ch: 2, eps: 0.0 }),
            ],
            vec![1, 4, 4],
            2,
            &mut rng,
        )
        .unwrap();
        let w0 = g.params["c.w"].clone();
        let fused = g.fuse_bn().unwrap();
        assert_eq!(fused.params["c.w"], w0);
        assert_eq!(fused.layers.len(), 1);

        g.params.insert("bn.gamma".into(), Tensor::filled(vec![2], 2.0));
        let fused2 = g.fuse_bn().unwrap();
        for (a, b) in fused2.params["c.w"].data().iter().zip(w0.data()) {
            assert!((a - 2.0 * b).abs() < 1e-6);
        }
    }

    #[test]
    fn bn_fusion_preserves_outputs() {
        let mut rng = Rng::from_seed(11);
        for case in 0..20 {
            let g = ModelGraph::new(
                vec![
                    l("c", LayerKind::Conv2d { in_ch: 2, out_ch: 3, k: 3, stride: 1, pad: 1, bias: case % 2 == 0 }),
                    l("bn", LayerKind::BatchNorm { ch: 3, eps: 1e-5 }),
                    l("r", LayerKind::Relu),
                ],
                vec![2, 5, 5],
                2,
                &mut rng,
            )
            .unwrap();
            let mut g = g;
            for (key, scale, shift) in [
                ("bn.gamma", 0.5, 0.75),
                ("bn.beta", 0.6, -0.3),
                ("bn.mean", 0.4, -0.2),
            ] {
                let t = rng_normal(&mut rng, shift, scale, 3);
                g.params.insert(key.into(), t);
            }
            let var = rng_normal(&mut rng, 1.0, 0.3, 3).map(|v| v.abs().max(0.05));
            g.params.insert("bn.var".into(), var);

            let fused = g.fuse_bn().unwrap();
            let x = rng_normal(&mut rng, 0.0, 1.0, 3 * 2 * 25).reshape(vec![3, 2, 5, 5]).unwrap();
            let a = g.forward(&x, None).unwrap();
            let b = fused.forward(&x, None).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!(
                    (u - v).abs() <= 1e-5 * u.abs().max(1.0),
                    "case {case}: {u} vs {v}"
                );
            }
        }
    }

    #[test]
    fn orphan_bn_is_structure_error() {
        let mut rng = Rng::from_seed(12);
        let g = ModelGraph::new(
            vec![
                l("r", LayerKind::Relu),
                l("bn", LayerKind::BatchNorm { ch: 2, eps: 1e-5 }),
            ],
            vec![2],
            2,
            &mut rng,
        )
        .unwrap();
        assert!(matches!(g.fuse_bn(), Err(Error::Structure(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut rng = Rng::from_seed(13);
        let r = ModelGraph::new(
            vec![l("a", LayerKind::Relu), l("a", LayerKind::Flatten)],
            vec![2],
            2,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Structure(_))));
    }

    #[test]
    fn training_fits_separable_toy_set() {
        let mut rng = Rng::from_seed(14);
        // two Gaussian clouds at ±1.5 along every axis
        let n = 200;
        let mut data = Vec::with_capacity(n * 4);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u32;
            let center = if class == 0 { -1.5 } else { 1.5 };
            for _ in 0..4 {
                data.push((rng.normal(center, 0.4)) as f32);
            }
            labels.push(class);
        }
        let ds = DatasetHandle {
            images: Tensor::new(vec![n, 4], data).unwrap(),
            labels,
            classes: 2,
        };
        let g = ModelGraph::new(
            vec![
                l("fc1", LayerKind::Linear { inp: 4, out: 8, bias: true }),
                l("r", LayerKind::Relu),
                l("fc2", LayerKind::Linear { inp: 8, out: 2, bias: true }),
            ],
            vec![4],
            2,
            &mut rng,
        )
        .unwrap();
        let cfg = TrainConfig { epochs: 20, lr: 0.05, batch: 32, ..Default::default() };
        let (_trained, acc) = train_baseline(&g, &ds, &ds, &cfg, &mut rng).unwrap();
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let mut rng = Rng::from_seed(15);
        let g = ModelGraph::new(
            vec![l("fc", LayerKind::Linear { inp: 3, out: 2, bias: true })],
            vec![3],
            2,
            &mut rng,
        )
        .unwrap();
        let ds = DatasetHandle {
            images: rng_normal(&mut rng, 0.0, 1.0, 30).reshape(vec![10, 3]).unwrap(),
            labels: vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
            classes: 2,
        };
        let cfg = TrainConfig { epochs: 2, lr: 0.0, batch: 4, ..Default::default() };
        let (trained, _) = train_baseline(&g, &ds, &ds, &cfg, &mut rng).unwrap();
        assert_eq!(trained.params, g.params);
    }

    #[test]
    fn training_is_deterministic() {
        let build = || {
            let mut rng = Rng::from_seed(16);
            let g = ModelGraph::new(
                vec![
                    l("fc1", LayerKind::Linear { inp: 4, out: 6, bias: true }),
                    l("r", LayerKind::Relu),
                    l("fc2", LayerKind::Linear { inp: 6, out: 2, bias: true }),
                ],
                vec![4],
                2,
                &mut rng,
            )
            .unwrap();
            let ds = DatasetHandle {
                images: rng_normal(&mut rng, 0.0, 1.0, 80).reshape(vec![20, 4]).unwrap(),
                labels: (0..20).map(|i| (i % 2) as u32).collect(),
                classes: 2,
            };
            let cfg = TrainConfig { epochs: 3, lr: 0.05, batch: 8, ..Default::default() };
            let (t, acc) = train_baseline(&g, &ds, &ds, &cfg, &mut rng).unwrap();
            (t.params, acc)
        };
        let (p1, a1) = build();
        let (p2, a2) = build();
        assert_eq!(p1, p2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn softmax_xent_matches_hand_case() {
        // uniform logits → loss = ln(C)
        let logits = Tensor::zeros(vec![2, 4]);
        let (loss, grad) = softmax_xent(&logits, &[1, 3]).unwrap();
        assert!((loss - (4.0f64).ln()).abs() < 1e-7);
        // gradient rows sum to zero
        for i in 0..2 {
            let s: f32 = grad.data()[i * 4..(i + 1) * 4].iter().sum();
            assert!(s.abs() < 1e-6);
        }
    }

    #[test]
    fn empty_eval_set_is_error() {
        let mut rng = Rng::from_seed(17);
        let g = ModelGraph::new(
            vec![l("fc", LayerKind::Linear { inp: 2, out: 2, bias: true })],
            vec![2],
            2,
            &mut rng,
        )
        .unwrap();
        let ds = DatasetHandle {
            images: Tensor::zeros(vec![0, 2]),
            labels: vec![],
            classes: 2,
        };
        assert!(matches!(evaluate(&g, &ds), Err(Error::Size(_))));
    }

    #[test]
    fn act_quant_applies_to_tapped_output() {
        let mut rng = Rng::from_seed(18);
        let mut g = ModelGraph::new(
            vec![
                l("fc", LayerKind::Linear { inp: 3, out: 3, bias: false }),
                l("r", LayerKind::Relu),
            ],
            vec![3],
            3,
            &mut rng,
        )
        .unwrap();
        let spec = QuantSpec::new(4, 0.1, false, 0.5).unwrap();
        g.act_quant.insert("r".into(), spec);
        let x = rng_normal(&mut rng, 0.0, 1.0, 6).reshape(vec![2, 3]).unwrap();
        let tapped = g.forward(&x, Some("r")).unwrap();
        for &v in tapped.data() {
            let k = (v / spec.scale).round();
            assert!((v - spec.scale * k).abs() < 1e-6);
            assert!((0.0..=spec.scale * spec.h as f32).contains(&v));
        }
    }
}
