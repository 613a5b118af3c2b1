//! Post-training calibration: MSE scale search, per-layer reconstruction
//! training of the rounding parameters, activation-range calibration, and
//! the sequential whole-model quantization pipeline.
//!
//! Each layer is calibrated against its own full-precision output, with
//! inputs propagated through the already-quantized prefix so later layers
//! compensate accumulated error. Temperature in `HyperParams` is measured
//! in grid steps; the per-layer quantizer receives `tau × scale` so the
//! perturbation width tracks each layer's own grid.

use crate::error::{Error, Result};
use crate::graph::{wkey, weight_forward, weight_grad_w, LayerKind, ModelGraph};
use crate::quant::{
    adaround_forward, adaround_harden, adaround_reg_grad, adaround_v_grad,
    attention_alpha_grad, attention_forward, attention_init, quantize_ceil, quantize_floor,
    quantize_nearest, quantize_stochastic, AdaRoundState, AlphaState, QuantSpec, Rounder,
};
use crate::tensor::{Rng, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

/// Constants for the rectified-sigmoid baseline rounder. The optimizer,
/// step size, batch size and iteration budget are shared with the
/// attention rounder (`HyperParams`), so rounder comparisons differ only
/// in the rounding function itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdaRoundParams {
    pub zeta: f32,
    pub gamma: f32,
    pub lambda: f32,
    pub beta_start: f64,
    pub beta_end: f64,
    /// fraction of iterations spent on reconstruction only, before the
    /// hardening regularizer switches on
    pub warmup: f64,
}

impl Default for AdaRoundParams {
    fn default() -> Self {
        Self {
            zeta: 1.1,
            gamma: -0.1,
            lambda: 0.01,
            beta_start: 20.0,
            beta_end: 2.0,
            warmup: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
    pub calib_size: usize,
    /// rounding temperature in grid steps (the quantizer sees tau·scale)
    pub tau: f32,
    pub first_last_bits: u32,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub adaround: AdaRoundParams,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lr: 4e-4,
            iters: 2000,
            batch: 64,
            calib_size: 1024,
            tau: 0.5,
            first_last_bits: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            adaround: AdaRoundParams::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.batch == 0 || self.calib_size == 0 {
            return Err(Error::Config("iters, batch, calib_size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "lr must be ≥ 0 and tau > 0, got lr={} tau={}",
                self.lr, self.tau
            )));
        }
        Ok(())
    }
}

/// Raw-gradient magnitudes seen during the first recorded steps, split by
/// where alpha sits relative to the gate width. The far bucket counts only
/// gradients that push alpha further from zero — the direction the gate is
/// meant to attenuate.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GateStats {
    pub mean_grad_far_out: f64,
    pub far_out_count: usize,
    pub mean_grad_near: f64,
    pub near_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibRecord {
    pub layer: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// (step, batch loss) samples along the run
    pub trajectory: Vec<(usize, f64)>,
    pub seconds: f64,
    pub gate: Option<GateStats>,
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.numel().max(1);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / n as f64
}

fn mse_grad(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    let n = pred.numel().max(1);
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut loss = 0.0f64;
    for i in 0..pred.numel() {
        let d = pred.data()[i] as f64 - target.data()[i] as f64;
        loss += d * d;
        grad.data_mut()[i] = (2.0 * d / n as f64) as f32;
    }
    (loss / n as f64, grad)
}

fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    step: usize,
    hyper: &HyperParams,
    lr: f64,
) {
    let (b1, b2, eps) = (hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps);
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    for i in 0..param.numel() {
        let g = grad.data()[i] as f64;
        let mi = b1 * m.data()[i] as f64 + (1.0 - b1) * g;
        let vi = b2 * v.data()[i] as f64 + (1.0 - b2) * g * g;
        m.data_mut()[i] = mi as f32;
        v.data_mut()[i] = vi as f32;
        let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
        param.data_mut()[i] -= update as f32;
    }
}

// ── Scale search ──────────────────────────────────────────────────────

const SCALE_GRID: usize = 100;

/// Minimizes ‖W − nearest(W, s)‖² over a 100-point grid of scales
/// spanning [0.2·m, m], m = max|W| / max(|l|, h). All-zero weights get
/// the canonical s = 1.
pub fn search_scale(w: &Tensor, bits: u32, signed: bool) -> Result<f32> {
    let max_abs = w.max_abs();
    if max_abs == 0.0 {
        return Ok(1.0);
    }
    let probe = QuantSpec::new(bits, 1.0, signed, 0.5)?;
    let denom = (probe.l.unsigned_abs()).max(probe.h as u32) as f32;
    let m = max_abs / denom;
    let mut best = (f64::INFINITY, m);
    for i in 0..SCALE_GRID {
        let s = m * (0.2 + 0.8 * i as f32 / (SCALE_GRID - 1) as f32);
        let spec = probe.with_scale(s)?;
        let q = quantize_nearest(w, &spec);
        let err: f64 = w
            .data()
            .iter()
            .zip(q.data())
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        if err < best.0 {
            best = (err, s);
        }
    }
    Ok(best.1)
}

// ── Per-layer calibration ─────────────────────────────────────────────

const EVAL_EVERY: usize = 20;
const GATE_STEPS: usize = 100;

struct ProbeSet {
    x: Tensor,
    y_fp: Tensor,
}

fn make_probe(kind: &LayerKind, w: &Tensor, x_cal: &Tensor, batch: usize) -> Result<ProbeSet> {
    let n = x_cal.shape()[0];
    let idx: Vec<usize> = (0..batch.min(n)).collect();
    let x = x_cal.gather_samples(&idx);
    let y_fp = weight_forward(kind, &x, w)?;
    Ok(ProbeSet { x, y_fp })
}

/// Trains the attention rounder's alpha on layer-output reconstruction.
/// Returns the best-snapshot state (never worse than initialization on
/// the probe batch) and the run record.
pub fn calibrate_layer(
    kind: &LayerKind,
    w: &Tensor,
    x_cal: &Tensor,
    spec: &QuantSpec,
    hyper: &HyperParams,
    rng: &mut Rng,
    layer_name: &str,
) -> Result<(AlphaState, CalibRecord)> {
    hyper.validate()?;
    let t0 = Instant::now();
    let n = x_cal.shape()[0];
    if n == 0 {
        return Err(Error::Calibration {
            layer: layer_name.into(),
            reason: "no calibration inputs".into(),
        });
    }
    let bs = hyper.batch.min(n);
    let mut state = attention_init(w.shape(), spec, rng);
    let probe = make_probe(kind, w, x_cal, bs)?;
    let eval = |st: &AlphaState| -> Result<f64> {
        let wq = attention_forward(w, spec, st)?;
        Ok(mse(&weight_forward(kind, &probe.x, &wq)?, &probe.y_fp))
    };

    let initial_loss = eval(&state)?;
    // Track the best probe loss seen, seeded with the plain round-to-nearest
    // candidate (alpha = 0) so the result is never worse than not training.
    let zero = AlphaState {
        alpha: Tensor::zeros(w.shape().to_vec()),
        ..state.clone()
    };
    let nearest_loss = eval(&zero)?;
    let mut best = if nearest_loss < initial_loss {
        (nearest_loss, zero.alpha)
    } else {
        (initial_loss, state.alpha.clone())
    };
    let mut trajectory = vec![(0usize, initial_loss)];
    let traj_every = (hyper.iters / 50).max(1);
    let gate_width = (spec.tau / spec.scale) as f64;
    let mut far = (0.0f64, 0usize);
    let mut near = (0.0f64, 0usize);

    for step in 1..=hyper.iters {
        let idx: Vec<usize> = (0..bs).map(|_| rng.below(n)).collect();
        let xb = x_cal.gather_samples(&idx);
        let y = weight_forward(kind, &xb, w)?;
        let wq = attention_forward(w, spec, &state)?;
        let (loss, dy) = mse_grad(&weight_forward(kind, &xb, &wq)?, &y);
        if !loss.is_finite() {
            return Err(Error::Calibration {
                layer: layer_name.into(),
                reason: format!("non-finite reconstruction loss at step {step}"),
            });
        }
        let dw = weight_grad_w(kind, &xb, &dy)?;
        let galpha = attention_alpha_grad(w, spec, &state, &dw)?;
        if step <= GATE_STEPS {
            for (&a, &g) in state.alpha.data().iter().zip(galpha.data()) {
                let (a, g) = (a as f64, g as f64);
                if a.abs() > 3.0 * gate_width && g * a < 0.0 {
                    far.0 += g.abs();
                    far.1 += 1;
                } else if a.abs() < gate_width {
                    near.0 += g.abs();
                    near.1 += 1;
                }
            }
        }
        adam_step(
            &mut state.alpha,
            &galpha,
            &mut state.adam_m,
            &mut state.adam_v,
            step,
            hyper,
            hyper.lr,
        );
        state.step = step;
        if step % traj_every == 0 {
            trajectory.push((step, loss));
        }
        if step % EVAL_EVERY == 0 || step == hyper.iters {
            let l = eval(&state)?;
            if l < best.0 {
                best = (l, state.alpha.clone());
            }
        }
    }
    state.alpha = best.1;
    let record = CalibRecord {
        layer: layer_name.into(),
        initial_loss,
        final_loss: best.0,
        trajectory,
        seconds: t0.elapsed().as_secs_f64(),
        gate: Some(GateStats {
            mean_grad_far_out: if far.1 > 0 { far.0 / far.1 as f64 } else { 0.0 },
            far_out_count: far.1,
            mean_grad_near: if near.1 > 0 { near.0 / near.1 as f64 } else { 0.0 },
            near_count: near.1,
        }),
    };
    Ok((state, record))
}

/// Trains the rectified-sigmoid baseline: reconstruction plus the
/// annealed hardening regularizer, Adam on V, snapshotting on hardened
/// probe loss (whose step-0 value equals nearest rounding). Returns the
/// hardened weights, the final soft state, and the record.
pub fn calibrate_adaround_layer(
    kind: &LayerKind,
    w: &Tensor,
    x_cal: &Tensor,
    spec: &QuantSpec,
    hyper: &HyperParams,
    rng: &mut Rng,
    layer_name: &str,
) -> Result<(Tensor, AdaRoundState, CalibRecord)> {
    hyper.validate()?;
    let t0 = Instant::now();
    let p = hyper.adaround;
    let n = x_cal.shape()[0];
    if n == 0 {
        return Err(Error::Calibration {
            layer: layer_name.into(),
            reason: "no calibration inputs".into(),
        });
    }
    let bs = hyper.batch.min(n);
    let mut state = AdaRoundState::init(w, spec, p.zeta, p.gamma, p.lambda);
    let probe = make_probe(kind, w, x_cal, bs)?;
    let eval_hard = |st: &AdaRoundState| -> Result<f64> {
        let wq = adaround_harden(w, spec, st)?;
        Ok(mse(&weight_forward(kind, &probe.x, &wq)?, &probe.y_fp))
    };

    let initial_loss = eval_hard(&state)?;
    let mut best = (initial_loss, state.v.clone());
    let mut trajectory = vec![(0usize, initial_loss)];
    let traj_every = (hyper.iters / 50).max(1);
    let warmup_steps = ((hyper.iters as f64) * p.warmup).round() as usize;

    for step in 1..=hyper.iters {
        let annealing = step > warmup_steps;
        if annealing {
            let frac = (step - warmup_steps) as f64 / (hyper.iters - warmup_steps).max(1) as f64;
            state.beta = (p.beta_start + (p.beta_end - p.beta_start) * frac) as f32;
        }
        let idx: Vec<usize> = (0..bs).map(|_| rng.below(n)).collect();
        let xb = x_cal.gather_samples(&idx);
        let y = weight_forward(kind, &xb, w)?;
        let wq = adaround_forward(w, spec, &state)?;
        let (loss, dy) = mse_grad(&weight_forward(kind, &xb, &wq)?, &y);
        if !loss.is_finite() {
            return Err(Error::Calibration {
                layer: layer_name.into(),
                reason: format!("non-finite reconstruction loss at step {step}"),
            });
        }
        let dw = weight_grad_w(kind, &xb, &dy)?;
        let mut gv = adaround_v_grad(w, spec, &state, &dw)?;
        if annealing {
            let reg_grad = adaround_reg_grad(&state.v, state.zeta, state.gamma_r, state.beta as f64);
            for (g, &r) in gv.data_mut().iter_mut().zip(reg_grad.data()) {
                *g += state.lambda * r;
            }
        }
        let (mut v, mut am, mut av) = (state.v, state.adam_m, state.adam_v);
        adam_step(&mut v, &gv, &mut am, &mut av, step, hyper, hyper.lr);
        state.v = v;
        state.adam_m = am;
        state.adam_v = av;
        state.step = step;
        if step % traj_every == 0 {
            trajectory.push((step, loss));
        }
        if step % EVAL_EVERY == 0 || step == hyper.iters {
            let l = eval_hard(&state)?;
            if l < best.0 {
                best = (l, state.v.clone());
            }
        }
    }
    let mut final_state = state.clone();
    final_state.v = best.1;
    let hard = adaround_harden(w, spec, &final_state)?;
    let record = CalibRecord {
        layer: layer_name.into(),
        initial_loss,
        final_loss: best.0,
        trajectory,
        seconds: t0.elapsed().as_secs_f64(),
        gate: None,
    };
    Ok((hard, state, record))
}

// ── Activation calibration ────────────────────────────────────────────

/// Picks a quantizer for an activation tensor by the same 100-point MSE
/// grid search used for weights.
pub fn activation_spec(values: &Tensor, bits: u32, signed: bool, tau_steps: f32) -> Result<QuantSpec> {
    let scale = search_scale(values, bits, signed)?;
    QuantSpec::new(bits, scale, signed, (tau_steps * scale).max(f32::MIN_POSITIVE))
}

/// The layer whose output feeds the rest of the network once `idx`'s
/// weight has acted: the tail of any ReLU chain directly after it.
fn act_edge(model: &ModelGraph, idx: usize) -> usize {
    let mut edge = idx;
    while edge + 1 < model.layers.len()
        && matches!(model.layers[edge + 1].kind, LayerKind::Relu)
    {
        edge += 1;
    }
    edge
}

/// Chooses static per-tensor activation quantizers for every weight
/// layer's output edge. Post-ReLU tensors get unsigned grids, raw affine
/// outputs signed ones.
pub fn calibrate_activations(
    model: &ModelGraph,
    x_cal: &Tensor,
    bits_act: u32,
    tau_steps: f32,
) -> Result<BTreeMap<String, QuantSpec>> {
    let mut specs = BTreeMap::new();
    for idx in model.weight_layers() {
        let edge = act_edge(model, idx);
        let name = model.layers[edge].name.clone();
        let acts = model.forward(x_cal, Some(&name))?;
        let signed = edge == idx; // ReLU output is nonnegative
        specs.insert(name, activation_spec(&acts, bits_act, signed, tau_steps)?);
    }
    Ok(specs)
}

// ── Whole-model quantization ──────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizeOptions {
    pub rounder: Rounder,
    /// activation bit width; None leaves activations in floating point
    pub act_bits: Option<u32>,
}

/// Quantizes every weight layer in order, calibrating each against the
/// outputs of the already-quantized prefix. First and last weight layers
/// are pinned to `hyper.first_last_bits`. Activation quantizers, when
/// requested, are fitted right after each layer and applied to everything
/// downstream.
pub fn quantize_model(
    model: &ModelGraph,
    calib: &Tensor,
    bits: &BTreeMap<String, u32>,
    hyper: &HyperParams,
    opts: &QuantizeOptions,
) -> Result<(ModelGraph, Vec<CalibRecord>)> {
    hyper.validate()?;
    if model
        .layers
        .iter()
        .any(|l| matches!(l.kind, LayerKind::BatchNorm { .. }))
    {
        return Err(Error::Structure(
            "fuse batch norm before quantization".into(),
        ));
    }
    if calib.shape()[0] == 0 {
        return Err(Error::Size("calibration set is empty".into()));
    }
    let weight_idx = model.weight_layers();
    for &i in &weight_idx {
        let name = &model.layers[i].name;
        if !bits.contains_key(name) {
            return Err(Error::Config(format!(
                "bit assignment is missing layer '{name}'"
            )));
        }
    }
    let mut rng = Rng::from_seed(hyper.seed);
    let mut out = model.clone();
    let mut records = Vec::new();

    let mut act = calib.clone();
    let mut next_layer = 0usize; // first layer `act` has not passed yet
    let (first, last) = (weight_idx[0], *weight_idx.last().unwrap());

    for &idx in &weight_idx {
        while next_layer < idx {
            act = out.apply_layer(next_layer, &act, None)?;
            next_layer += 1;
        }
        let name = out.layers[idx].name.clone();
        let kind = out.layers[idx].kind.clone();
        let layer_bits = if idx == first || idx == last {
            hyper.first_last_bits
        } else {
            bits[&name]
        };
        let w = out.params[&wkey(&name)].clone();
        let scale = search_scale(&w, layer_bits, true)?;
        let spec = QuantSpec::new(layer_bits, scale, true, hyper.tau * scale)?;
        let mut layer_rng = rng.fork();

        let t0 = Instant::now();
        let (wq, record) = match opts.rounder {
            Rounder::Nearest | Rounder::Floor | Rounder::Ceil | Rounder::Stochastic => {
                let wq = match opts.rounder {
                    Rounder::Nearest => quantize_nearest(&w, &spec),
                    Rounder::Floor => quantize_floor(&w, &spec),
                    Rounder::Ceil => quantize_ceil(&w, &spec),
                    _ => quantize_stochastic(&w, &spec, &mut layer_rng),
                };
                let probe = make_probe(&kind, &w, &act, hyper.batch)?;
                let loss = mse(&weight_forward(&kind, &probe.x, &wq)?, &probe.y_fp);
                let record = CalibRecord {
                    layer: name.clone(),
                    initial_loss: loss,
                    final_loss: loss,
                    trajectory: vec![(0, loss)],
                    seconds: t0.elapsed().as_secs_f64(),
                    gate: None,
                };
                (wq, record)
            }
            Rounder::Attention => {
                let (state, record) =
                    calibrate_layer(&kind, &w, &act, &spec, hyper, &mut layer_rng, &name)?;
                (attention_forward(&w, &spec, &state)?, record)
            }
            Rounder::Adaround => {
                let (wq, _state, record) =
                    calibrate_adaround_layer(&kind, &w, &act, &spec, hyper, &mut layer_rng, &name)?;
                (wq, record)
            }
        };
        out.params.insert(wkey(&name), wq);
        out.weight_quant.insert(name.clone(), spec);
        records.push(record);

        // advance through this layer with its new weights
        act = out.apply_layer(idx, &act, None)?;
        next_layer = idx + 1;

        if let Some(abits) = opts.act_bits {
            let edge = act_edge(&out, idx);
            while next_layer <= edge {
                act = out.apply_layer(next_layer, &act, None)?;
                next_layer += 1;
            }
            let edge_name = out.layers[edge].name.clone();
            let aspec = activation_spec(&act, abits, edge == idx, hyper.tau)?;
            act = quantize_nearest(&act, &aspec);
            out.act_quant.insert(edge_name, aspec);
        }
    }
    Ok((out, records))
}
