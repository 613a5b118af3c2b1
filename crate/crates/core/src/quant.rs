//! Uniform quantizers: four static rounding rules, the trainable
//! attention-weighted rounder, and the rectified-sigmoid rounder used as a
//! calibration baseline.
//!
//! All rounders share the same dequantization contract: pick an integer k
//! on the grid, clip it to [l, h], return s·k. Ties in nearest-rounding
//! break half-to-even so results are platform-independent.

use crate::error::{Error, Result};
use crate::tensor::{gaussian_cdf, erf, rng_normal, Rng, Tensor};
use serde::{Deserialize, Serialize};

/// Uniform quantization grid: step `scale`, integer range [l, h].
///
/// `tau` is the rounding temperature in weight units; it controls both the
/// spread of the attention perturbation and the width of its gradient gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    pub scale: f32,
    pub l: i32,
    pub h: i32,
    pub signed: bool,
    pub tau: f32,
}

impl QuantSpec {
    pub fn new(bits: u32, scale: f32, signed: bool, tau: f32) -> Result<Self> {
        if !(2..=24).contains(&bits) {
            return Err(Error::Config(format!("bits must be in [2, 24], got {bits}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        let (l, h) = if signed {
            (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
        } else {
            (0, (1i64 << bits) - 1)
        };
        Ok(Self {
            bits,
            scale,
            l: l as i32,
            h: h as i32,
            signed,
            tau,
        })
    }

    pub fn with_scale(self, scale: f32) -> Result<Self> {
        Self::new(self.bits, scale, self.signed, self.tau)
    }

    pub fn with_tau(self, tau: f32) -> Result<Self> {
        Self::new(self.bits, self.scale, self.signed, tau)
    }

    fn clip(&self, k: f64) -> f64 {
        k.clamp(self.l as f64, self.h as f64)
    }

    /// w/s, with values that round-trip onto the grid within f32 noise
    /// snapped to their integer. Keeps floor/ceil/stochastic idempotent on
    /// their own output (s·k rarely divides back to an exact integer in
    /// floating point).
    fn to_grid(&self, w: f32) -> f64 {
        let u = w as f64 / self.scale as f64;
        let r = u.round_ties_even();
        if (u - r).abs() <= 1e-6 * r.abs().max(1.0) {
            r
        } else {
            u
        }
    }

    fn dequant(&self, k: f64) -> f32 {
        self.scale * k as f32
    }
}

fn quantize_with(w: &Tensor, spec: &QuantSpec, pick: impl Fn(f64) -> f64) -> Tensor {
    w.map(|x| spec.dequant(spec.clip(pick(spec.to_grid(x)))))
}

/// s·clip(round(w/s), l, h), ties half-to-even.
pub fn quantize_nearest(w: &Tensor, spec: &QuantSpec) -> Tensor {
    quantize_with(w, spec, f64::round_ties_even)
}

pub fn quantize_floor(w: &Tensor, spec: &QuantSpec) -> Tensor {
    quantize_with(w, spec, f64::floor)
}

pub fn quantize_ceil(w: &Tensor, spec: &QuantSpec) -> Tensor {
    quantize_with(w, spec, f64::ceil)
}

/// Rounds each element up with probability frac(w/s), down otherwise,
/// then clips. Unbiased for unclipped inputs.
pub fn quantize_stochastic(w: &Tensor, spec: &QuantSpec, rng: &mut Rng) -> Tensor {
    w.map(|x| {
        let u = spec.to_grid(x);
        let f = u.floor();
        let frac = u - f;
        let k = if frac > 0.0 && rng.uniform() < frac {
            f + 1.0
        } else {
            f
        };
        spec.dequant(spec.clip(k))
    })
}

// ── Attention rounder ─────────────────────────────────────────────────

/// Trainable per-element rounding offset with its optimizer moments.
/// `alpha` lives on the integer grid axis and is never clipped.
#[derive(Debug, Clone)]
pub struct AlphaState {
    pub alpha: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step: usize,
}

/// Draws alpha ~ N(0, (τ/s)²) so that the induced distribution over grid
/// points matches the Gaussian bin-mass model at initialization.
pub fn attention_init(weight_shape: &[usize], spec: &QuantSpec, rng: &mut Rng) -> AlphaState {
    let n: usize = weight_shape.iter().product();
    let std = spec.tau as f64 / spec.scale as f64;
    let alpha = rng_normal(rng, 0.0, std, n)
        .reshape(weight_shape.to_vec())
        .expect("element count matches by construction");
    AlphaState {
        adam_m: Tensor::zeros(weight_shape.to_vec()),
        adam_v: Tensor::zeros(weight_shape.to_vec()),
        step: 0,
        alpha,
    }
}

/// s·clip(round(w/s + α), l, h), ties half-to-even.
pub fn attention_forward(w: &Tensor, spec: &QuantSpec, state: &AlphaState) -> Result<Tensor> {
    if w.shape() != state.alpha.shape() {
        return Err(Error::Shape(format!(
            "alpha shape {:?} does not match weight shape {:?}",
            state.alpha.shape(),
            w.shape()
        )));
    }
    let data = w
        .data()
        .iter()
        .zip(state.alpha.data())
        .map(|(&x, &a)| {
            let u = x as f64 / spec.scale as f64 + a as f64;
            spec.dequant(spec.clip(u.round_ties_even()))
        })
        .collect();
    Tensor::new(w.shape().to_vec(), data)
}

/// Gate factor in [0, 1] that attenuates the straight-through gradient of
/// alpha. The branch follows the sign of the upstream gradient: a positive
/// upstream (loss decreases by rounding down) passes freely when alpha is
/// already large, and is suppressed when alpha is very negative; the
/// negative branch mirrors it.
pub fn attention_grad_gate(alpha: f64, tau: f64, s: f64, upstream: f64) -> f64 {
    debug_assert!(tau > 0.0 && s > 0.0);
    let e = erf(alpha / (std::f64::consts::SQRT_2 * tau / s));
    if upstream > 0.0 {
        0.5 + 0.5 * e
    } else {
        0.5 - 0.5 * e
    }
}

/// ∂L/∂α given ∂L/∂ŵ. Straight-through across the round, zero where the
/// clip saturates, erf-gated per element by the upstream sign.
pub fn attention_alpha_grad(
    w: &Tensor,
    spec: &QuantSpec,
    state: &AlphaState,
    upstream: &Tensor,
) -> Result<Tensor> {
    if w.shape() != upstream.shape() || w.shape() != state.alpha.shape() {
        return Err(Error::Shape(format!(
            "gradient shapes disagree: w {:?}, alpha {:?}, upstream {:?}",
            w.shape(),
            state.alpha.shape(),
            upstream.shape()
        )));
    }
    let s = spec.scale as f64;
    let tau = spec.tau as f64;
    let data = w
        .data()
        .iter()
        .zip(state.alpha.data())
        .zip(upstream.data())
        .map(|((&x, &a), &g)| {
            let r = (x as f64 / s + a as f64).round_ties_even();
            if r < spec.l as f64 || r > spec.h as f64 {
                return 0.0;
            }
            let gz = g as f64 * s; // ∂L/∂z through ŵ = s·z
            (gz * attention_grad_gate(a as f64, tau, s, gz)) as f32
        })
        .collect();
    Tensor::new(w.shape().to_vec(), data)
}

/// Probability that scalar `w` lands on grid index `k` when perturbed by
/// the initialization noise: the mass of bin [s(k−½), s(k+½)] under
/// N(w, τ²). End bins absorb the tails, so the distribution sums to 1.
pub fn attention_map_probability(w: f64, spec: &QuantSpec, k: i32) -> Result<f64> {
    if k < spec.l || k > spec.h {
        return Err(Error::Domain(format!(
            "grid index {k} outside clip range [{}, {}]",
            spec.l, spec.h
        )));
    }
    let s = spec.scale as f64;
    let tau = spec.tau as f64;
    let upper = if k == spec.h {
        1.0
    } else {
        gaussian_cdf(s * (k as f64 + 0.5), w, tau)?
    };
    let lower = if k == spec.l {
        0.0
    } else {
        gaussian_cdf(s * (k as f64 - 0.5), w, tau)?
    };
    Ok((upper - lower).max(0.0))
}

// ── Rectified-sigmoid rounder (baseline) ──────────────────────────────

/// Per-element soft rounding variable V with its rectifier constants,
/// regularizer weight, annealed sharpness, and optimizer moments.
#[derive(Debug, Clone)]
pub struct AdaRoundState {
    pub v: Tensor,
    pub zeta: f32,
    pub gamma_r: f32,
    pub lambda: f32,
    pub beta: f32,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl AdaRoundState {
    /// V is initialized so that h(V) equals the fractional part of w/s,
    /// i.e. the soft rounder starts at the identity reconstruction.
    pub fn init(w: &Tensor, spec: &QuantSpec, zeta: f32, gamma_r: f32, lambda: f32) -> Self {
        let (z, g) = (zeta as f64, gamma_r as f64);
        let v = w.map(|x| {
            let frac = {
                let u = x as f64 / spec.scale as f64;
                u - u.floor()
            };
            // invert h(V) = sigmoid(V)·(ζ−γ)+γ at the rectifier's linear part
            let p = ((frac - g) / (z - g)).clamp(1e-4, 1.0 - 1e-4);
            (p / (1.0 - p)).ln() as f32
        });
        AdaRoundState {
            adam_m: Tensor::zeros(v.shape().to_vec()),
            adam_v: Tensor::zeros(v.shape().to_vec()),
            step: 0,
            v,
            zeta,
            gamma_r,
            lambda,
            beta: 20.0,
        }
    }
}

/// h(V) = clip(sigmoid(V)·(ζ−γ) + γ, 0, 1).
pub fn adaround_rectifier(v: &Tensor, zeta: f32, gamma_r: f32) -> Tensor {
    let (z, g) = (zeta as f64, gamma_r as f64);
    v.map(|x| ((sigmoid(x as f64) * (z - g) + g).clamp(0.0, 1.0)) as f32)
}

/// Σ 1 − |2h(V) − 1|^β: zero exactly when every h has hardened to 0 or 1.
pub fn adaround_reg(v: &Tensor, zeta: f32, gamma_r: f32, beta: f64) -> f64 {
    adaround_rectifier(v, zeta, gamma_r)
        .data()
        .iter()
        .map(|&h| 1.0 - (2.0 * h as f64 - 1.0).abs().powf(beta))
        .sum()
}

/// ∂reg/∂V (without the λ weight).
pub fn adaround_reg_grad(v: &Tensor, zeta: f32, gamma_r: f32, beta: f64) -> Tensor {
    let (z, g) = (zeta as f64, gamma_r as f64);
    v.map(|x| {
        let sg = sigmoid(x as f64);
        let pre = sg * (z - g) + g;
        if !(0.0..=1.0).contains(&pre) {
            return 0.0; // rectifier clipped: flat
        }
        let t = 2.0 * pre - 1.0;
        if t == 0.0 {
            return 0.0;
        }
        let dreg_dh = -beta * t.abs().powf(beta - 1.0) * t.signum() * 2.0;
        (dreg_dh * (z - g) * sg * (1.0 - sg)) as f32
    })
}

/// ŵ = s·clip(⌊w/s⌋ + h(V), l, h). Off the grid while h is soft.
pub fn adaround_forward(w: &Tensor, spec: &QuantSpec, state: &AdaRoundState) -> Result<Tensor> {
    if w.shape() != state.v.shape() {
        return Err(Error::Shape(format!(
            "V shape {:?} does not match weight shape {:?}",
            state.v.shape(),
            w.shape()
        )));
    }
    let h = adaround_rectifier(&state.v, state.zeta, state.gamma_r);
    let data = w
        .data()
        .iter()
        .zip(h.data())
        .map(|(&x, &hv)| {
            let u = spec.to_grid(x).floor() + hv as f64;
            spec.dequant(spec.clip(u))
        })
        .collect();
    Tensor::new(w.shape().to_vec(), data)
}

/// Final quantization: h snapped to {0, 1} at the 0.5 threshold.
pub fn adaround_harden(w: &Tensor, spec: &QuantSpec, state: &AdaRoundState) -> Result<Tensor> {
    if w.shape() != state.v.shape() {
        return Err(Error::Shape("V/weight shape mismatch".into()));
    }
    let h = adaround_rectifier(&state.v, state.zeta, state.gamma_r);
    let data = w
        .data()
        .iter()
        .zip(h.data())
        .map(|(&x, &hv)| {
            let up = if hv >= 0.5 { 1.0 } else { 0.0 };
            spec.dequant(spec.clip(spec.to_grid(x).floor() + up))
        })
        .collect();
    Tensor::new(w.shape().to_vec(), data)
}

/// Data-term ∂L/∂V given ∂L/∂ŵ: chain through the scale, the clip (zeroed
/// when saturated), and the rectifier's sigmoid slope (zeroed when the
/// rectifier itself clips).
pub fn adaround_v_grad(
    w: &Tensor,
    spec: &QuantSpec,
    state: &AdaRoundState,
    upstream: &Tensor,
) -> Result<Tensor> {
    if w.shape() != upstream.shape() || w.shape() != state.v.shape() {
        return Err(Error::Shape("V gradient shape mismatch".into()));
    }
    let s = spec.scale as f64;
    let (z, g) = (state.zeta as f64, state.gamma_r as f64);
    let data = w
        .data()
        .iter()
        .zip(state.v.data())
        .zip(upstream.data())
        .map(|((&x, &v), &up)| {
            let sg = sigmoid(v as f64);
            let pre = sg * (z - g) + g;
            if !(0.0..=1.0).contains(&pre) {
                return 0.0;
            }
            let u = spec.to_grid(x).floor() + pre;
            if u < spec.l as f64 || u > spec.h as f64 {
                return 0.0;
            }
            (up as f64 * s * (z - g) * sg * (1.0 - sg)) as f32
        })
        .collect();
    Tensor::new(w.shape().to_vec(), data)
}

// ── Rounder selection ─────────────────────────────────────────────────

/// Which rounding rule a quantization run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounder {
    Nearest,
    Floor,
    Ceil,
    Stochastic,
    Attention,
    Adaround,
}

impl Rounder {
    pub const ALL: [Rounder; 6] = [
        Rounder::Nearest,
        Rounder::Floor,
        Rounder::Ceil,
        Rounder::Stochastic,
        Rounder::Attention,
        Rounder::Adaround,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rounder::Nearest => "nearest",
            Rounder::Floor => "floor",
            Rounder::Ceil => "ceil",
            Rounder::Stochastic => "stochastic",
            Rounder::Attention => "attention",
            Rounder::Adaround => "adaround",
        }
    }

    /// True for the two rounders that run calibration.
    pub fn is_trained(self) -> bool {
        matches!(self, Rounder::Attention | Rounder::Adaround)
    }
}

impl std::str::FromStr for Rounder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Rounder::Nearest),
            "floor" => Ok(Rounder::Floor),
            "ceil" => Ok(Rounder::Ceil),
            "stochastic" => Ok(Rounder::Stochastic),
            "attention" => Ok(Rounder::Attention),
            "adaround" => Ok(Rounder::Adaround),
            other => Err(Error::Config(format!(
                "unknown rounder '{other}' (expected nearest|floor|ceil|stochastic|attention|adaround)"
            ))),
        }
    }
}

impl std::fmt::Display for Rounder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
