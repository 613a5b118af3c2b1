//! Mixed-precision bit allocation.
//!
//! Each layer's weight matrix gets an information measure — the lossy
//! coding length of its column vectors under distortion ε² — and layers
//! are clustered on that measure by an exact 1-D k-means; ascending
//! cluster centers map to the ascending candidate bit widths.

use crate::error::{Error, Result};
use crate::graph::{LayerKind, ModelGraph};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The two prefactor conventions for the coding-length formula. They give
/// different cross-layer orderings because (m+n)/2 varies per layer, so
/// the choice is explicit configuration rather than a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Prefactor {
    #[default]
    Full,
    Half,
}

impl std::str::FromStr for Prefactor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Prefactor::Full),
            "half" => Ok(Prefactor::Half),
            other => Err(Error::Config(format!(
                "unknown prefactor '{other}' (expected full|half)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingConfig {
    pub epsilon: f64,
    pub prefactor: Prefactor,
    pub center: bool,
}

impl Default for CodingConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            prefactor: Prefactor::Full,
            center: true,
        }
    }
}

impl CodingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Arranges a layer's weights as an n×m matrix whose m columns are the
/// per-output-unit (per-filter) weight vectors, optionally subtracting
/// the column mean so the zero-mean assumption of the measure holds.
pub fn reshape_for_coding(kind: &LayerKind, w: &Tensor, center: bool) -> Result<Tensor> {
    let (n, m) = match kind {
        LayerKind::Linear { inp, out, .. } => (*inp, *out),
        LayerKind::Conv2d {
            in_ch, out_ch, k, ..
        } => (in_ch * k * k, *out_ch),
        other => {
            return Err(Error::Capability(format!(
                "layer kind {other:?} carries no quantizable weight"
            )))
        }
    };
    if w.numel() != n * m {
        return Err(Error::Shape(format!(
            "weight has {} elements, expected {n}×{m}",
            w.numel()
        )));
    }
    // stored weight is [m, n] (out-major); transpose to columns-as-filters
    let mut data = vec![0.0f32; n * m];
    for j in 0..m {
        for i in 0..n {
            data[i * m + j] = w.data()[j * n + i];
        }
    }
    if center {
        for i in 0..n {
            let row = &mut data[i * m..(i + 1) * m];
            let mean = (row.iter().map(|&v| v as f64).sum::<f64>() / m as f64) as f32;
            row.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Tensor::new(vec![n, m], data)
}

/// Which Gram matrix the log-determinant is evaluated on. `Auto` picks
/// the smaller side; the two agree by the Weinstein–Aronszajn identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSide {
    Auto,
    Rows,
    Cols,
}

/// Coding length in bits: prefactor · log₂ det(I + n/(m·ε²)·W·Wᵀ).
pub fn coding_length(w: &Tensor, cfg: &CodingConfig) -> Result<f64> {
    coding_length_side(w, cfg, GramSide::Auto)
}

pub fn coding_length_side(w: &Tensor, cfg: &CodingConfig, side: GramSide) -> Result<f64> {
    cfg.validate()?;
    if w.rank() != 2 {
        return Err(Error::Shape(format!(
            "coding length needs a matrix, got {:?}",
            w.shape()
        )));
    }
    if !w.is_finite() {
        return Err(Error::Domain("weight matrix has non-finite entries".into()));
    }
    let (n, m) = (w.shape()[0], w.shape()[1]);
    if n == 0 || m == 0 {
        return Ok(0.0);
    }
    let c = n as f64 / (m as f64 * cfg.epsilon * cfg.epsilon);
    let use_rows = match side {
        GramSide::Rows => true,
        GramSide::Cols => false,
        GramSide::Auto => n <= m,
    };
    let dim = if use_rows { n } else { m };
    let mut gram = vec![0.0f64; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut acc = 0.0f64;
            if use_rows {
                for k in 0..m {
                    acc += w.data()[i * m + k] as f64 * w.data()[j * m + k] as f64;
                }
            } else {
                for k in 0..n {
                    acc += w.data()[k * m + i] as f64 * w.data()[k * m + j] as f64;
                }
            }
            let v = c * acc + if i == j { 1.0 } else { 0.0 };
            gram[i * dim + j] = v;
            gram[j * dim + i] = v;
        }
    }
    let log2_det = cholesky_log2_det(&mut gram, dim)?;
    let pre = match cfg.prefactor {
        Prefactor::Full => (m + n) as f64 / 2.0,
        Prefactor::Half => 0.5,
    };
    Ok((pre * log2_det).max(0.0))
}

/// In-place Cholesky factorization of a symmetric positive-definite
/// matrix, returning log₂ of its determinant.
fn cholesky_log2_det(a: &mut [f64], n: usize) -> Result<f64> {
    let mut log2_det = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Domain(format!(
                        "matrix not positive definite (pivot {s} at {i})"
                    )));
                }
                let d = s.sqrt();
                a[i * n + i] = d;
                log2_det += 2.0 * d.log2();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    Ok(log2_det)
}

/// Globally optimal 1-D k-means on pre-sorted values via dynamic
/// programming over contiguous segments. Returns per-value cluster labels
/// (nondecreasing) and the k cluster means (ascending).
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = values.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cannot split {n} values into {k} clusters"
        )));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("values must be sorted ascending".into()));
    }
    // prefix sums for O(1) segment SSE
    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (i, &v) in values.iter().enumerate() {
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    let sse = |a: usize, b: usize| {
        // values[a..b]
        let len = (b - a) as f64;
        let sum = s1[b] - s1[a];
        ((s2[b] - s2[a]) - sum * sum / len).max(0.0)
    };
    let inf = f64::INFINITY;
    // cost[c][i]: best SSE of values[0..i] using c+1 clusters
    let mut cost = vec![vec![inf; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for i in 1..=n {
        cost[0][i] = sse(0, i);
    }
    for c in 1..k {
        for i in (c + 1)..=n {
            for p in c..i {
                let cand = cost[c - 1][p] + sse(p, i);
                if cand < cost[c][i] {
                    cost[c][i] = cand;
                    split[c][i] = p;
                }
            }
        }
    }
    let mut bounds = vec![n; k + 1];
    bounds[0] = 0;
    let mut end = n;
    for c in (1..k).rev() {
        let p = split[c][end];
        bounds[c] = p;
        end = p;
    }
    let mut labels = vec![0usize; n];
    let mut centers = Vec::with_capacity(k);
    for c in 0..k {
        let (a, b) = (bounds[c], bounds[c + 1]);
        for l in &mut labels[a..b] {
            *l = c;
        }
        centers.push((s1[b] - s1[a]) / (b - a) as f64);
    }
    Ok((labels, centers))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLength {
    pub layer: String,
    pub coding_length: f64,
}

/// Per-layer bit widths plus the evidence they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAssignment {
    pub bits: BTreeMap<String, u32>,
    /// coding lengths sorted ascending, as clustered
    pub lengths: Vec<LayerLength>,
    pub centers: Vec<f64>,
}

/// Clusters named coding lengths into `bit_list.len()` groups and maps
/// ascending cluster centers to ascending bits. Clusters whose centers
/// tie all receive the largest bit of the tied group.
pub fn assign_bits_to_lengths(
    lengths: &[(String, f64)],
    bit_list: &[u32],
) -> Result<BitAssignment> {
    if bit_list.is_empty() || bit_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "bit list must be nonempty and strictly ascending, got {bit_list:?}"
        )));
    }
    if lengths.len() < bit_list.len() {
        return Err(Error::Config(format!(
            "{} layers cannot fill {} bit clusters",
            lengths.len(),
            bit_list.len()
        )));
    }
    let mut sorted: Vec<(String, f64)> = lengths.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let values: Vec<f64> = sorted.iter().map(|(_, v)| *v).collect();
    let (labels, centers) = kmeans_1d(&values, bit_list.len())?;

    // resolve degenerate ties toward the larger width
    let mut cluster_bits: Vec<u32> = bit_list.to_vec();
    let k = centers.len();
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && centers[j + 1] == centers[i] {
            j += 1;
        }
        for b in &mut cluster_bits[i..=j] {
            *b = bit_list[j];
        }
        i = j + 1;
    }

    let mut bits = BTreeMap::new();
    for ((name, _), &label) in sorted.iter().zip(&labels) {
        bits.insert(name.clone(), cluster_bits[label]);
    }
    Ok(BitAssignment {
        bits,
        lengths: sorted
            .into_iter()
            .map(|(layer, coding_length)| LayerLength {
                layer,
                coding_length,
            })
            .collect(),
        centers,
    })
}

/// Computes every quantizable layer's coding length and allocates bits.
pub fn assign_bits(
    model: &ModelGraph,
    bit_list: &[u32],
    cfg: &CodingConfig,
) -> Result<BitAssignment> {
    cfg.validate()?;
    let mut lengths = Vec::new();
    for idx in model.weight_layers() {
        let layer = &model.layers[idx];
        let w = model
            .params
            .get(&crate::graph::wkey(&layer.name))
            .ok_or_else(|| Error::Lookup(format!("missing weight for '{}'", layer.name)))?;
        let mat = reshape_for_coding(&layer.kind, w, cfg.center)?;
        lengths.push((layer.name.clone(), coding_length(&mat, cfg)?));
    }
    assign_bits_to_lengths(&lengths, bit_list)
}
