//! Codebook fine-tuning with masked gradients.
//!
//! Assignments and masks stay frozen. The forward pass rebuilds every
//! subvector as `c[a_j] * bm_j`; the backward pass folds per-weight gradients
//! into per-codeword gradients with the same masked average used by the
//! k-means update: for codeword `i` and coordinate `t`,
//! `sum_p g_pt * n_pt / sum_p n_pt` over the subvectors `p` assigned to `i`.
//!
//! Because of the coverage denominator this is the gradient of the
//! coverage-normalized loss `sum_p ||(v_p - c_i) * n_p||^2 / (2 * coverage)`,
//! not the raw chain-rule sum.

use crate::clustering::{masked_sums, Assignments, Codebook};
use crate::error::{Error, Result};
use crate::quantization::{dequantize_codebook, quantize_codebook, ScaleMode};
use crate::sparsity::BitmaskMatrix;
use crate::tensor::GroupedMatrix;

/// `k x d` aggregated gradients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CodewordGradient {
    k: usize,
    d: usize,
    data: Vec<f64>,
}

impl CodewordGradient {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn check_frozen(a: &Assignments, bm: &BitmaskMatrix, k: usize, d: usize) -> Result<()> {
    if bm.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "mask width {} vs codeword length {d}",
            bm.d()
        )));
    }
    if a.len() != bm.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} mask rows",
            a.len(),
            bm.rows()
        )));
    }
    a.check_bounds(k)
}

/// Row `j` of the result is `c[a_j] * bm_j`.
pub fn reconstruct_for_forward(
    c: &Codebook,
    a: &Assignments,
    bm: &BitmaskMatrix,
) -> Result<GroupedMatrix> {
    check_frozen(a, bm, c.k(), c.d())?;
    let d = c.d();
    let mut data = Vec::with_capacity(a.len() * d);
    for j in 0..a.len() {
        let cw = c.codeword(a.get(j));
        data.extend(
            cw.iter()
                .zip(bm.row(j))
                .map(|(&v, &keep)| if keep { v } else { 0.0 }),
        );
    }
    GroupedMatrix::from_flat(a.len(), d, data)
}

/// Forward reconstruction through a `bits`-bit quantized copy of the
/// codebook. Gradients still flow to the real codebook (straight-through).
pub fn reconstruct_for_forward_quantized(
    c: &Codebook,
    a: &Assignments,
    bm: &BitmaskMatrix,
    bits: u32,
    mode: ScaleMode,
) -> Result<GroupedMatrix> {
    let q = dequantize_codebook(&quantize_codebook(c, bits, mode)?);
    reconstruct_for_forward(&q, a, bm)
}

/// Masked average of the per-weight gradients of each codeword's members.
/// Codewords with no members and coordinates no mask covers get zero.
pub fn aggregate_codeword_grads(
    weight_grads: &GroupedMatrix,
    a: &Assignments,
    bm: &BitmaskMatrix,
    k: usize,
) -> Result<CodewordGradient> {
    let d = weight_grads.d();
    check_frozen(a, bm, k, d)?;
    if weight_grads.rows() != a.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient rows for {} assignments",
            weight_grads.rows(),
            a.len()
        )));
    }
    let (sums, cover, _) = masked_sums(weight_grads.data(), bm.bits(), d, a, k);
    let data = sums
        .iter()
        .zip(&cover)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    Ok(CodewordGradient { k, d, data })
}

/// Heavy-ball momentum buffer for [`sgd_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    momentum: f64,
    velocity: Vec<f64>,
}

impl MomentumState {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: Vec::new(),
        }
    }
}

/// `c - lr * v` where `v = grad` without momentum, or `v <- mu * v + grad`
/// with it.
pub fn sgd_step(
    c: &Codebook,
    grad: &CodewordGradient,
    lr: f64,
    momentum: Option<&mut MomentumState>,
) -> Result<Codebook> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grad.k != c.k() || grad.d != c.d() {
        return Err(Error::DimensionMismatch(format!(
            "gradient {}x{} vs codebook {}x{}",
            grad.k,
            grad.d,
            c.k(),
            c.d()
        )));
    }
    let step: Vec<f64> = match momentum {
        None => grad.data.clone(),
        Some(state) => {
            if state.velocity.len() != grad.data.len() {
                state.velocity = vec![0.0; grad.data.len()];
            }
            for (v, g) in state.velocity.iter_mut().zip(&grad.data) {
                *v = state.momentum * *v + g;
            }
            state.velocity.clone()
        }
    };
    let data = c
        .data()
        .iter()
        .zip(&step)
        .map(|(w, s)| w - lr * s)
        .collect();
    Codebook::new(c.k(), c.d(), data)
}
