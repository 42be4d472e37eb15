//! Differentiable beamforming constructions on batched tensors.
//!
//! Channels are `[B, N_t, K]` complex nodes, powers `[B, K]` real nodes and
//! the returned beams `[B, N_t, K]`. Each function matches its counterpart in
//! the parent module sample by sample.

use alloc::vec::Vec;

use super::DirectionWeighting;
use crate::autodiff::{CTensor, Graph, NodeId};
use crate::linalg::{CMat, C64, ZERO};
use crate::{Error, Result};

/// Which matrix the optimal-structure inverse is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InverseForm {
    /// `N_t x N_t` inverse of the transmit-side covariance.
    Full,
    /// `K x K` inverse in the span of the channels, which yields identical
    /// beams (the reduced-dimension formulation).
    Reduced,
}

fn dims3(g: &Graph, h: NodeId) -> Result<(usize, usize, usize)> {
    match *g.value(h).shape() {
        [b, n, k] => Ok((b, n, k)),
        ref s => Err(Error::shape(alloc::format!("expected [B, N_t, K], got {s:?}"))),
    }
}

fn identity(n: usize) -> CTensor {
    CTensor::from_real(
        &[n, n],
        (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect(),
    )
    .expect("square identity")
}

/// Per-sample sum rate `[B]` of beams `w` on channels `h`.
pub fn sum_rate(g: &mut Graph, h: NodeId, w: NodeId, n0: f64) -> Result<NodeId> {
    let hh = g.adjoint(h)?;
    let m = g.matmul(hh, w)?; // [B, K, K], entry (k, j) = h_kᴴ w_j
    let a = g.abs2(m)?;
    let total = g.sum_last(a)?;
    let signal = g.diag(a)?;
    let interference = g.sub(total, signal)?;
    rate_from_terms(g, signal, interference, n0)
}

fn rate_from_terms(g: &mut Graph, signal: NodeId, interference: NodeId, n0: f64) -> Result<NodeId> {
    let den = g.add_scalar(interference, n0)?;
    let ratio = g.div(signal, den)?;
    let one_plus = g.add_scalar(ratio, 1.0)?;
    let ln = g.log(one_plus)?;
    let bits = g.scale(ln, core::f64::consts::LOG2_E)?;
    g.sum_last(bits)
}

/// Unnormalized directions `(I + c_k Σ_j s_j h_j h_jᴴ)⁻¹ h_k` for the first
/// `targets` columns of `h`. `col_weights` are the `s_j` (`[B, K_h]`),
/// `user_weights` the `c_k` (`[B, targets]`); a missing weight is 1.
fn directions(
    g: &mut Graph,
    h: NodeId,
    targets: usize,
    col_weights: Option<NodeId>,
    user_weights: Option<NodeId>,
    form: InverseForm,
) -> Result<NodeId> {
    let (b, n, kh) = dims3(g, h)?;
    let hs = match col_weights {
        Some(s) => {
            let e = g.expand(s, 1, n)?;
            g.mul(h, e)?
        }
        None => h,
    };
    match form {
        InverseForm::Full => {
            let hh = g.adjoint(h)?;
            let cov = g.matmul(hs, hh)?; // [B, N, N]
            let eye = g.input(identity(n));
            let targets_h = g.slice_last(h, 0, targets)?;
            match user_weights {
                None => {
                    let a = g.add_bcast(cov, eye)?;
                    let inv = g.inverse(a)?;
                    g.matmul(inv, targets_h)
                }
                Some(c) => {
                    let cov4 = g.expand(cov, 1, targets)?; // [B, T, N, N]
                    let cov4 = g.mul_bcast(cov4, c)?;
                    let a = g.add_bcast(cov4, eye)?;
                    let inv = g.inverse(a)?;
                    let ht = g.transpose(targets_h)?; // [B, T, N]
                    let ht = g.reshape(ht, &[b, targets, n, 1])?;
                    let d = g.matmul(inv, ht)?;
                    let d = g.reshape(d, &[b, targets, n])?;
                    g.transpose(d)
                }
            }
        }
        InverseForm::Reduced => {
            // (I + c H S Hᴴ)⁻¹ h_k = H (I + c S HᴴH)⁻¹ e_k
            let hh = g.adjoint(hs)?;
            let sg = g.matmul(hh, h)?; // [B, K_h, K_h] = S HᴴH (S real diagonal)
            let eye = g.input(identity(kh));
            let xi = match user_weights {
                None => {
                    let a = g.add_bcast(sg, eye)?;
                    let inv = g.inverse(a)?;
                    g.slice_last(inv, 0, targets)?
                }
                Some(c) => {
                    let sg4 = g.expand(sg, 1, targets)?; // [B, T, K_h, K_h]
                    let sg4 = g.mul_bcast(sg4, c)?;
                    let a = g.add_bcast(sg4, eye)?;
                    let inv = g.inverse(a)?;
                    let mut sel = alloc::vec![ZERO; targets * kh];
                    for t in 0..targets {
                        sel[t * kh + t] = C64::new(1.0, 0.0);
                    }
                    let sel = g.input(CTensor::from_real(
                        &[targets, kh, 1],
                        sel.iter().map(|z| z.re).collect(),
                    )?);
                    let sel = g.expand(sel, 0, b)?;
                    let cols = g.matmul(inv, sel)?; // [B, T, K_h, 1]
                    let cols = g.reshape(cols, &[b, targets, kh])?;
                    g.transpose(cols)? // [B, K_h, T]
                }
            };
            g.matmul(h, xi)
        }
    }
}

/// Scales each column of `d` to power `p_k`.
fn normalize_columns(g: &mut Graph, d: NodeId, p: NodeId) -> Result<NodeId> {
    let (_, n, _) = dims3(g, d)?;
    let a = g.abs2(d)?;
    let at = g.transpose(a)?;
    let col_pow = g.sum_last(at)?; // [B, K]
    let ratio = g.div(p, col_pow)?;
    let s = g.sqrt(ratio)?;
    let s = g.expand(s, 1, n)?;
    g.mul(d, s)
}

/// Optimal-structure beams from channels and a power pair.
pub fn reconstruct(
    g: &mut Graph,
    h: NodeId,
    p: NodeId,
    q: NodeId,
    n0: f64,
    weighting: DirectionWeighting,
    form: InverseForm,
) -> Result<NodeId> {
    let (_, _, k) = dims3(g, h)?;
    let qn = g.scale(q, 1.0 / n0)?;
    let d = match weighting {
        DirectionWeighting::PerInterferer => directions(g, h, k, Some(qn), None, form)?,
        DirectionWeighting::PerUser => directions(g, h, k, None, Some(qn), form)?,
    };
    normalize_columns(g, d, p)
}

/// Zero forcing with total power `power` per sample.
pub fn zf(g: &mut Graph, h: NodeId, power: f64) -> Result<NodeId> {
    let (b, n, k) = dims3(g, h)?;
    let hh = g.adjoint(h)?;
    let gram = g.matmul(hh, h)?;
    let inv = g.inverse(gram)?;
    let w0 = g.matmul(h, inv)?;
    let a = g.abs2(w0)?;
    let a = g.reshape(a, &[b, n * k])?;
    let tot = g.sum_last(a)?; // [B]
    let pw = g.input(CTensor::from_real(&[b], alloc::vec![power; b])?);
    let ratio = g.div(pw, tot)?;
    let d = g.sqrt(ratio)?;
    g.mul_bcast(w0, d)
}

/// SLNR beams for the first `p.shape[1]` columns of `h_local`
/// (`[B, N_t, K_total]`, own users first).
pub fn slnr_beams(g: &mut Graph, h_local: NodeId, p: NodeId, n0: f64, form: InverseForm) -> Result<NodeId> {
    let k = *g.value(p).shape().last().unwrap_or(&0);
    let c = g.scale(p, 1.0 / n0)?;
    let d = directions(g, h_local, k, None, Some(c), form)?;
    normalize_columns(g, d, p)
}

/// Per-sample SLNR sum rate `[B]` of beams `w` (`[B, N_t, K]`) for the
/// first `K` users of `h_local`.
pub fn slnr_sum_rate(g: &mut Graph, h_local: NodeId, w: NodeId, n0: f64) -> Result<NodeId> {
    let k = *g.value(w).shape().last().unwrap_or(&0);
    let hh = g.adjoint(h_local)?;
    let m = g.matmul(hh, w)?; // [B, K_total, K], entry (v, k) = h_vᴴ w_k
    let a = g.abs2(m)?;
    let at = g.transpose(a)?; // [B, K, K_total]
    let total = g.sum_last(at)?;
    let own = g.slice_last(at, 0, k)?;
    let signal = g.diag(own)?;
    let leakage = g.sub(total, signal)?;
    rate_from_terms(g, signal, leakage, n0)
}

/// Stacks matrices into a `[B, rows, cols]` complex input node.
pub fn input_batch(g: &mut Graph, ms: &[CMat]) -> Result<NodeId> {
    Ok(g.input(CTensor::stack_cmats(ms)?))
}

/// Stacks per-sample real vectors into a `[B, K]` input node.
pub fn input_powers(g: &mut Graph, rows: &[Vec<f64>]) -> Result<NodeId> {
    let k = rows.first().map_or(0, Vec::len);
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(g.input(CTensor::from_real(&[rows.len(), k], data)?))
}
