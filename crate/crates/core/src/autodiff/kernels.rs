//! Batched tensor kernels shared by the forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

use super::CTensor;
use crate::linalg::{gemm, gemm_real, lu_inverse, C64, ZERO};
use crate::{Error, Result};

/// Conjugate transpose (or plain transpose) of the last two dimensions.
pub(crate) fn swap_last2(t: &CTensor, conj: bool) -> CTensor {
    let (r, c) = t.last2();
    let batch = t.len() / (r * c).max(1);
    let mut out = vec![ZERO; t.len()];
    let src = t.data();
    for b in 0..batch {
        let off = b * r * c;
        for i in 0..r {
            for j in 0..c {
                let z = src[off + i * c + j];
                out[off + j * r + i] = if conj { z.conj() } else { z };
            }
        }
    }
    let mut shape = t.shape().to_vec();
    let n = shape.len();
    if n >= 2 {
        shape.swap(n - 2, n - 1);
    } else if n == 1 {
        shape = vec![t.shape()[0], 1];
    }
    CTensor::raw(shape, out, t.is_real())
}

/// Batched matrix product over the last two dimensions. A 2-d operand is
/// broadcast against the other operand's batch.
pub(crate) fn bmm(a: &CTensor, b: &CTensor) -> Result<CTensor> {
    if a.ndim() < 2 || b.ndim() < 2 {
        return Err(Error::shape("matmul operands need at least 2 dims"));
    }
    let (m, k) = a.last2();
    let (k2, n) = b.last2();
    if k != k2 {
        return Err(Error::shape(alloc::format!(
            "matmul inner dims {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ba, bb) = (a.batch(), b.batch());
    let batch_shape: Vec<usize> = if a.ndim() > 2 && b.ndim() > 2 {
        if a.shape()[..a.ndim() - 2] != b.shape()[..b.ndim() - 2] {
            return Err(Error::shape(alloc::format!(
                "matmul batch dims {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        a.shape()[..a.ndim() - 2].to_vec()
    } else if a.ndim() > 2 {
        a.shape()[..a.ndim() - 2].to_vec()
    } else {
        b.shape()[..b.ndim() - 2].to_vec()
    };
    let batch = ba.max(bb);
    let mut shape = batch_shape;
    shape.push(m);
    shape.push(n);
    let real = a.is_real() && b.is_real();
    let mut out = vec![ZERO; batch * m * n];
    if real {
        let ar = a.re();
        let br = b.re();
        let mut tmp = vec![0.0; m * n];
        for i in 0..batch {
            let ao = if ba == 1 { 0 } else { i * m * k };
            let bo = if bb == 1 { 0 } else { i * k * n };
            tmp.iter_mut().for_each(|x| *x = 0.0);
            gemm_real(m, k, n, &ar[ao..ao + m * k], &br[bo..bo + k * n], &mut tmp);
            for (o, v) in out[i * m * n..(i + 1) * m * n].iter_mut().zip(&tmp) {
                o.re = *v;
            }
        }
    } else {
        for i in 0..batch {
            let ao = if ba == 1 { 0 } else { i * m * k };
            let bo = if bb == 1 { 0 } else { i * k * n };
            gemm(
                m,
                k,
                n,
                &a.data()[ao..ao + m * k],
                &b.data()[bo..bo + k * n],
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
    }
    Ok(CTensor::raw(shape, out, real))
}

/// Sums a batched `[.., r, c]` tensor down to `[r, c]`.
pub(crate) fn sum_batch(t: &CTensor) -> CTensor {
    let (r, c) = t.last2();
    let mut out = vec![ZERO; r * c];
    for chunk in t.data().chunks(r * c) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    CTensor::raw(vec![r, c], out, t.is_real())
}

/// Batched inverse of the last two (square) dimensions; returns the largest
/// 1-norm condition estimate over the batch.
pub(crate) fn batched_inverse(t: &CTensor) -> Result<(CTensor, f64)> {
    let (r, c) = t.last2();
    if r != c || t.ndim() < 2 {
        return Err(Error::shape(alloc::format!("inverse of non-square {:?}", t.shape())));
    }
    let mut out = vec![ZERO; t.len()];
    let mut worst: f64 = 1.0;
    for (src, dst) in t.data().chunks(r * r).zip(out.chunks_mut(r * r)) {
        let cond = lu_inverse(r, src, dst)?;
        worst = worst.max(cond);
    }
    Ok((CTensor::raw(t.shape().to_vec(), out, t.is_real()), worst))
}

pub(crate) fn map(t: &CTensor, real: bool, f: impl Fn(C64) -> C64) -> CTensor {
    CTensor::raw(t.shape().to_vec(), t.data().iter().map(|&z| f(z)).collect(), real)
}

pub(crate) fn zip(a: &CTensor, b: &CTensor, real: bool, f: impl Fn(C64, C64) -> C64) -> CTensor {
    CTensor::raw(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        real,
    )
}
