//! Uplink pilots, least-squares preprocessing and the linear MMSE channel
//! estimator.
//!
//! With `Y = H X + N` (`H`: `N_t x K`, `X`: `K x L`) the estimator
//! `Ĥ = Y R + B` minimizing `E‖Ĥ − H‖²` has
//!
//! ```text
//! R = (Xᴴ Q X + N_t σ² I_L)⁻¹ Xᴴ Q        B = −H̄ (X R − I)
//! ```
//!
//! where `H̄` is the channel mean and `Q = E[ΔHᴴ ΔH]`. When `L > K` the same
//! `R` is computed as `Xᴴ (Q X Xᴴ + N_t σ² I_K)⁻¹ Q`, which inverts the
//! smaller matrix.

use alloc::vec::Vec;

use rand::Rng;

use crate::channels::complex_gaussian;
use crate::linalg::{CMat, C64};
use crate::math;
use crate::{Error, Result};

/// Ridge added to the normal matrix when it is singular (noiseless training
/// with a rank-deficient second moment).
pub const LMMSE_RIDGE: f64 = 1e-12;

/// `√P` times the leading `k x l` block of the unnormalized
/// `max(k, l)`-point DFT matrix.
pub fn make_dft_pilots(k: usize, l: usize, power: f64) -> CMat {
    let m = k.max(l);
    let amp = math::sqrt(power);
    CMat::from_fn(k, l, |i, j| {
        // reduce the index product mod m first to keep the angle small
        let idx = (i * j) % m;
        let ph = -2.0 * math::PI * idx as f64 / m as f64;
        C64::new(amp * math::cos(ph), amp * math::sin(ph))
    })
}

/// `Y = H X + N` with i.i.d. `CN(0, noise)` entries in `N`.
pub fn receive_pilots<R: Rng + ?Sized>(h: &CMat, x: &CMat, noise: f64, rng: &mut R) -> Result<CMat> {
    let mut y = h.matmul(x)?;
    if noise > 0.0 {
        let s = math::sqrt(noise);
        for z in y.as_mut_slice() {
            *z += complex_gaussian(rng) * s;
        }
    }
    Ok(y)
}

/// `Ỹ = Y Xᴴ / (L P)`.
pub fn ls_preprocess(y: &CMat, x: &CMat, power: f64) -> Result<CMat> {
    let l = x.cols();
    Ok(y.matmul(&x.adjoint())?.scale_re(1.0 / (l as f64 * power)))
}

/// Fitted linear MMSE estimator `Ĥ = Y R + B`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LmmseEstimator {
    /// `L x K` weights.
    pub r: CMat,
    /// `N_t x K` offset.
    pub b: CMat,
    /// Channel mean.
    pub mean: CMat,
    /// Second moment `E[ΔHᴴ ΔH]`, `K x K`.
    pub q: CMat,
    pub noise: f64,
}

impl LmmseEstimator {
    /// Fits mean and second moment on training channels, then the closed
    /// form. Needs at least two distinct samples.
    pub fn fit(training: &[CMat], x: &CMat, noise: f64) -> Result<Self> {
        if training.len() < 2 {
            return Err(Error::DegenerateTraining("need at least two training channels"));
        }
        let (n_t, k) = training[0].shape();
        if training.iter().any(|h| h.shape() != (n_t, k)) {
            return Err(Error::shape("training channels differ in shape"));
        }
        let n = training.len() as f64;
        let mut mean = CMat::zeros(n_t, k);
        for h in training {
            mean = mean.add(h);
        }
        let mean = mean.scale_re(1.0 / n);
        let mut q = CMat::zeros(k, k);
        for h in training {
            q = q.add(&h.sub(&mean).gram());
        }
        let q = q.scale_re(1.0 / n);
        if q.max_abs() == 0.0 {
            return Err(Error::DegenerateTraining("all training channels are identical"));
        }
        Self::from_moments(mean, q, x, noise)
    }

    /// Closed form from known moments.
    pub fn from_moments(mean: CMat, q: CMat, x: &CMat, noise: f64) -> Result<Self> {
        let (n_t, k) = mean.shape();
        if x.rows() != k || q.shape() != (k, k) {
            return Err(Error::shape(alloc::format!(
                "pilots {}x{} and second moment {}x{} for {k} users",
                x.rows(),
                x.cols(),
                q.rows(),
                q.cols()
            )));
        }
        let l = x.cols();
        let c = C64::new(n_t as f64 * noise, 0.0);
        let r = if q.max_abs() == 0.0 {
            CMat::zeros(l, k)
        } else if l <= k {
            let mut a = x.adjoint().matmul(&q)?.matmul(x)?;
            a.add_diag(c);
            let rhs = x.adjoint().matmul(&q)?;
            ridge_inverse(a)?.matmul(&rhs)?
        } else {
            let mut a = q.matmul(x)?.matmul(&x.adjoint())?;
            a.add_diag(c);
            x.adjoint().matmul(&ridge_inverse(a)?)?.matmul(&q)?
        };
        let mut xr_i = x.matmul(&r)?;
        xr_i.add_diag(C64::new(-1.0, 0.0));
        let b = mean.matmul(&xr_i)?.scale_re(-1.0);
        Ok(LmmseEstimator { r, b, mean, q, noise })
    }

    /// `Ĥ = Y R + B`.
    pub fn estimate(&self, y: &CMat) -> Result<CMat> {
        Ok(y.matmul(&self.r)?.add(&self.b))
    }

    /// Expected squared error of weights `(r, b)` over the empirical channel
    /// distribution `channels`, with the noise term taken in expectation:
    /// `(1/T) Σ ‖H X R + B − H‖² + N_t σ² ‖R‖²`.
    pub fn expected_mse(channels: &[CMat], x: &CMat, noise: f64, r: &CMat, b: &CMat) -> Result<f64> {
        let mut xr_i = x.matmul(r)?;
        xr_i.add_diag(C64::new(-1.0, 0.0));
        let mut acc = 0.0;
        for h in channels {
            acc += h.matmul(&xr_i)?.add(b).frob_norm_sqr();
        }
        let n_t = channels.first().map_or(0, CMat::rows);
        Ok(acc / channels.len().max(1) as f64 + n_t as f64 * noise * r.frob_norm_sqr())
    }
}

fn ridge_inverse(mut a: CMat) -> Result<CMat> {
    match a.inverse() {
        Ok(inv) => Ok(inv),
        Err(Error::SingularMatrix { .. }) => {
            let scale = a.max_abs().max(1.0);
            a.add_diag(C64::new(LMMSE_RIDGE * scale, 0.0));
            a.inverse()
        }
        Err(e) => Err(e),
    }
}

/// Monte-Carlo mean and standard error of the least-squares NMSE at pilot
/// length `l`, for i.i.d. Rayleigh channels.
pub fn ls_nmse_curve<R: Rng + ?Sized>(
    n_t: usize,
    k: usize,
    l: usize,
    power: f64,
    noise: f64,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let x = make_dft_pilots(k, l, power);
    let mut vals = Vec::with_capacity(trials);
    for _ in 0..trials {
        let h = crate::channels::gen_uplink_rayleigh(n_t, k, rng);
        let y = receive_pilots(&h, &x, noise, rng)?;
        let est = ls_preprocess(&y, &x, power)?;
        vals.push(est.sub(&h).frob_norm_sqr() / h.frob_norm_sqr());
    }
    Ok(mean_stderr(&vals))
}

pub(crate) fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, math::sqrt(var / n))
}
