use alloc::vec;
use alloc::vec::Vec;

use crate::beamforming::{matched_filter, sinrs, sum_rate, PowerPair};
use crate::linalg::{dot_h, CMat, C64};
use crate::math;
use crate::{Error, Result};

/// Largest rate decrease between iterations tolerated as rounding.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WmmseConfig {
    pub max_iterations: usize,
    /// Stop once the sum rate improves by less than this.
    pub tolerance: f64,
    /// Relative accuracy of the transmit power reached by the multiplier
    /// bisection.
    pub bisection_tolerance: f64,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        WmmseConfig {
            max_iterations: 200,
            tolerance: 1e-6,
            bisection_tolerance: 1e-12,
        }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.tolerance > 0.0) || !(self.bisection_tolerance > 0.0) {
            return Err(Error::config("WMMSE iterations and tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseOutput {
    pub w: CMat,
    /// Sum rate of the initial point followed by one entry per iteration.
    pub trace: Vec<f64>,
}

impl WmmseOutput {
    pub fn rate(&self) -> f64 {
        self.trace.last().copied().unwrap_or(0.0)
    }

    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Weighted MMSE sum-rate maximization under the total power budget,
/// started from equal-power matched filtering.
pub fn wmmse(h: &CMat, power: f64, n0: f64, config: &WmmseConfig) -> Result<WmmseOutput> {
    config.validate()?;
    if !(power > 0.0) || !(n0 > 0.0) {
        return Err(Error::config("power and noise must be positive"));
    }
    let (n_t, k) = h.shape();
    let mut w = matched_filter(h, power);
    let mut trace = vec![sum_rate(h, &w, n0)];
    for iteration in 1..=config.max_iterations {
        // receivers and weights
        let mut gain = vec![C64::new(0.0, 0.0); k];
        let mut weight = vec![0.0; k];
        for kk in 0..k {
            let hk = h.col(kk);
            let mut total = n0;
            let mut own = C64::new(0.0, 0.0);
            for j in 0..k {
                let z = dot_h(&hk, &w.col(j));
                total += z.norm_sqr();
                if j == kk {
                    own = z;
                }
            }
            let u = own / total;
            let e = (1.0 - (u.conj() * own).re).max(f64::MIN_POSITIVE);
            gain[kk] = u;
            weight[kk] = 1.0 / e;
        }
        // transmit covariance Σ λ_j |u_j|² h_j h_jᴴ and right-hand sides λ_k u_k h_k
        let mut a = CMat::zeros(n_t, n_t);
        let mut rhs = CMat::zeros(n_t, k);
        for j in 0..k {
            let hj = h.col(j);
            let s = weight[j] * gain[j].norm_sqr();
            for r in 0..n_t {
                let f = hj[r] * s;
                for c in 0..n_t {
                    a[(r, c)] += f * hj[c].conj();
                }
                rhs[(r, j)] = hj[r] * gain[j] * weight[j];
            }
        }
        w = transmit_update(&a, &rhs, power, config.bisection_tolerance)?;
        let rate = sum_rate(h, &w, n0);
        let prev = *trace.last().unwrap_or(&0.0);
        if rate < prev - MONOTONE_TOL {
            return Err(Error::NonMonotone {
                iteration,
                decrease: prev - rate,
            });
        }
        trace.push(rate);
        if rate - prev < config.tolerance {
            break;
        }
    }
    Ok(WmmseOutput { w, trace })
}

/// Solves `(A + μI) W = rhs` for the multiplier `μ ≥ 0` that meets the
/// budget. Works in the eigenbasis of `A`, where the transmit power is
/// `Σ_i c_i / (λ_i + μ)²`. A feasible `μ = 0` solution (pseudo-inverse on a
/// singular `A`) is scaled up to the full budget, which only raises the rate.
fn transmit_update(a: &CMat, rhs: &CMat, power: f64, rtol: f64) -> Result<CMat> {
    let (vals, v) = a.hermitian_eig()?;
    let proj = v.adjoint().matmul(rhs)?;
    let n = vals.len();
    let energy: Vec<f64> = (0..n)
        .map(|i| (0..proj.cols()).map(|j| proj[(i, j)].norm_sqr()).sum())
        .collect();
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return Err(Error::DivisionByZero("all receivers vanished"));
    }
    let lmax = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let null = |i: usize| vals[i] <= 1e-12 * lmax;
    let power_at = |mu: f64| -> f64 {
        (0..n)
            .filter(|&i| mu > 0.0 || !null(i))
            .map(|i| energy[i] / ((vals[i].max(0.0) + mu) * (vals[i].max(0.0) + mu)))
            .sum()
    };
    let bounded_at_zero = (0..n).all(|i| !null(i) || energy[i] <= 1e-24 * total);
    let mu = if bounded_at_zero && power_at(0.0) <= power {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = math::sqrt(total / power);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if power_at(mid) > power {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= rtol * hi {
                break;
            }
        }
        hi
    };
    let mut w = CMat::zeros(a.rows(), rhs.cols());
    for i in 0..n {
        let d = vals[i].max(0.0) + mu;
        if mu == 0.0 && null(i) {
            continue;
        }
        for j in 0..rhs.cols() {
            let c = proj[(i, j)] / d;
            for r in 0..a.rows() {
                w[(r, j)] += v[(r, i)] * c;
            }
        }
    }
    let used = w.frob_norm_sqr();
    if !(used > 0.0) {
        return Err(Error::DivisionByZero("zero transmit update"));
    }
    Ok(w.scale_re(math::sqrt(power / used)))
}

/// Maximum iterations of the virtual-uplink fixed point.
pub const EXTRACT_MAX_ITERATIONS: usize = 10_000;
/// Convergence threshold on the maximum relative change of `q`.
pub const EXTRACT_RTOL: f64 = 1e-8;

/// `h_kᴴ (N0 I + Σ_{j≠k} q_j h_j h_jᴴ)⁻¹ h_k` for every `k`.
fn mmse_gains(h: &CMat, q: &[f64], n0: f64) -> Result<Vec<f64>> {
    let (n_t, k) = h.shape();
    let mut full = CMat::identity(n_t).scale_re(n0);
    for (j, qj) in q.iter().enumerate().take(k) {
        add_outer(&mut full, &h.col(j), *qj);
    }
    (0..k)
        .map(|kk| {
            let hk = h.col(kk);
            let mut a = full.clone();
            add_outer(&mut a, &hk, -q[kk]);
            let x = a.solve(&hk)?;
            Ok(dot_h(&hk, &x).re)
        })
        .collect()
}

fn add_outer(a: &mut CMat, v: &[C64], s: f64) {
    if s == 0.0 {
        return;
    }
    for r in 0..v.len() {
        let f = v[r] * s;
        for c in 0..v.len() {
            a[(r, c)] += f * v[c].conj();
        }
    }
}

/// Uplink SINRs with MMSE receivers under uplink powers `q` and noise `N0`.
pub fn virtual_uplink_sinrs(h: &CMat, q: &[f64], n0: f64) -> Result<Vec<f64>> {
    Ok(mmse_gains(h, q, n0)?.into_iter().zip(q).map(|(g, qk)| qk * g).collect())
}

/// Uplink powers whose MMSE-receiver SINRs equal the targets `gamma`.
pub fn virtual_uplink_powers(h: &CMat, gamma: &[f64], n0: f64, start: f64) -> Result<Vec<f64>> {
    let k = h.cols();
    let mut q = vec![start; k];
    for _ in 0..EXTRACT_MAX_ITERATIONS {
        let gains = mmse_gains(h, &q, n0)?;
        let next: Vec<f64> = gamma.iter().zip(&gains).map(|(g, d)| g / d).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("virtual uplink powers"));
        }
        let change = next
            .iter()
            .zip(&q)
            .map(|(a, b)| if *a > 0.0 { (a - b).abs() / a } else { b.abs() })
            .fold(0.0, f64::max);
        q = next;
        if change < EXTRACT_RTOL {
            return Ok(q);
        }
    }
    Err(Error::NoConvergence {
        solver: "virtual uplink fixed point",
        iterations: EXTRACT_MAX_ITERATIONS,
    })
}

/// Downlink powers of `w` and the dual uplink powers reaching the same
/// SINRs, each normalized to the budget.
pub fn extract_pq(h: &CMat, w: &CMat, n0: f64, power: f64) -> Result<PowerPair> {
    let k = h.cols();
    let mut p = crate::beamforming::column_powers(w);
    let sp: f64 = p.iter().sum();
    if !(sp > 0.0) {
        return Err(Error::DivisionByZero("beams carry no power"));
    }
    p.iter_mut().for_each(|x| *x *= power / sp);
    let gamma = sinrs(h, w, n0);
    let mut q = virtual_uplink_powers(h, &gamma, n0, power / k as f64)?;
    let sq: f64 = q.iter().sum();
    if !(sq > 0.0) {
        return Err(Error::DivisionByZero("virtual uplink powers vanished"));
    }
    q.iter_mut().for_each(|x| *x *= power / sq);
    Ok(PowerPair { p, q, budget: power })
}
