//! Beamforming constructions and rate functionals.
//!
//! Conventions: a channel matrix `H` is `N_t x K` with user `k`'s channel in
//! column `k`; a beamforming matrix `W` has the same shape with user `k`'s
//! beam in column `k`. Multicell quantities use one `N_t x K_total` matrix
//! per BS (its channels to every user, cell-major) and one `N_t x K` beam
//! matrix per BS.
//!
//! [`graph`] holds differentiable versions of the same constructions built
//! on [`crate::autodiff`].

pub mod graph;

use alloc::vec::Vec;

use crate::linalg::{dot_h, norm, norm_sqr, CMat, C64, ONE};
use crate::math;
use crate::{Error, Result};

/// Singular-value ratio below which a channel is treated as rank deficient.
pub const RANK_RTOL: f64 = 1e-10;

/// `|h_kᴴ w_k|² / (Σ_{j≠k} |h_kᴴ w_j|² + N0)`.
pub fn sinr(h: &CMat, w: &CMat, n0: f64, k: usize) -> f64 {
    let hk = h.col(k);
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..w.cols() {
        let g = dot_h(&hk, &w.col(j)).norm_sqr();
        if j == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / (interference + n0)
}

pub fn sinrs(h: &CMat, w: &CMat, n0: f64) -> Vec<f64> {
    (0..h.cols()).map(|k| sinr(h, w, n0, k)).collect()
}

/// `Σ_k log2(1 + SINR_k)`.
pub fn sum_rate(h: &CMat, w: &CMat, n0: f64) -> f64 {
    sinrs(h, w, n0).into_iter().map(|s| math::log2(1.0 + s)).sum()
}

/// Total transmit power `Σ ‖w_k‖²`.
pub fn total_power(w: &CMat) -> f64 {
    w.frob_norm_sqr()
}

/// Downlink powers `p` and virtual-uplink powers `q`, each summing to the
/// budget.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PowerPair {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub budget: f64,
}

/// Tolerance on `Σp = Σq = P`, relative to `P`.
pub const POWER_PAIR_RTOL: f64 = 1e-8;

impl PowerPair {
    pub fn new(p: Vec<f64>, q: Vec<f64>, budget: f64) -> Result<Self> {
        let pair = PowerPair { p, q, budget };
        pair.validate()?;
        Ok(pair)
    }

    /// `p = q = P/K`.
    pub fn uniform(k: usize, budget: f64) -> Self {
        let v = alloc::vec![budget / k as f64; k];
        PowerPair {
            p: v.clone(),
            q: v,
            budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.q.len() {
            return Err(Error::shape("p and q differ in length"));
        }
        let tol = POWER_PAIR_RTOL * self.budget.max(1.0);
        for (name, v) in [("p", &self.p), ("q", &self.q)] {
            if v.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::config(alloc::format!("{name} has a negative entry")));
            }
            let s: f64 = v.iter().sum();
            if (s - self.budget).abs() > tol {
                return Err(Error::config(alloc::format!(
                    "{name} sums to {s}, budget is {}",
                    self.budget
                )));
            }
        }
        Ok(())
    }
}

/// Weighting of the interference covariance inside the optimal-structure
/// inverse.
///
/// `PerInterferer` forms `(I + Σ_j (q_j/N0) h_j h_jᴴ)⁻¹ h_k`, the
/// virtual-uplink MMSE direction under which any point on the rate region
/// boundary is reachable. `PerUser` uses user `k`'s own weight for every
/// term, `(I + (q_k/N0) Σ_j h_j h_jᴴ)⁻¹ h_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DirectionWeighting {
    #[default]
    PerInterferer,
    PerUser,
}

/// Beams with the optimal structure: `w_k = √p_k d_k / ‖d_k‖` with `d_k`
/// the weighted inverse applied to `h_k`.
pub fn reconstruct(h: &CMat, pair: &PowerPair, n0: f64) -> Result<CMat> {
    reconstruct_with(h, pair, n0, DirectionWeighting::default())
}

pub fn reconstruct_with(h: &CMat, pair: &PowerPair, n0: f64, weighting: DirectionWeighting) -> Result<CMat> {
    let (n_t, k) = h.shape();
    if pair.p.len() != k {
        return Err(Error::shape(alloc::format!("{} powers for {k} users", pair.p.len())));
    }
    let covariance = |weights: &dyn Fn(usize) -> f64| -> CMat {
        let mut a = CMat::identity(n_t);
        for j in 0..k {
            let s = weights(j) / n0;
            if s == 0.0 {
                continue;
            }
            let hj = h.col(j);
            for r in 0..n_t {
                let f = hj[r] * s;
                for c in 0..n_t {
                    a[(r, c)] += f * hj[c].conj();
                }
            }
        }
        a
    };
    let mut w = CMat::zeros(n_t, k);
    match weighting {
        DirectionWeighting::PerInterferer => {
            let inv = covariance(&|j| pair.q[j]).inverse()?;
            for kk in 0..k {
                w.set_col(kk, &scaled_direction(inv.mul_vec(&h.col(kk)), pair.p[kk]));
            }
        }
        DirectionWeighting::PerUser => {
            for kk in 0..k {
                let qk = pair.q[kk];
                let inv = covariance(&|_| qk).inverse()?;
                w.set_col(kk, &scaled_direction(inv.mul_vec(&h.col(kk)), pair.p[kk]));
            }
        }
    }
    Ok(w)
}

fn scaled_direction(d: Vec<C64>, power: f64) -> Vec<C64> {
    let n = norm(&d);
    if n == 0.0 {
        return d;
    }
    let s = math::sqrt(power) / n;
    d.into_iter().map(|x| x * s).collect()
}

/// Maximum-ratio transmission with equal power split.
pub fn matched_filter(h: &CMat, power: f64) -> CMat {
    let k = h.cols();
    let mut w = CMat::zeros(h.rows(), k);
    for j in 0..k {
        w.set_col(j, &scaled_direction(h.col(j), power / k as f64));
    }
    w
}

/// Ratio of the smallest to the largest singular value of `h`.
pub fn singular_value_ratio(h: &CMat) -> Result<f64> {
    let (vals, _) = h.gram().hermitian_eig()?;
    let max = vals.last().copied().unwrap_or(0.0);
    let min = vals.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Ok(0.0);
    }
    Ok(math::sqrt(min.max(0.0) / max))
}

/// Zero forcing `W = d H (HᴴH)⁻¹` with `d` chosen so that `‖W‖² = P`.
pub fn zf(h: &CMat, power: f64) -> Result<CMat> {
    let ratio = singular_value_ratio(h)?;
    if ratio < RANK_RTOL || h.cols() > h.rows() {
        return Err(Error::SingularMatrix {
            pivot: ratio,
            threshold: RANK_RTOL,
        });
    }
    let w0 = h.matmul(&h.gram().inverse()?)?;
    let d = math::sqrt(power / w0.frob_norm_sqr());
    Ok(w0.scale_re(d))
}

/// Channel expressed in the `K`-dimensional span of its own columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedChannel {
    /// `K x K`, column `k` is the reduced channel `g_k`.
    pub g: CMat,
    /// `N_t x K` isometry `H U Λ^{-1/2}` mapping reduced beams back.
    pub lift: CMat,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

/// `G = Λ^{1/2} Uᴴ` from `HᴴH = U Λ Uᴴ`.
pub fn reduce_dimension(h: &CMat) -> Result<ReducedChannel> {
    let (n_t, k) = h.shape();
    if k > n_t {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let (vals, u) = h.gram().hermitian_eig()?;
    let max = vals.last().copied().unwrap_or(0.0);
    let min = vals.first().copied().unwrap_or(0.0);
    let ratio = if max > 0.0 { math::sqrt(min.max(0.0) / max) } else { 0.0 };
    if ratio < RANK_RTOL {
        return Err(Error::RankDeficient { ratio });
    }
    let sqrt_l: Vec<f64> = vals.iter().map(|v| math::sqrt(*v)).collect();
    let uh = u.adjoint();
    let g = CMat::from_fn(k, k, |i, j| uh[(i, j)] * sqrt_l[i]);
    let hu = h.matmul(&u)?;
    let lift = CMat::from_fn(n_t, k, |i, j| hu[(i, j)] / sqrt_l[j]);
    Ok(ReducedChannel {
        g,
        lift,
        eigenvalues: vals,
        eigenvectors: u,
    })
}

impl ReducedChannel {
    /// Full-dimensional beams from reduced beams `v` (`K x K`).
    pub fn lift(&self, v: &CMat) -> Result<CMat> {
        self.lift.matmul(v)
    }

    /// Optimal-structure beams computed in the reduced space and lifted.
    pub fn reconstruct(&self, pair: &PowerPair, n0: f64, weighting: DirectionWeighting) -> Result<CMat> {
        let v = reconstruct_with(&self.g, pair, n0, weighting)?;
        self.lift(&v)
    }
}

/// Reduced-problem sum rate with reduced channels `g` and reduced beams `v`.
pub fn sum_rate_reduced(g: &CMat, v: &CMat, n0: f64) -> f64 {
    sum_rate(g, v, n0)
}

/// Users per cell in a multicell system; user `u` belongs to cell `u / k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellLayout {
    pub n_cells: usize,
    pub k: usize,
}

impl CellLayout {
    pub fn k_total(self) -> usize {
        self.n_cells * self.k
    }

    pub fn cell_of(self, user: usize) -> usize {
        user / self.k
    }

    pub fn users_of(self, cell: usize) -> core::ops::Range<usize> {
        cell * self.k..(cell + 1) * self.k
    }
}

/// `|h_uᴴ w|² / (Σ_{v≠u} |h_vᴴ w|² + N0)` where `h_bs` holds the serving
/// BS's channels to every user and `user` indexes its column.
pub fn slnr(h_bs: &CMat, w: &[C64], user: usize, n0: f64) -> f64 {
    let mut signal = 0.0;
    let mut leakage = 0.0;
    for v in 0..h_bs.cols() {
        let g = dot_h(&h_bs.col(v), w).norm_sqr();
        if v == user {
            signal = g;
        } else {
            leakage += g;
        }
    }
    signal / (leakage + n0)
}

pub fn slnr_rate(h_bs: &CMat, w: &[C64], user: usize, n0: f64) -> f64 {
    math::log2(1.0 + slnr(h_bs, w, user, n0))
}

/// Unit-norm max-SLNR direction `(I + (p/N0) Σ_v h_v h_vᴴ)⁻¹ h_user`
/// normalized, using only this BS's channels.
pub fn slnr_direction(h_local: &CMat, p: f64, user: usize, n0: f64) -> Result<Vec<C64>> {
    let mut a = h_local.outer_gram().scale_re(p / n0);
    a.add_diag(ONE);
    let d = a.inverse()?.mul_vec(&h_local.col(user));
    Ok(scaled_direction(d, 1.0))
}

/// `√p` times [`slnr_direction`].
pub fn slnr_beamformer(h_local: &CMat, p: f64, user: usize, n0: f64) -> Result<Vec<C64>> {
    let s = math::sqrt(p);
    Ok(slnr_direction(h_local, p, user, n0)?
        .into_iter()
        .map(|x| x * s)
        .collect())
}

/// SLNR beams for every user of `cell` given that cell's powers.
pub fn slnr_cell_beams(h_local: &CMat, layout: CellLayout, cell: usize, powers: &[f64], n0: f64) -> Result<CMat> {
    let mut w = CMat::zeros(h_local.rows(), layout.k);
    for (m, u) in layout.users_of(cell).enumerate() {
        w.set_col(m, &slnr_beamformer(h_local, powers[m], u, n0)?);
    }
    Ok(w)
}

/// Received SINR of `user` with intra- and inter-cell interference.
/// `downlink[j]` is BS `j`'s channel matrix to all users and `beams[j]` its
/// beam matrix.
pub fn multicell_sinr(downlink: &[CMat], beams: &[CMat], layout: CellLayout, user: usize, n0: f64) -> f64 {
    let own = layout.cell_of(user);
    let local = user - own * layout.k;
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, (hj, wj)) in downlink.iter().zip(beams).enumerate() {
        let h = hj.col(user);
        for m in 0..wj.cols() {
            let g = dot_h(&h, &wj.col(m)).norm_sqr();
            if j == own && m == local {
                signal = g;
            } else {
                interference += g;
            }
        }
    }
    signal / (interference + n0)
}

pub fn multicell_sum_rate(downlink: &[CMat], beams: &[CMat], layout: CellLayout, n0: f64) -> f64 {
    (0..layout.k_total())
        .map(|u| math::log2(1.0 + multicell_sinr(downlink, beams, layout, u, n0)))
        .sum()
}

/// Per-cell SLNR sum rate `Σ_{users of cell} log2(1 + SLNR)`.
pub fn cell_slnr_rate(h_local: &CMat, w: &CMat, layout: CellLayout, cell: usize, n0: f64) -> f64 {
    layout
        .users_of(cell)
        .enumerate()
        .map(|(m, u)| slnr_rate(h_local, &w.col(m), u, n0))
        .sum()
}

/// Squared norms of the columns of `w`.
pub fn column_powers(w: &CMat) -> Vec<f64> {
    (0..w.cols()).map(|j| norm_sqr(&w.col(j))).collect()
}

#[cfg(test)]
mod tests;
