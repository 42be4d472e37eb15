use alloc::vec;
use alloc::vec::Vec;

use super::gp::{gp_objective, gp_power, GpConfig};
use crate::beamforming::{slnr_direction, CellLayout};
use crate::linalg::{dot_h, CMat, C64};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AoConfig {
    pub max_iterations: usize,
    /// Stop once the objective changes by less than this, relative.
    pub tolerance: f64,
    pub gp: GpConfig,
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            max_iterations: 100,
            tolerance: 1e-9,
            gp: GpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOutput {
    /// `N_t x K` beams of this cell's users.
    pub beams: CMat,
    pub powers: Vec<f64>,
    /// Unit-norm beam directions.
    pub directions: CMat,
    /// The minimized product `Π_k (a_k/p_k + b_k)` (or its `keep_one`
    /// counterpart) after every iteration.
    pub trace: Vec<f64>,
}

/// Noise and leakage coefficients `a_k = N0/|h_kᴴu_k|²`,
/// `b_k = Σ_{v≠k} |h_vᴴu_k|² / |h_kᴴu_k|²` of a cell's unit directions.
pub fn leakage_coefficients(
    h_local: &CMat,
    directions: &CMat,
    layout: CellLayout,
    cell: usize,
    n0: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Vec::with_capacity(layout.k);
    let mut b = Vec::with_capacity(layout.k);
    for (m, user) in layout.users_of(cell).enumerate() {
        let u = directions.col(m);
        let mut own = 0.0;
        let mut leak = 0.0;
        for v in 0..h_local.cols() {
            let g = dot_h(&h_local.col(v), &u).norm_sqr();
            if v == user {
                own = g;
            } else {
                leak += g;
            }
        }
        if !(own > 0.0) {
            return Err(Error::DivisionByZero("user has no gain along its beam"));
        }
        a.push(n0 / own);
        b.push(leak / own);
    }
    Ok((a, b))
}

fn directions_for(h_local: &CMat, layout: CellLayout, cell: usize, powers: &[f64], n0: f64) -> Result<CMat> {
    let mut d = CMat::zeros(h_local.rows(), layout.k);
    for (m, user) in layout.users_of(cell).enumerate() {
        d.set_col(m, &slnr_direction(h_local, powers[m], user, n0)?);
    }
    Ok(d)
}

/// Alternates max-SLNR directions and geometric-programming powers for one
/// cell. Only `h_local`, this BS's channels to every user, enters.
pub fn multicell_ao(
    h_local: &CMat,
    layout: CellLayout,
    cell: usize,
    power: f64,
    n0: f64,
    config: &AoConfig,
) -> Result<AoOutput> {
    if h_local.cols() != layout.k_total() || cell >= layout.n_cells {
        return Err(Error::shape(alloc::format!(
            "channels {:?} for layout {layout:?}, cell {cell}",
            h_local.shape()
        )));
    }
    if config.max_iterations == 0 || !(config.tolerance > 0.0) {
        return Err(Error::config("AO iterations and tolerance must be positive"));
    }
    let mut powers = vec![power / layout.k as f64; layout.k];
    let mut trace = Vec::new();
    for _ in 0..config.max_iterations {
        let dirs = directions_for(h_local, layout, cell, &powers, n0)?;
        let (a, b) = leakage_coefficients(h_local, &dirs, layout, cell, n0)?;
        powers = gp_power(&a, &b, power, &config.gp)?;
        let value = math::exp(gp_objective(&a, &b, &powers, config.gp.keep_one));
        let done = trace
            .last()
            .is_some_and(|prev: &f64| (prev - value).abs() <= config.tolerance * prev.abs());
        trace.push(value);
        if done {
            let mut beams = dirs.clone();
            for (m, p) in powers.iter().enumerate() {
                let s = C64::new(math::sqrt(*p), 0.0);
                let col: Vec<C64> = beams.col(m).into_iter().map(|x| x * s).collect();
                beams.set_col(m, &col);
            }
            return Ok(AoOutput {
                beams,
                powers,
                directions: dirs,
                trace,
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "multicell alternating optimization",
        iterations: config.max_iterations,
    })
}
