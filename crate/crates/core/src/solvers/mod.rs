//! Classical optimizers: WMMSE, virtual-uplink power extraction, the
//! log-domain geometric-programming power step and the per-cell SLNR
//! alternating optimization. They label training data and provide the
//! reference schemes.

mod gp;
mod multicell;
mod wmmse;

pub use gp::{gp_objective, gp_power, GpConfig};
pub use multicell::{leakage_coefficients, multicell_ao, AoConfig, AoOutput};
pub use wmmse::{
    extract_pq, virtual_uplink_powers, virtual_uplink_sinrs, wmmse, WmmseConfig, WmmseOutput, EXTRACT_MAX_ITERATIONS,
    EXTRACT_RTOL, MONOTONE_TOL,
};

use alloc::vec::Vec;

use crate::beamforming::CellLayout;
use crate::channels::{Labels, Sample, ScenarioConfig};
use crate::Result;

/// Labels a single-cell sample with the `(p, q)` pair extracted from WMMSE
/// run on the true downlink channel.
pub fn wmmse_labels(cfg: &ScenarioConfig, sample: &Sample, config: &WmmseConfig) -> Result<Labels> {
    let h = &sample.downlink[0];
    let out = wmmse(h, cfg.power, cfg.noise, config)?;
    let pair = extract_pq(h, &out.w, cfg.noise, cfg.power)?;
    Ok(Labels {
        p: pair.p,
        q: Some(pair.q),
    })
}

/// Labels a multicell sample with every cell's alternating-optimization
/// powers, cell-major.
pub fn multicell_labels(cfg: &ScenarioConfig, sample: &Sample, config: &AoConfig) -> Result<Labels> {
    let layout = CellLayout {
        n_cells: cfg.n_cells,
        k: cfg.k,
    };
    let mut p = Vec::with_capacity(layout.k_total());
    for cell in 0..cfg.n_cells {
        let out = multicell_ao(&sample.downlink[cell], layout, cell, cfg.power, cfg.noise, config)?;
        p.extend(out.powers);
    }
    Ok(Labels { p, q: None })
}

/// The labeler matching the scenario kind.
pub fn default_labels(cfg: &ScenarioConfig, sample: &Sample) -> Result<Labels> {
    match cfg.kind {
        crate::channels::ScenarioKind::Multicell => multicell_labels(cfg, sample, &AoConfig::default()),
        _ => wmmse_labels(cfg, sample, &WmmseConfig::default()),
    }
}
