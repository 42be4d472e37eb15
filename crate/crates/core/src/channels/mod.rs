//! Channel generation and the uplink-to-downlink mappings of the four
//! scenarios.
//!
//! * `toy_square`: i.i.d. Rayleigh uplink, downlink is the elementwise square.
//! * `small_tdd`: i.i.d. Rayleigh uplink, downlink `h_D = c Φ h_U` with a
//!   per-user unitary `Φ` and scalar `c` modelling front-end mismatch.
//! * `massive_fdd`: ULA multipath uplink; the downlink reuses the geometry
//!   with squared path gains at the downlink frequency, then applies `c Φ`.
//! * `multicell`: the massive multipath model per BS-user link, scaled by
//!   distance-based path loss in a hexagonal layout.
//!
//! The mismatch parameters live in a [`MappingState`] drawn once per
//! scenario, so the uplink-to-downlink map is a fixed function across samples.

mod dataset;
mod topology;

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{CMat, C64};
use crate::math;
use crate::{Error, Result};

pub use dataset::{build_dataset, generate_sample, sample_rng, Dataset, Labeler, Labels, Sample};
pub use topology::{
    downlink_path_loss_db, hex_positions, thermal_noise_watts, uplink_path_loss_db, MulticellTopology, Point,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioKind {
    SmallTdd,
    MassiveFdd,
    Multicell,
    ToySquare,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::SmallTdd => "small_tdd",
            ScenarioKind::MassiveFdd => "massive_fdd",
            ScenarioKind::Multicell => "multicell",
            ScenarioKind::ToySquare => "toy_square",
        }
    }

    pub fn uses_multipath(self) -> bool {
        matches!(self, ScenarioKind::MassiveFdd | ScenarioKind::Multicell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Uplink pilot transmission used instead of perfect uplink CSI.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PilotConfig {
    /// Pilot length `L`.
    pub len: usize,
    /// Per-entry pilot power; `None` means the downlink budget `P`.
    pub power: Option<f64>,
    /// Receiver noise variance; `None` means `N0`.
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// BS antennas.
    pub n_t: usize,
    /// Users per cell.
    pub k: usize,
    pub n_cells: usize,
    /// Transmit power budget per BS (linear).
    pub power: f64,
    /// Receiver noise power (linear).
    pub noise: f64,
    /// Multipath components per link.
    pub paths: usize,
    pub f_up: f64,
    pub f_down: f64,
    /// Antenna spacing in downlink wavelengths.
    pub spacing: f64,
    /// Cell radius in metres.
    pub cell_radius: f64,
    /// Minimum user distance to its serving BS in metres.
    pub min_distance: f64,
    pub pilots: Option<PilotConfig>,
    pub seed: u64,
}

impl ScenarioConfig {
    fn base(kind: ScenarioKind, n_t: usize, k: usize) -> Self {
        ScenarioConfig {
            kind,
            n_t,
            k,
            n_cells: 1,
            power: 100.0,
            noise: 1.0,
            paths: 4,
            f_up: 2.5e9,
            f_down: 2.4e9,
            spacing: 0.5,
            cell_radius: 200.0,
            min_distance: 10.0,
            pilots: None,
            seed: 0,
        }
    }

    pub fn small_tdd(n_t: usize, k: usize) -> Self {
        Self::base(ScenarioKind::SmallTdd, n_t, k)
    }

    pub fn toy_square(n_t: usize, k: usize) -> Self {
        Self::base(ScenarioKind::ToySquare, n_t, k)
    }

    pub fn massive_fdd(n_t: usize, k: usize) -> Self {
        ScenarioConfig {
            power: 10.0,
            ..Self::base(ScenarioKind::MassiveFdd, n_t, k)
        }
    }

    /// Seven-cell layout defaults: 10 dBm per BS, thermal noise over 20 MHz.
    pub fn multicell(n_t: usize, k: usize, n_cells: usize) -> Self {
        ScenarioConfig {
            n_cells,
            power: math::db_to_linear(10.0) * 1e-3,
            noise: thermal_noise_watts(-174.0, 20e6),
            ..Self::base(ScenarioKind::Multicell, n_t, k)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.power = power;
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_pilots(mut self, pilots: PilotConfig) -> Self {
        self.pilots = Some(pilots);
        self
    }

    /// Users across all cells.
    pub fn k_total(&self) -> usize {
        self.k * self.n_cells
    }

    pub fn pilot_power(&self) -> f64 {
        self.pilots.and_then(|p| p.power).unwrap_or(self.power)
    }

    pub fn pilot_noise(&self) -> f64 {
        self.pilots.and_then(|p| p.noise).unwrap_or(self.noise)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_t == 0 || self.k == 0 || self.n_cells == 0 {
            return bad(alloc::format!(
                "n_t, k and n_cells must be at least 1 (got {}, {}, {})",
                self.n_t,
                self.k,
                self.n_cells
            ));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad(alloc::format!("power must be positive, got {}", self.power));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad(alloc::format!("noise must be positive, got {}", self.noise));
        }
        if self.kind != ScenarioKind::Multicell && self.n_cells != 1 {
            return bad(alloc::format!("{} uses a single cell", self.kind.name()));
        }
        if self.kind.uses_multipath() {
            if self.paths == 0 {
                return bad("multipath scenarios need at least one path".into());
            }
            if !(self.f_up > 0.0 && self.f_down > 0.0 && self.spacing > 0.0) {
                return bad("frequencies and antenna spacing must be positive".into());
            }
        }
        if self.kind == ScenarioKind::Multicell && !(self.cell_radius > 0.0 && self.min_distance >= 0.0) {
            return bad("cell radius must be positive".into());
        }
        if let Some(p) = self.pilots {
            if p.len == 0 {
                return bad("pilot length must be at least 1".into());
            }
            if p.power.is_some_and(|x| !(x > 0.0)) || p.noise.is_some_and(|x| !(x >= 0.0)) {
                return bad("pilot power must be positive and pilot noise nonnegative".into());
            }
        }
        Ok(())
    }
}

/// Circularly symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(rand_distr::StandardNormal);
    let im: f64 = rng.sample(rand_distr::StandardNormal);
    C64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` matrix of i.i.d. unit-variance complex Gaussian entries.
pub fn gen_uplink_rayleigh<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Haar-distributed unitary matrix from the QR factorization of a complex
/// Gaussian matrix (with `R` given a positive diagonal).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    loop {
        let g = gen_uplink_rayleigh(n, n, rng);
        if let Ok((q, _)) = g.qr() {
            return q;
        }
    }
}

/// Geometry of the paths between one BS and one user; shared by the uplink
/// and downlink of that link.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub angles: Vec<f64>,
    pub delays: Vec<f64>,
    pub phases: Vec<f64>,
    /// Uplink complex path gains.
    pub gains: Vec<C64>,
}

impl PathParams {
    /// Mean angle uniform on [-π/3, π/3], spread uniform on [-π/6, π/6],
    /// per-path angles uniform within the spread, delays on [0, 1e-4] s,
    /// phases on [-π, π] and Rayleigh gains.
    pub fn draw<R: Rng + ?Sized>(paths: usize, rng: &mut R) -> Self {
        use core::f64::consts::PI;
        let mean = rng.random_range(-PI / 3.0..=PI / 3.0);
        let spread: f64 = rng.random_range(-PI / 6.0..=PI / 6.0);
        let half = spread.abs() / 2.0;
        let mut p = PathParams {
            angles: Vec::with_capacity(paths),
            delays: Vec::with_capacity(paths),
            phases: Vec::with_capacity(paths),
            gains: Vec::with_capacity(paths),
        };
        for _ in 0..paths {
            let offset = if half > 0.0 {
                rng.random_range(-half..=half)
            } else {
                0.0
            };
            p.angles.push(mean + offset);
            p.delays.push(rng.random_range(0.0..=1e-4));
            p.phases.push(rng.random_range(-PI..=PI));
            p.gains.push(complex_gaussian(rng));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// ULA response `[1, e^{-j 2π s sinθ}, ..., e^{-j 2π s (N-1) sinθ}]` with the
/// spacing `s` in wavelengths of the carrier in use.
pub fn steering_vector(n_t: usize, theta: f64, spacing_wl: f64) -> Vec<C64> {
    let step = -2.0 * math::PI * spacing_wl * math::sin(theta);
    (0..n_t)
        .map(|i| {
            let ph = step * i as f64;
            C64::new(math::cos(ph), math::sin(ph))
        })
        .collect()
}

/// Multipath channel of one link. The uplink uses the uplink gains; the
/// downlink uses squared uplink gains. Antenna spacing is given in downlink
/// wavelengths, so the uplink array response scales it by `f_up / f_down`.
pub fn gen_ula_channel(cfg: &ScenarioConfig, path: &PathParams, dir: Direction) -> Vec<C64> {
    let (freq, spacing_wl) = match dir {
        Direction::Uplink => (cfg.f_up, cfg.spacing * cfg.f_up / cfg.f_down),
        Direction::Downlink => (cfg.f_down, cfg.spacing),
    };
    let mut h = alloc::vec![C64::new(0.0, 0.0); cfg.n_t];
    for l in 0..path.len() {
        let gain = match dir {
            Direction::Uplink => path.gains[l],
            Direction::Downlink => path.gains[l] * path.gains[l],
        };
        let ph = -2.0 * math::PI * math::fmod_unit(freq * path.delays[l]) + path.phases[l];
        let coef = gain * C64::new(math::cos(ph), math::sin(ph));
        for (hi, ai) in h.iter_mut().zip(steering_vector(cfg.n_t, path.angles[l], spacing_wl)) {
            *hi += coef * ai;
        }
    }
    h
}

/// Front-end mismatch parameters, fixed for a scenario instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MappingState {
    pub unitaries: Vec<CMat>,
    pub scalars: Vec<C64>,
}

/// RNG stream reserved for the mapping state; sample `i` uses stream `i`.
pub const MAPPING_STREAM: u64 = u64::MAX;

impl MappingState {
    /// Identity mapping (`Φ = I`, `c = 1`) for `users` users.
    pub fn identity(n_t: usize, users: usize) -> Self {
        MappingState {
            unitaries: alloc::vec![CMat::identity(n_t); users],
            scalars: alloc::vec![C64::new(1.0, 0.0); users],
        }
    }

    /// Draws `Φ_k` and `c_k` from the scenario seed. Single-cell scenarios
    /// get one pair per user. The multicell scenario draws a single pair
    /// shared by every user, so the map seen by a BS does not depend on
    /// which cell a column belongs to and one network serves all cells.
    pub fn draw(cfg: &ScenarioConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(MAPPING_STREAM);
        let users = if cfg.kind == ScenarioKind::Multicell { 1 } else { cfg.k };
        let mut s = MappingState {
            unitaries: Vec::with_capacity(users),
            scalars: Vec::with_capacity(users),
        };
        for _ in 0..users {
            s.unitaries.push(random_unitary(cfg.n_t, &mut rng));
            s.scalars.push(complex_gaussian(&mut rng));
        }
        s
    }

    /// Applies `c_k Φ_k` to user `k`'s vector (the shared pair when only one
    /// is stored).
    pub fn apply(&self, user: usize, h: &[C64]) -> Vec<C64> {
        let idx = if self.scalars.len() == 1 { 0 } else { user };
        let c = self.scalars[idx];
        self.unitaries[idx].mul_vec(h).into_iter().map(|x| x * c).collect()
    }
}

/// Elementwise square, the toy nonlinear map.
pub fn square_map(h: &CMat) -> CMat {
    CMat::from_fn(h.rows(), h.cols(), |i, j| h[(i, j)] * h[(i, j)])
}

/// Downlink channel of a single-cell scenario from its uplink channel (or,
/// for `massive_fdd`, from the per-user path parameters).
pub fn map_downlink(
    cfg: &ScenarioConfig,
    state: &MappingState,
    uplink: &CMat,
    paths: Option<&[PathParams]>,
) -> Result<CMat> {
    match cfg.kind {
        ScenarioKind::ToySquare => Ok(square_map(uplink)),
        ScenarioKind::SmallTdd => {
            let cols: Vec<Vec<C64>> = (0..uplink.cols()).map(|k| state.apply(k, &uplink.col(k))).collect();
            Ok(CMat::from_columns(&cols))
        }
        ScenarioKind::MassiveFdd | ScenarioKind::Multicell => {
            let paths = paths.ok_or_else(|| Error::config("multipath downlink mapping needs the path parameters"))?;
            let cols: Vec<Vec<C64>> = paths
                .iter()
                .enumerate()
                .map(|(k, p)| state.apply(k, &gen_ula_channel(cfg, p, Direction::Downlink)))
                .collect();
            Ok(CMat::from_columns(&cols))
        }
    }
}

/// Mean of `‖Ĥ − H‖² / ‖H‖²` over paired samples.
pub fn nmse(estimates: &[CMat], truths: &[CMat]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::shape("nmse needs equally many estimates and truths"));
    }
    if truths.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        if e.shape() != t.shape() {
            return Err(Error::shape("nmse operands differ in shape"));
        }
        let den = t.frob_norm_sqr();
        if den == 0.0 {
            return Err(Error::DivisionByZero("nmse of a zero channel"));
        }
        acc += e.sub(t).frob_norm_sqr() / den;
    }
    Ok(acc / truths.len() as f64)
}
