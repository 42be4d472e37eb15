use alloc::vec::Vec;

use rand::Rng;

use super::ScenarioConfig;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn dist(self, other: Point) -> f64 {
        math::sqrt((self.x - other.x) * (self.x - other.x) + (self.y - other.y) * (self.y - other.y))
    }
}

/// Uplink path loss in dB at distance `d_km`: 127 + 30 log10(d).
pub fn uplink_path_loss_db(d_km: f64) -> f64 {
    127.0 + 30.0 * math::log10(d_km)
}

/// Downlink path loss in dB at distance `d_km`: 128.1 + 37.6 log10(d).
pub fn downlink_path_loss_db(d_km: f64) -> f64 {
    128.1 + 37.6 * math::log10(d_km)
}

/// Thermal noise power in watts for a density in dBm/Hz over `bandwidth` Hz.
pub fn thermal_noise_watts(density_dbm_hz: f64, bandwidth: f64) -> f64 {
    math::db_to_linear(density_dbm_hz + math::linear_to_db(bandwidth)) * 1e-3
}

/// Centres of `n` hexagonal cells, spiralling outward from the origin, with
/// neighbouring centres `spacing` apart.
pub fn hex_positions(n: usize, spacing: f64) -> Vec<Point> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
    let to_point = |q: i64, r: i64| Point {
        x: spacing * (q as f64 + r as f64 / 2.0),
        y: spacing * (r as f64 * math::sqrt(3.0) / 2.0),
    };
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(Point { x: 0.0, y: 0.0 });
    let mut ring = 1i64;
    while out.len() < n {
        // start at ring * direction 4, walk each of the six sides
        let (mut q, mut r) = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for d in DIRS {
            for _ in 0..ring {
                if out.len() < n {
                    out.push(to_point(q, r));
                }
                q += d.0;
                r += d.1;
            }
        }
        ring += 1;
    }
    out
}

/// Cell layout with user drops and per-link large-scale gains.
///
/// Users are ordered cell-major: user `i * k + m` is the `m`-th user of
/// cell `i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MulticellTopology {
    pub bs: Vec<Point>,
    pub users: Vec<Point>,
    pub radius: f64,
    /// `uplink_gain[j][u]`: linear gain between BS `j` and user `u`.
    pub uplink_gain: Vec<Vec<f64>>,
    pub downlink_gain: Vec<Vec<f64>>,
}

/// Attempts allowed per user drop before giving up on the distance limits.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

impl MulticellTopology {
    /// Hexagonal layout with inter-site distance `√3 R`; users uniform in the
    /// disc of radius `R` around their BS, at least `min_distance` away.
    pub fn generate<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Self> {
        let radius = cfg.cell_radius;
        let bs = hex_positions(cfg.n_cells, math::sqrt(3.0) * radius);
        let mut users = Vec::with_capacity(cfg.k_total());
        for (cell, centre) in bs.iter().enumerate() {
            for _ in 0..cfg.k {
                let mut placed = None;
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let x = rng.random_range(-radius..=radius);
                    let y = rng.random_range(-radius..=radius);
                    let d = math::sqrt(x * x + y * y);
                    if d <= radius && d >= cfg.min_distance {
                        placed = Some(Point {
                            x: centre.x + x,
                            y: centre.y + y,
                        });
                        break;
                    }
                }
                users.push(placed.ok_or_else(|| {
                    Error::Geometry(alloc::format!(
                        "could not place a user in cell {cell} at distance {}..{} m",
                        cfg.min_distance,
                        radius
                    ))
                })?);
            }
        }
        let gains = |pl: fn(f64) -> f64| -> Vec<Vec<f64>> {
            bs.iter()
                .map(|b| {
                    users
                        .iter()
                        .map(|u| math::db_to_linear(-pl(b.dist(*u) / 1000.0)))
                        .collect()
                })
                .collect()
        };
        let uplink_gain = gains(uplink_path_loss_db);
        let downlink_gain = gains(downlink_path_loss_db);
        Ok(MulticellTopology {
            bs,
            users,
            radius,
            uplink_gain,
            downlink_gain,
        })
    }

    pub fn serving_distance(&self, user: usize, k_per_cell: usize) -> f64 {
        self.bs[user / k_per_cell].dist(self.users[user])
    }
}
