use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpConfig {
    pub max_iterations: usize,
    /// Stop once the projected gradient norm (log domain) falls below this.
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    /// Step shrink factor in the backtracking line search.
    pub shrink: f64,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo: f64,
    /// Keep the `+1` of `log2(1 + SLNR)` instead of the high-SNR product
    /// of SLNRs.
    pub keep_one: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            max_iterations: 10_000,
            gradient_tolerance: 1e-7,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            keep_one: false,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.gradient_tolerance > 0.0
            && self.initial_step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("invalid GP step parameters"))
        }
    }
}

/// `Σ_k log(a_k/p_k + b_k)`, or with `keep_one` the same terms divided by
/// `1 + a_k/p_k + b_k`. Minimizing it maximizes the product of SLNRs
/// (respectively of `1 + SLNR`).
pub fn gp_objective(a: &[f64], b: &[f64], p: &[f64], keep_one: bool) -> f64 {
    a.iter()
        .zip(b)
        .zip(p)
        .map(|((a, b), p)| {
            let x = a / p + b;
            if keep_one {
                math::log(x / (1.0 + x))
            } else {
                math::log(x)
            }
        })
        .sum()
}

/// Derivative of [`gp_objective`] with respect to `y_k = log p_k`.
fn log_gradient(a: &[f64], b: &[f64], p: &[f64], keep_one: bool) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(p)
        .map(|((a, b), p)| {
            let t = a / p;
            let x = t + b;
            if keep_one {
                -t / (x * (1.0 + x))
            } else {
                -t / x
            }
        })
        .collect()
}

/// Second derivative of [`gp_objective`] in `y_k`, used as a diagonal
/// scaling of the gradient.
fn log_curvature(a: &[f64], b: &[f64], p: &[f64], keep_one: bool) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(p)
        .map(|((a, b), p)| {
            let t = a / p;
            let x = t + b;
            if keep_one {
                // d/dy of -t / (x (1 + x)) with dt/dy = dx/dy = -t
                let d = x * (1.0 + x);
                t / d - t * t * (1.0 + 2.0 * x) / (d * d)
            } else {
                t * b / (x * x)
            }
        })
        .collect()
}

/// Scaled descent direction `-D (g - λ p)` tangent to the budget surface
/// `Σ e^{y_k} = P` (normal `p`), with `D` the inverse of the clipped
/// curvature.
fn descent_direction(g: &[f64], curvature: &[f64], p: &[f64]) -> Vec<f64> {
    let cmax = curvature.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let floor = (1e-3 * cmax).max(1e-12);
    let d: Vec<f64> = curvature.iter().map(|c| 1.0 / c.abs().max(floor)).collect();
    let pdg: f64 = p.iter().zip(&d).zip(g).map(|((p, d), g)| p * d * g).sum();
    let pdp: f64 = p.iter().zip(&d).map(|(p, d)| p * p * d).sum();
    let lambda = pdg / pdp;
    g.iter()
        .zip(p)
        .zip(&d)
        .map(|((g, p), d)| -d * (g - lambda * p))
        .collect()
}

/// Euclidean component of `g` tangent to the budget surface.
fn tangent(g: &[f64], p: &[f64]) -> Vec<f64> {
    let gp: f64 = g.iter().zip(p).map(|(x, y)| x * y).sum();
    let pp: f64 = p.iter().map(|y| y * y).sum();
    g.iter().zip(p).map(|(x, y)| x - gp / pp * y).collect()
}

fn on_budget(y: &[f64], power: f64) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = y.iter().map(|v| math::exp(v - m)).sum();
    y.iter().map(|v| power * math::exp(v - m) / s).collect()
}

/// Minimizes [`gp_objective`] over `p > 0`, `Σp ≤ P`. The objective
/// decreases in every `p_k`, so the budget is active; the solver runs
/// projected descent in `y = log p` along the budget surface with
/// Armijo backtracking, starting from the equal split. The gradient is
/// scaled by the (diagonal) inverse curvature of the objective.
pub fn gp_power(a: &[f64], b: &[f64], power: f64, config: &GpConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if a.len() != b.len() {
        return Err(Error::shape("GP coefficient lengths differ"));
    }
    if a.iter().any(|x| !(*x > 0.0)) || b.iter().any(|x| !(*x >= 0.0)) || !(power > 0.0) {
        return Err(Error::config("GP needs a > 0, b >= 0 and P > 0"));
    }
    let k = a.len();
    if k <= 1 {
        return Ok(vec![power; k]);
    }
    let mut y = vec![math::log(power / k as f64); k];
    let mut p = on_budget(&y, power);
    let mut f = gp_objective(a, b, &p, config.keep_one);
    for _ in 0..config.max_iterations {
        let g = log_gradient(a, b, &p, config.keep_one);
        let gt = tangent(&g, &p);
        if math::sqrt(gt.iter().map(|x| x * x).sum::<f64>()) < config.gradient_tolerance {
            return Ok(p);
        }
        let dir = descent_direction(&g, &log_curvature(a, b, &p, config.keep_one), &p);
        let slope: f64 = g.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            return Ok(p);
        }
        let mut accepted = false;
        let mut t = config.initial_step;
        while t > 1e-30 {
            let ny: Vec<f64> = y.iter().zip(&dir).map(|(y, d)| y + t * d).collect();
            let np = on_budget(&ny, power);
            let nf = gp_objective(a, b, &np, config.keep_one);
            if nf <= f + config.armijo * t * slope {
                y = np.iter().map(|v| math::log(*v)).collect();
                p = np;
                f = nf;
                accepted = true;
                break;
            }
            t *= config.shrink;
        }
        if !accepted {
            // the objective no longer decreases at double precision
            return Ok(p);
        }
    }
    Err(Error::NoConvergence {
        solver: "gp_power",
        iterations: config.max_iterations,
    })
}
