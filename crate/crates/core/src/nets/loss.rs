//! Training instances, batches and the hybrid loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::model::{features, Network, Outputs, Role};
use crate::autodiff::{CTensor, Graph, NodeId};
use crate::beamforming::graph::{self as bg, InverseForm};
use crate::beamforming::{CellLayout, DirectionWeighting};
use crate::channels::{Dataset, ScenarioConfig};
use crate::linalg::CMat;
use crate::{Error, Result};

/// Weights of the channel, power and rate terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub channel: f64,
    pub power: f64,
    /// Only the magnitude is used: the rate always enters the minimized
    /// loss with a negative sign.
    pub rate: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            channel: 1.0,
            power: 1.0,
            rate: 0.001,
        }
    }
}

impl LossWeights {
    /// Defaults per scenario: the multicell rate term carries unit weight.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        if cfg.n_cells > 1 {
            LossWeights {
                rate: 1.0,
                ..Self::default()
            }
        } else {
            Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.channel, self.power, self.rate];
        if all.iter().any(|w| !w.is_finite()) || self.channel < 0.0 || self.power < 0.0 {
            return Err(Error::config(
                "loss weights must be finite, channel and power weights nonnegative",
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::config("at least one loss weight must be nonzero"));
        }
        Ok(())
    }
}

/// How beams are formed from a network's outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Recovery {
    /// Optimal structure from the predicted `(p, q)`.
    Optimal(InverseForm),
    /// Zero forcing on the predicted channel, equal to the budget.
    Zf,
    /// Max-SLNR directions with the predicted powers (equal split when the
    /// network has no Power-Net).
    Slnr(InverseForm),
    /// Beams produced directly by a beamforming net.
    Learned,
}

/// One network example: a single-cell sample, or one BS of a multicell
/// sample with columns reordered so that its own users come first.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub sample: usize,
    pub cell: usize,
    pub input: CMat,
    /// True downlink channel in the same column order.
    pub target: CMat,
    /// Power labels: `p` then `q` (single cell), or the cell's `p`.
    pub labels: Option<Vec<f64>>,
}

/// Column permutation putting `cell`'s users first, the rest in
/// cell-major order.
pub fn local_first_order(layout: CellLayout, cell: usize) -> Vec<usize> {
    let mut order: Vec<usize> = layout.users_of(cell).collect();
    order.extend((0..layout.k_total()).filter(|u| layout.cell_of(*u) != cell));
    order
}

pub fn permute_columns(h: &CMat, order: &[usize]) -> CMat {
    CMat::from_fn(h.rows(), order.len(), |i, j| h[(i, order[j])])
}

/// Splits a dataset into network instances.
pub fn instances(ds: &Dataset) -> Result<Vec<Instance>> {
    instances_with_inputs(ds, |s, j| Ok(s.input[j].clone()))
}

/// Like [`instances`], with the per-BS network input computed by `input`.
pub fn instances_with_inputs(
    ds: &Dataset,
    input: impl Fn(&crate::channels::Sample, usize) -> Result<CMat>,
) -> Result<Vec<Instance>> {
    let cfg = &ds.config;
    let layout = CellLayout {
        n_cells: cfg.n_cells,
        k: cfg.k,
    };
    let mut out = Vec::with_capacity(ds.len() * cfg.n_cells);
    for s in &ds.samples {
        if s.downlink.len() != cfg.n_cells || s.input.len() != cfg.n_cells {
            return Err(Error::shape(format!("sample {} has the wrong number of BSs", s.index)));
        }
        for j in 0..cfg.n_cells {
            let order = local_first_order(layout, j);
            let labels = s.labels.as_ref().map(|l| {
                if cfg.n_cells > 1 {
                    l.p[j * cfg.k..(j + 1) * cfg.k].to_vec()
                } else {
                    let mut v = l.p.clone();
                    v.extend(l.q.iter().flatten());
                    v
                }
            });
            out.push(Instance {
                sample: s.index,
                cell: j,
                input: permute_columns(&input(s, j)?, &order),
                target: permute_columns(&s.downlink[j], &order),
                labels,
            });
        }
    }
    Ok(out)
}

/// Tensors of one mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: CTensor,
    /// Normalized flattened targets `[B, 2 N_t K_c]`.
    pub target_flat: CTensor,
    /// True channels `[B, N_t, K_c]`.
    pub target: CTensor,
    /// Labels divided by the budget, `[B, heads·K]`.
    pub labels: Option<CTensor>,
    /// Sample index of the first unlabeled instance, if any.
    pub unlabeled: Option<usize>,
}

impl Batch {
    pub fn new(net: &Network, items: &[&Instance]) -> Result<Self> {
        let inputs: Vec<&CMat> = items.iter().map(|i| &i.input).collect();
        let x = net.encode_inputs(&inputs)?;
        let (_, s_out) = net.scales();
        let flat: Vec<f64> = items
            .iter()
            .flat_map(|i| features::flatten(&i.target))
            .map(|v| v / s_out)
            .collect();
        let b = items.len();
        let target_flat = CTensor::from_real(&[b, net.spec.flat_len()], flat)?;
        let targets: Vec<CMat> = items.iter().map(|i| i.target.clone()).collect();
        let target = CTensor::stack_cmats(&targets)?;
        let width = net.spec.power_heads() * net.spec.k;
        let unlabeled = items
            .iter()
            .find(|i| i.labels.as_ref().is_none_or(|l| l.len() != width))
            .map(|i| i.sample);
        let labels = if unlabeled.is_none() {
            let data = items
                .iter()
                .flat_map(|i| i.labels.iter().flatten().map(|v| v / net.power))
                .collect();
            Some(CTensor::from_real(&[b, width], data)?)
        } else {
            None
        };
        Ok(Batch {
            x,
            target_flat,
            target,
            labels,
            unlabeled,
        })
    }
}

/// Loss nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: NodeId,
    /// Channel MSE in normalized units.
    pub channel: Option<NodeId>,
    /// Power MSE of `p/P` (and `q/P`).
    pub power: Option<NodeId>,
    /// Per-instance rate `[B]` used in the loss.
    pub rate: Option<NodeId>,
}

/// Beams `[B, N_t, K]` formed from a network's outputs.
pub fn recover_beams(g: &mut Graph, net: &Network, out: &Outputs, recovery: Recovery, n0: f64) -> Result<NodeId> {
    let k = net.spec.k;
    let need_h = || out.h_hat.ok_or(Error::config("recovery needs a channel prediction"));
    match recovery {
        Recovery::Optimal(form) => {
            let (p, q) = match (out.p, out.q) {
                (Some(p), Some(q)) => (p, q),
                _ => return Err(Error::config("optimal recovery needs predicted p and q")),
            };
            bg::reconstruct(g, need_h()?, p, q, n0, DirectionWeighting::PerInterferer, form)
        }
        Recovery::Zf => {
            let h = need_h()?;
            let own = g.slice_last(h, 0, k)?;
            bg::zf(g, own, net.power)
        }
        Recovery::Slnr(form) => {
            let h = need_h()?;
            let p = match out.p {
                Some(p) => p,
                None => {
                    let b = g.value(h).shape()[0];
                    g.input(CTensor::from_real(&[b, k], vec![net.power / k as f64; b * k])?)
                }
            };
            bg::slnr_beams(g, h, p, n0, form)
        }
        Recovery::Learned => out.w.ok_or(Error::config("learned recovery needs a beamforming net")),
    }
}

/// Per-instance rate `[B]`: the sum rate in a single cell, the cell's
/// SLNR rate otherwise.
pub fn instance_rate(g: &mut Graph, channel: NodeId, w: NodeId, n0: f64, multicell: bool) -> Result<NodeId> {
    if multicell {
        bg::slnr_sum_rate(g, channel, w, n0)
    } else {
        bg::sum_rate(g, channel, w, n0)
    }
}

/// `α_H L_H + α_P L_P − |α_R| mean(rate)`, with the rate computed on the
/// learned channel (or the true one when `rate_on_true_channel`).
#[allow(clippy::too_many_arguments)]
pub fn hybrid_loss(
    g: &mut Graph,
    net: &Network,
    out: &Outputs,
    batch: &Batch,
    weights: &LossWeights,
    recovery: Recovery,
    n0: f64,
    rate_on_true_channel: bool,
) -> Result<LossTerms> {
    weights.validate()?;
    let mut parts: Vec<NodeId> = Vec::new();
    let (mut channel_term, mut power_term, mut rate_term) = (None, None, None);
    if let Some(flat) = out.h_flat {
        let t = g.input(batch.target_flat.clone());
        let d = g.sub(flat, t)?;
        let sq = g.abs2(d)?;
        let lh = g.mean_all(sq)?;
        channel_term = Some(lh);
        if weights.channel != 0.0 {
            parts.push(g.scale(lh, weights.channel)?);
        }
    }
    if net.role == Role::Proposed && weights.power != 0.0 {
        let labels = batch
            .labels
            .clone()
            .ok_or(Error::MissingLabels(batch.unlabeled.unwrap_or(0)))?;
        let pred = match out.q {
            Some(q) => {
                let p = out.p.expect("Power-Net emits p with q");
                g.concat(&[p, q])?
            }
            None => out.p.expect("Power-Net emits p"),
        };
        let pred = g.scale(pred, 1.0 / net.power)?;
        let l = g.input(labels);
        let d = g.sub(pred, l)?;
        let sq = g.abs2(d)?;
        let lp = g.mean_all(sq)?;
        power_term = Some(lp);
        parts.push(g.scale(lp, weights.power)?);
    }
    if weights.rate != 0.0 {
        let w = recover_beams(g, net, out, recovery, n0)?;
        let channel = match out.h_hat {
            Some(h) if !rate_on_true_channel => h,
            _ => g.input(batch.target.clone()),
        };
        let rate = instance_rate(g, channel, w, n0, net.spec.n_cells > 1)?;
        rate_term = Some(rate);
        let mean = g.mean_all(rate)?;
        parts.push(g.scale(mean, -weights.rate.abs())?);
    }
    let mut total = *parts
        .first()
        .ok_or(Error::config("no loss term applies to this network"))?;
    for p in &parts[1..] {
        total = g.add(total, *p)?;
    }
    Ok(LossTerms {
        total,
        channel: channel_term,
        power: power_term,
        rate: rate_term,
    })
}
