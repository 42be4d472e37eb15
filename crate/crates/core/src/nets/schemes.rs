//! The scheme registry: which networks each scheme trains and how it is
//! scored on test data.

use alloc::format;
use alloc::vec::Vec;

use super::loss::{instances, instances_with_inputs, Instance, LossWeights, Recovery};
use super::model::{NetSpec, Network, Role};
use super::train::{fit_scales, predict, split_validation, train, EpochRecord, Objective, TrainConfig};
use crate::beamforming::graph::InverseForm;
use crate::beamforming::{multicell_sum_rate, sum_rate, CellLayout};
use crate::channels::Dataset;
use crate::linalg::CMat;
use crate::pilots::{make_dft_pilots, LmmseEstimator};
use crate::solvers::{multicell_ao, wmmse, AoConfig, WmmseConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    /// CSI-Net, Power-Net and optimal-structure beams, hybrid loss.
    Proposed,
    /// As `Proposed` with zero forcing inside the rate term.
    ProposedZfLoss,
    /// As `Proposed` with the reduced-dimension inverse.
    ProposedReduced,
    /// WMMSE on the true downlink channel (single cell).
    Wmmse,
    /// Per-cell SLNR alternating optimization on the true channels.
    SlnrAo,
    /// Learned channel followed by a beamforming net.
    LearnedChBf,
    /// Learned channel followed by zero forcing.
    LearnedChZf,
    /// Learned channel followed by equal-power SLNR beams.
    LearnedChSlnr,
    /// LMMSE pilot estimate, a CSI-Net on top, then the classical solver.
    LmmseThenWmmse,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::Proposed,
        Scheme::ProposedZfLoss,
        Scheme::ProposedReduced,
        Scheme::Wmmse,
        Scheme::SlnrAo,
        Scheme::LearnedChBf,
        Scheme::LearnedChZf,
        Scheme::LearnedChSlnr,
        Scheme::LmmseThenWmmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::ProposedZfLoss => "proposed_zf_loss",
            Scheme::ProposedReduced => "proposed_reduced",
            Scheme::Wmmse => "wmmse",
            Scheme::SlnrAo => "slnr_ao",
            Scheme::LearnedChBf => "learned_ch_bf",
            Scheme::LearnedChZf => "learned_ch_zf",
            Scheme::LearnedChSlnr => "learned_ch_slnr",
            Scheme::LmmseThenWmmse => "lmmse_then_wmmse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown scheme {s:?}")))
    }

    /// Networks the scheme needs, in training order.
    pub fn networks(self) -> &'static [NetKey] {
        match self {
            Scheme::Proposed => &[NetKey::Proposed],
            Scheme::ProposedZfLoss => &[NetKey::ProposedZfLoss],
            Scheme::ProposedReduced => &[NetKey::ProposedReduced],
            Scheme::Wmmse | Scheme::SlnrAo => &[],
            Scheme::LearnedChBf => &[NetKey::Channel, NetKey::Beamformer],
            Scheme::LearnedChZf | Scheme::LearnedChSlnr => &[NetKey::Channel],
            Scheme::LmmseThenWmmse => &[NetKey::LmmseChannel],
        }
    }

    pub fn is_learned(self) -> bool {
        !self.networks().is_empty()
    }

    /// Whether the scheme forms zero-forcing beams, which needs at least as
    /// many antennas as users per cell.
    pub fn uses_zf(self) -> bool {
        matches!(self, Scheme::LearnedChZf | Scheme::ProposedZfLoss)
    }

    /// Whether the scheme needs power labels in the training data.
    pub fn needs_labels(self) -> bool {
        self.networks().iter().any(|k| k.role() == Role::Proposed)
    }
}

/// A trainable network of the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NetKey {
    Proposed,
    ProposedZfLoss,
    ProposedReduced,
    /// CSI-Net trained on the channel loss alone.
    Channel,
    /// Beamforming net trained on the rate over learned channels.
    Beamformer,
    /// CSI-Net fed with LMMSE pilot estimates.
    LmmseChannel,
}

impl NetKey {
    pub const ALL: [NetKey; 6] = [
        NetKey::Proposed,
        NetKey::ProposedZfLoss,
        NetKey::ProposedReduced,
        NetKey::Channel,
        NetKey::Beamformer,
        NetKey::LmmseChannel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetKey::Proposed => "proposed",
            NetKey::ProposedZfLoss => "proposed_zf_loss",
            NetKey::ProposedReduced => "proposed_reduced",
            NetKey::Channel => "channel",
            NetKey::Beamformer => "beamformer",
            NetKey::LmmseChannel => "lmmse_channel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        NetKey::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown network {s:?}")))
    }

    pub fn role(self) -> Role {
        match self {
            NetKey::Proposed | NetKey::ProposedZfLoss | NetKey::ProposedReduced => Role::Proposed,
            NetKey::Channel | NetKey::LmmseChannel => Role::Channel,
            NetKey::Beamformer => Role::Beamformer,
        }
    }

    /// Loss and beam recovery. `weights` applies to the hybrid-loss networks;
    /// the separate-learning networks use their fixed objectives.
    pub fn objective(self, multicell: bool, weights: LossWeights, n0: f64) -> Objective {
        let optimal = |form| {
            if multicell {
                Recovery::Slnr(form)
            } else {
                Recovery::Optimal(form)
            }
        };
        let channel_only = LossWeights {
            channel: 1.0,
            power: 0.0,
            rate: 0.0,
        };
        let (weights, recovery, eval_recovery) = match self {
            NetKey::Proposed => (weights, optimal(InverseForm::Full), optimal(InverseForm::Full)),
            NetKey::ProposedReduced => (weights, optimal(InverseForm::Reduced), optimal(InverseForm::Reduced)),
            NetKey::ProposedZfLoss => (weights, Recovery::Zf, optimal(InverseForm::Full)),
            NetKey::Channel | NetKey::LmmseChannel => (channel_only, Recovery::Zf, Recovery::Slnr(InverseForm::Full)),
            NetKey::Beamformer => (
                LossWeights {
                    channel: 0.0,
                    power: 0.0,
                    rate: 1.0,
                },
                Recovery::Learned,
                Recovery::Learned,
            ),
        };
        Objective {
            weights,
            recovery,
            n0,
            eval_recovery,
        }
    }

    fn seed_offset(self) -> u64 {
        NetKey::ALL.iter().position(|k| *k == self).unwrap_or(0) as u64 + 1
    }
}

/// Networks trained for a scenario, plus the per-BS LMMSE estimators used
/// by the `lmmse_then_wmmse` scheme (empty without pilots).
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub spec: NetSpec,
    pub weights: LossWeights,
    pub nets: Vec<(NetKey, Network)>,
    pub lmmse: Vec<LmmseEstimator>,
}

impl Trained {
    pub fn get(&self, key: NetKey) -> Option<&Network> {
        self.nets.iter().find(|(k, _)| *k == key).map(|(_, n)| n)
    }
}

/// Network keys needed by a scheme list, with dependencies, in training
/// order.
pub fn required_networks(schemes: &[Scheme]) -> Vec<NetKey> {
    let mut keys: Vec<NetKey> = schemes.iter().flat_map(|s| s.networks().iter().copied()).collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Per-BS LMMSE estimators fitted on the true uplink channels of `ds`.
pub fn fit_lmmse(ds: &Dataset) -> Result<Vec<LmmseEstimator>> {
    let cfg = &ds.config;
    let Some(pc) = cfg.pilots else {
        return Ok(Vec::new());
    };
    let x = make_dft_pilots(cfg.k_total(), pc.len, cfg.pilot_power());
    (0..cfg.n_cells)
        .map(|j| {
            let hs: Vec<CMat> = ds.samples.iter().map(|s| s.uplink[j].clone()).collect();
            LmmseEstimator::fit(&hs, &x, cfg.pilot_noise())
        })
        .collect()
}

/// Instances whose inputs are LMMSE estimates from the received pilots, or
/// the plain inputs without pilots.
pub fn lmmse_instances(ds: &Dataset, lmmse: &[LmmseEstimator]) -> Result<Vec<Instance>> {
    if lmmse.is_empty() {
        return instances(ds);
    }
    instances_with_inputs(ds, |s, j| {
        let y = s
            .received
            .get(j)
            .ok_or_else(|| Error::shape(format!("sample {} lacks received pilots", s.index)))?;
        lmmse[j].estimate(y)
    })
}

/// Trains the networks `keys` on `ds`. `on_epoch` sees every log row.
pub fn train_networks(
    ds: &Dataset,
    keys: &[NetKey],
    spec: &NetSpec,
    weights: &LossWeights,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(NetKey, &EpochRecord),
) -> Result<Trained> {
    resume_networks(ds, keys, spec, weights, cfg, None, on_epoch)
}

/// Like [`train_networks`], continuing from `start`: networks it holds keep
/// their parameters and scales, and epochs are numbered after the given
/// last epoch. LMMSE estimators are reused when present.
pub fn resume_networks(
    ds: &Dataset,
    keys: &[NetKey],
    spec: &NetSpec,
    weights: &LossWeights,
    cfg: &TrainConfig,
    start: Option<(&Trained, usize)>,
    on_epoch: &mut dyn FnMut(NetKey, &EpochRecord),
) -> Result<Trained> {
    spec.check_scenario(&ds.config)?;
    let sc = &ds.config;
    let multicell = sc.n_cells > 1;
    let mut trained = Trained {
        spec: spec.clone(),
        weights: *weights,
        nets: Vec::new(),
        lmmse: Vec::new(),
    };
    let first_epoch = start.map_or(0, |(_, e)| e);
    let previous = |key: NetKey| start.and_then(|(t, _)| t.get(key));
    let mut keys = keys.to_vec();
    if keys.contains(&NetKey::Beamformer) && !keys.contains(&NetKey::Channel) {
        keys.push(NetKey::Channel);
    }
    keys.sort();
    keys.dedup();
    // the beamformer learns on the channel net's predictions
    keys.sort_by_key(|k| *k == NetKey::Beamformer);
    let base = instances(ds)?;
    for key in keys {
        let obj = key.objective(multicell, *weights, sc.noise);
        let data = match key {
            NetKey::LmmseChannel => {
                trained.lmmse = match start {
                    Some((t, _)) if !t.lmmse.is_empty() => t.lmmse.clone(),
                    _ => fit_lmmse(ds)?,
                };
                lmmse_instances(ds, &trained.lmmse)?
            }
            NetKey::Beamformer => {
                let ch = trained.get(NetKey::Channel).expect("channel net trained first");
                learned_channel_instances(ch, &base, sc.noise)?
            }
            _ => base.clone(),
        };
        let (tr, va) = split_validation(data, cfg.validation_fraction);
        let mut net = match previous(key) {
            Some(prev) => {
                if prev.spec != *spec || prev.role != key.role() {
                    return Err(Error::shape(format!(
                        "saved {} network does not match the spec",
                        key.name()
                    )));
                }
                prev.clone()
            }
            None => {
                let mut net = Network::new(
                    spec.clone(),
                    key.role(),
                    sc.power,
                    cfg.seed.wrapping_add(key.seed_offset()),
                )?;
                fit_scales(&mut net, &tr)?;
                net
            }
        };
        train(&mut net, &tr, &va, &obj, cfg, first_epoch, &mut |r| on_epoch(key, r))?;
        trained.nets.push((key, net));
    }
    Ok(trained)
}

/// Instances whose input and target are a channel net's predictions.
pub fn learned_channel_instances(channel_net: &Network, items: &[Instance], n0: f64) -> Result<Vec<Instance>> {
    let preds = predict(channel_net, items, Recovery::Slnr(InverseForm::Full), n0)?;
    Ok(items
        .iter()
        .zip(preds)
        .map(|(i, p)| {
            let h = p.h_hat.expect("channel nets predict channels");
            Instance {
                sample: i.sample,
                cell: i.cell,
                input: h.clone(),
                target: h,
                labels: None,
            }
        })
        .collect())
}

/// Scores of one scheme on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeScore {
    pub scheme: Scheme,
    /// Actual sum rate of every test sample on the true downlink channels.
    pub rates: Vec<f64>,
    /// Mean NMSE of the channel prediction, for schemes that predict one.
    pub nmse: Option<f64>,
}

impl SchemeScore {
    pub fn mean(&self) -> f64 {
        mean(&self.rates)
    }

    pub fn stderr(&self) -> f64 {
        stderr(&self.rates)
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard error of the mean (0 below two samples).
pub fn stderr(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    crate::math::sqrt(var / n as f64)
}

/// Classical solver settings used at evaluation time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverConfigs {
    pub wmmse: WmmseConfig,
    pub ao: AoConfig,
}

/// Scores `scheme` on `ds`. Learned schemes need `trained`; every scheme is
/// scored with the actual SINR on the true downlink channels.
pub fn evaluate(
    scheme: Scheme,
    trained: Option<&Trained>,
    ds: &Dataset,
    solvers: &SolverConfigs,
) -> Result<SchemeScore> {
    let cfg = &ds.config;
    let layout = CellLayout {
        n_cells: cfg.n_cells,
        k: cfg.k,
    };
    let multicell = cfg.n_cells > 1;
    let score = |s: &crate::channels::Sample, beams: &[CMat]| -> f64 {
        if multicell {
            multicell_sum_rate(&s.downlink, beams, layout, cfg.noise)
        } else {
            sum_rate(&s.downlink[0], &beams[0], cfg.noise)
        }
    };
    let mut rates = Vec::with_capacity(ds.len());
    let mut nmse = None;
    match scheme {
        Scheme::Wmmse => {
            if multicell {
                return Err(Error::config(
                    "wmmse is a single-cell scheme; use slnr_ao for multicell",
                ));
            }
            for s in &ds.samples {
                let out =
                    wmmse(&s.downlink[0], cfg.power, cfg.noise, &solvers.wmmse).map_err(|e| e.at_sample(s.index))?;
                rates.push(score(s, &[out.w]));
            }
        }
        Scheme::SlnrAo => {
            for s in &ds.samples {
                let beams = (0..cfg.n_cells)
                    .map(|j| {
                        multicell_ao(&s.downlink[j], layout, j, cfg.power, cfg.noise, &solvers.ao).map(|o| o.beams)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.at_sample(s.index))?;
                rates.push(score(s, &beams));
            }
        }
        _ => {
            let trained =
                trained.ok_or_else(|| Error::config(format!("scheme {} needs trained networks", scheme.name())))?;
            trained.spec.check_scenario(cfg)?;
            let missing = |k: NetKey| Error::config(format!("checkpoint lacks the {} network", k.name()));
            let (key, recovery) = match scheme {
                Scheme::LearnedChBf => (NetKey::Channel, Recovery::Slnr(InverseForm::Full)),
                Scheme::LearnedChZf => (NetKey::Channel, Recovery::Zf),
                Scheme::LearnedChSlnr => (NetKey::Channel, Recovery::Slnr(InverseForm::Full)),
                Scheme::LmmseThenWmmse => (NetKey::LmmseChannel, Recovery::Slnr(InverseForm::Full)),
                s => {
                    let k = s.networks()[0];
                    (k, k.objective(multicell, trained.weights, cfg.noise).eval_recovery)
                }
            };
            let net = trained.get(key).ok_or_else(|| missing(key))?;
            let items = if key == NetKey::LmmseChannel {
                lmmse_instances(ds, &trained.lmmse)?
            } else {
                instances(ds)?
            };
            let preds = predict(net, &items, recovery, cfg.noise)?;
            let mut acc = 0.0;
            for (i, p) in items.iter().zip(&preds) {
                let h = p.h_hat.as_ref().expect("channel prediction");
                acc += h.sub(&i.target).frob_norm_sqr() / i.target.frob_norm_sqr().max(f64::MIN_POSITIVE);
            }
            nmse = Some(acc / items.len().max(1) as f64);
            let beams: Vec<CMat> = match scheme {
                Scheme::LearnedChBf => {
                    let bf = trained
                        .get(NetKey::Beamformer)
                        .ok_or_else(|| missing(NetKey::Beamformer))?;
                    let learned = learned_channel_instances(net, &items, cfg.noise)?;
                    predict(bf, &learned, Recovery::Learned, cfg.noise)?
                        .into_iter()
                        .map(|p| p.beams)
                        .collect()
                }
                Scheme::LmmseThenWmmse => items
                    .iter()
                    .zip(&preds)
                    .map(|(i, p)| {
                        let h = p.h_hat.as_ref().expect("channel prediction");
                        let w = if multicell {
                            let local = CellLayout {
                                n_cells: cfg.n_cells,
                                k: cfg.k,
                            };
                            multicell_ao(h, local, 0, cfg.power, cfg.noise, &solvers.ao).map(|o| o.beams)
                        } else {
                            wmmse(h, cfg.power, cfg.noise, &solvers.wmmse).map(|o| o.w)
                        };
                        w.map_err(|e| e.at_sample(i.sample))
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => preds.into_iter().map(|p| p.beams).collect(),
            };
            for (s, chunk) in ds.samples.iter().zip(beams.chunks(cfg.n_cells)) {
                rates.push(score(s, chunk));
            }
        }
    }
    Ok(SchemeScore { scheme, rates, nmse })
}
