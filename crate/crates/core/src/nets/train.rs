//! Mini-batch training with best-validation selection.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{hybrid_loss, instance_rate, recover_beams, Batch, Instance, LossWeights, Recovery};
use super::model::{rms, Network};
use crate::autodiff::{Graph, Mode};
use crate::beamforming::{cell_slnr_rate, sum_rate, CellLayout};
use crate::linalg::CMat;
use crate::optim::{sgd_step, Adam};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Share of samples held out for validation.
    pub validation_fraction: f64,
    /// Score the rate term on the true channel instead of the learned one.
    pub rate_on_true_channel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            epochs: 200,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            validation_fraction: 0.1,
            rate_on_true_channel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch size and epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(
                "learning rate must be positive and the validation share in [0, 1)",
            ));
        }
        Ok(())
    }
}

/// One row of the training log. Channel and power losses are reported in
/// physical units (`(1/2TN_tK) Σ‖H − Ĥ‖²` and the MSE of `[p; q]`),
/// averaged over the epoch's training batches.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_channel: Option<f64>,
    pub loss_power: Option<f64>,
    /// Objective value being minimized (normalized units).
    pub loss_total: f64,
    pub val_loss: Option<f64>,
    /// Mean rate of the validation set on the true channels.
    pub val_rate: Option<f64>,
    pub val_nmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// What a network needs besides its parameters to be trained or run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    pub recovery: Recovery,
    pub n0: f64,
    /// Recovery used to score beams (may differ from the training one).
    pub eval_recovery: Recovery,
}

/// Holds out the last `fraction` of distinct samples. Instances of one
/// sample never straddle the split.
pub fn split_validation(instances: Vec<Instance>, fraction: f64) -> (Vec<Instance>, Vec<Instance>) {
    let mut ids: Vec<usize> = instances.iter().map(|i| i.sample).collect();
    ids.sort_unstable();
    ids.dedup();
    let n_val = libm::round(ids.len() as f64 * fraction) as usize;
    if n_val == 0 || n_val >= ids.len() {
        return (instances, Vec::new());
    }
    let cut = ids[ids.len() - n_val];
    instances.into_iter().partition(|i| i.sample < cut)
}

/// Sets the normalization buffers from training data.
pub fn fit_scales(net: &mut Network, train: &[Instance]) -> Result<()> {
    let inputs: Vec<&CMat> = train.iter().map(|i| &i.input).collect();
    let targets: Vec<&CMat> = train.iter().map(|i| &i.target).collect();
    net.set_scales(rms(&inputs), rms(&targets))
}

/// Network outputs for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub h_hat: Option<CMat>,
    /// `N_t x K` beams with total power `P`.
    pub beams: CMat,
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
}

const EVAL_CHUNK: usize = 256;

/// Eval-mode forward passes and beam recovery.
pub fn predict(net: &Network, items: &[Instance], recovery: Recovery, n0: f64) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(EVAL_CHUNK) {
        let refs: Vec<&Instance> = chunk.iter().collect();
        let inputs: Vec<&CMat> = refs.iter().map(|i| &i.input).collect();
        let mut g = Graph::new(Mode::Eval, 0);
        let x = g.input(net.encode_inputs(&inputs)?);
        let (o, _) = net.forward(&mut g, x)?;
        let w = recover_beams(&mut g, net, &o, recovery, n0)?;
        let row = |node: Option<crate::autodiff::NodeId>, b: usize| -> Option<Vec<f64>> {
            node.map(|n| {
                let v = g.value(n);
                let k = v.shape()[1];
                v.re()[b * k..(b + 1) * k].to_vec()
            })
        };
        for b in 0..chunk.len() {
            out.push(Prediction {
                h_hat: o.h_hat.map(|h| g.value(h).matrix(b)),
                beams: g.value(w).matrix(b),
                p: row(o.p, b),
                q: row(o.q, b),
            });
        }
    }
    Ok(out)
}

/// Rate of `beams` on the instance's true channel: the sum rate in a single
/// cell, the cell's SLNR rate otherwise.
pub fn true_rate(net: &Network, item: &Instance, beams: &CMat, n0: f64) -> f64 {
    if net.spec.n_cells > 1 {
        let layout = CellLayout {
            n_cells: net.spec.n_cells,
            k: net.spec.k,
        };
        cell_slnr_rate(&item.target, beams, layout, 0, n0)
    } else {
        sum_rate(&item.target, beams, n0)
    }
}

/// Mean loss, rate and NMSE over a validation set (eval mode).
fn validate(net: &Network, items: &[Instance], obj: &Objective, cfg: &TrainConfig) -> Result<(f64, f64, Option<f64>)> {
    let mut loss = 0.0;
    for chunk in items.chunks(EVAL_CHUNK) {
        let refs: Vec<&Instance> = chunk.iter().collect();
        let batch = Batch::new(net, &refs)?;
        let mut g = Graph::new(Mode::Eval, 0);
        let x = g.input(batch.x.clone());
        let (o, _) = net.forward(&mut g, x)?;
        let terms = hybrid_loss(
            &mut g,
            net,
            &o,
            &batch,
            &obj.weights,
            obj.recovery,
            obj.n0,
            cfg.rate_on_true_channel,
        )?;
        loss += g.value(terms.total).item() * chunk.len() as f64;
    }
    let preds = predict(net, items, obj.eval_recovery, obj.n0)?;
    let n = items.len() as f64;
    let rate = items
        .iter()
        .zip(&preds)
        .map(|(i, p)| true_rate(net, i, &p.beams, obj.n0))
        .sum::<f64>()
        / n;
    let nmse = if preds.iter().all(|p| p.h_hat.is_some()) {
        let mut acc = 0.0;
        for (i, p) in items.iter().zip(&preds) {
            let h = p.h_hat.as_ref().expect("checked above");
            acc += h.sub(&i.target).frob_norm_sqr() / i.target.frob_norm_sqr().max(f64::MIN_POSITIVE);
        }
        Some(acc / n)
    } else {
        None
    };
    Ok((loss / n, rate, nmse))
}

/// Trains `net` in place and keeps the parameters of the epoch with the
/// lowest validation loss (the last epoch without validation data).
/// Epochs are numbered from `first_epoch + 1`; shuffling and dropout
/// streams depend only on the seed and the epoch number.
pub fn train(
    net: &mut Network,
    train_set: &[Instance],
    val_set: &[Instance],
    obj: &Objective,
    cfg: &TrainConfig,
    first_epoch: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    obj.weights.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let adam = Adam::with_lr(cfg.learning_rate);
    let (_, s_out) = net.scales();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::autodiff::Params)> = None;
    for epoch in first_epoch + 1..=first_epoch + cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut sum_h, mut sum_p, mut sum_t, mut seen) = (0.0, 0.0, 0.0, 0usize);
        let (mut has_h, mut has_p) = (false, false);
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Instance> = idx.iter().map(|i| &train_set[*i]).collect();
            let batch = Batch::new(net, &refs)?;
            let graph_seed = cfg.seed ^ ((epoch as u64) << 32) ^ step as u64;
            let mut g = Graph::new(Mode::Train, graph_seed);
            let x = g.input(batch.x.clone());
            let (o, pending) = net.forward(&mut g, x)?;
            let terms = hybrid_loss(
                &mut g,
                net,
                &o,
                &batch,
                &obj.weights,
                obj.recovery,
                obj.n0,
                cfg.rate_on_true_channel,
            )?;
            let grads = g.backward(terms.total)?;
            net.params_mut().zero_grad();
            grads.accumulate_into(&g, net.params_mut());
            match cfg.optimizer {
                OptimizerKind::Adam => adam.step(net.params_mut()),
                OptimizerKind::Sgd => sgd_step(net.params_mut(), cfg.learning_rate),
            }
            if !net.params().all_finite() {
                return Err(Error::NonFinite("parameters after an optimizer step"));
            }
            net.commit_stats(&g, &pending)?;
            let n = refs.len() as f64;
            if let Some(h) = terms.channel {
                has_h = true;
                sum_h += g.value(h).item() * s_out * s_out * n;
            }
            if let Some(p) = terms.power {
                has_p = true;
                sum_p += g.value(p).item() * net.power * net.power * n;
            }
            sum_t += g.value(terms.total).item() * n;
            seen += refs.len();
        }
        let seen = seen as f64;
        let (val_loss, val_rate, val_nmse) = if val_set.is_empty() {
            (None, None, None)
        } else {
            let (l, r, e) = validate(net, val_set, obj, cfg)?;
            (Some(l), Some(r), e)
        };
        let rec = EpochRecord {
            epoch,
            loss_channel: has_h.then(|| sum_h / seen),
            loss_power: has_p.then(|| sum_p / seen),
            loss_total: sum_t / seen,
            val_loss,
            val_rate,
            val_nmse,
        };
        on_epoch(&rec);
        let score = val_loss.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| score <= *b || val_loss.is_none()) {
            best = Some((score, epoch, net.params().clone()));
        }
        records.push(rec);
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    net.set_params(params);
    Ok(TrainLog { records, best_epoch })
}

/// Per-instance rate node of a fresh eval-mode pass, exposed for checks
/// that compare the graph path with the plain functions.
pub fn graph_rates(net: &Network, items: &[Instance], recovery: Recovery, n0: f64) -> Result<Vec<f64>> {
    let refs: Vec<&Instance> = items.iter().collect();
    let batch = Batch::new(net, &refs)?;
    let mut g = Graph::new(Mode::Eval, 0);
    let x = g.input(batch.x.clone());
    let (o, _) = net.forward(&mut g, x)?;
    let w = recover_beams(&mut g, net, &o, recovery, n0)?;
    let h = g.input(batch.target.clone());
    let r = instance_rate(&mut g, h, w, n0, net.spec.n_cells > 1)?;
    Ok(g.value(r).re())
}
