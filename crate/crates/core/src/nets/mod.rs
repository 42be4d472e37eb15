//! CSI-Net, Power-Net, the beam recovery layer and the hybrid-loss training
//! loop, plus the separate-learning baselines they are compared with.
//!
//! A [`Network`] owns its parameters. Its CSI-Net maps uplink information to
//! a downlink channel estimate, its Power-Net maps that estimate to the
//! power pair `(p, q)` through two softmax heads scaled by the budget, and
//! the recovery layer turns both into beams without trainable parameters.
//! Training minimizes `α_H L_H + α_P L_P − |α_R| R` where the rate `R` is
//! computed on the learned channel.

mod layers;
mod loss;
mod model;
mod schemes;
mod train;

#[cfg(test)]
mod tests;

pub use layers::{Activation, PendingStats, BATCH_NORM_MOMENTUM};
pub use loss::{
    hybrid_loss, instance_rate, instances, instances_with_inputs, local_first_order, permute_columns, recover_beams,
    Batch, Instance, LossTerms, LossWeights, Recovery,
};
pub use model::{features, rms, NetSpec, Network, Outputs, PowerInput, Role, Variant};
pub use schemes::{
    evaluate, fit_lmmse, learned_channel_instances, lmmse_instances, mean, required_networks, resume_networks, stderr,
    train_networks, NetKey, Scheme, SchemeScore, SolverConfigs, Trained,
};
pub use train::{
    fit_scales, graph_rates, predict, split_validation, train, true_rate, EpochRecord, Objective, OptimizerKind,
    Prediction, TrainConfig, TrainLog,
};
