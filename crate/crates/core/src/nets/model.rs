//! Network specifications, parameter layout and forward passes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{apply_pending, Activation, PendingStats, Stack, StackBuilder};
use crate::autodiff::{CTensor, Graph, NodeId, ParamId, Params};
use crate::channels::{ScenarioConfig, ScenarioKind};
use crate::linalg::CMat;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    /// Fully connected tanh stack.
    SmallFc,
    /// Two 1-d convolutions over the antenna axis followed by dense layers.
    MassiveCnn,
    /// Fully connected stack over one BS's channels to every user.
    MulticellFc,
}

impl Variant {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::ToySquare | ScenarioKind::SmallTdd => Variant::SmallFc,
            ScenarioKind::MassiveFdd => Variant::MassiveCnn,
            ScenarioKind::Multicell => Variant::MulticellFc,
        }
    }
}

/// What the Power-Net sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PowerInput {
    /// The CSI-Net output (normalized, flattened).
    Estimate,
    /// The network input itself.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetSpec {
    pub variant: Variant,
    pub n_t: usize,
    /// Users per cell.
    pub k: usize,
    pub n_cells: usize,
    /// Hidden width of the fully connected stacks.
    pub width: usize,
    /// Hidden layers of the fully connected stacks.
    pub layers: usize,
    /// Convolution filter counts (massive variant).
    pub filters: Vec<usize>,
    pub kernel_width: usize,
    /// Width of the dense layer after the convolutions.
    pub cnn_dense: usize,
    pub dropout: f64,
    pub power_input: PowerInput,
    /// Process each user's channel separately with shared weights.
    pub per_user: bool,
}

impl NetSpec {
    /// Architecture defaults for a scenario.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        let variant = Variant::for_kind(cfg.kind);
        let (n_t, k, n_cells) = (cfg.n_t, cfg.k, cfg.n_cells);
        let (width, layers, dropout) = match variant {
            Variant::SmallFc => (4 * k * n_t, 4, 0.0),
            Variant::MassiveCnn => (4 * k * n_t, 4, 0.3),
            Variant::MulticellFc => (2 * n_t * k * n_cells * n_cells, 3, 0.0),
        };
        NetSpec {
            variant,
            n_t,
            k,
            n_cells,
            width,
            layers,
            filters: vec![16, 8],
            kernel_width: 3,
            cnn_dense: 256,
            dropout,
            power_input: PowerInput::Estimate,
            per_user: false,
        }
    }

    /// Channel columns seen by one network instance.
    pub fn columns(&self) -> usize {
        self.k * self.n_cells
    }

    /// Real entries of one flattened channel matrix.
    pub fn flat_len(&self) -> usize {
        2 * self.n_t * self.columns()
    }

    /// Power heads: `p` and `q` in a single cell, `p` alone otherwise.
    pub fn power_heads(&self) -> usize {
        if self.n_cells > 1 {
            1
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.k == 0 || self.n_cells == 0 {
            return Err(Error::config("network dimensions must be positive"));
        }
        if self.width == 0 || self.layers == 0 {
            return Err(Error::config("network width and depth must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if self.variant == Variant::MassiveCnn
            && (self.filters.is_empty()
                || self.filters.contains(&0)
                || self.kernel_width.is_multiple_of(2)
                || self.cnn_dense == 0)
        {
            return Err(Error::config("convolution needs positive filters and an odd kernel"));
        }
        if (self.variant == Variant::MulticellFc) != (self.n_cells > 1) {
            return Err(Error::config(format!(
                "variant {:?} does not fit {} cell(s)",
                self.variant, self.n_cells
            )));
        }
        Ok(())
    }

    /// Checks that the network fits the scenario.
    pub fn check_scenario(&self, cfg: &ScenarioConfig) -> Result<()> {
        self.validate()?;
        if Variant::for_kind(cfg.kind) != self.variant {
            return Err(Error::config(format!(
                "variant {:?} does not match scenario {}",
                self.variant,
                cfg.kind.name()
            )));
        }
        if (cfg.n_t, cfg.k, cfg.n_cells) != (self.n_t, self.k, self.n_cells) {
            return Err(Error::shape(format!(
                "network built for N_t={}, K={}, cells={}; scenario has N_t={}, K={}, cells={}",
                self.n_t, self.k, self.n_cells, cfg.n_t, cfg.k, cfg.n_cells
            )));
        }
        Ok(())
    }
}

/// Which sub-networks a [`Network`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    /// CSI-Net followed by Power-Net.
    Proposed,
    /// CSI-Net alone.
    Channel,
    /// Beamforming net mapping a channel estimate to beams.
    Beamformer,
}

/// Real feature layout of channel matrices.
pub mod features {
    use super::*;

    /// Real parts of the row-major matrix followed by its imaginary parts.
    pub fn flatten(h: &CMat) -> Vec<f64> {
        let (r, c) = h.shape();
        let mut out = Vec::with_capacity(2 * r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(h[(i, j)].re);
            }
        }
        for i in 0..r {
            for j in 0..c {
                out.push(h[(i, j)].im);
            }
        }
        out
    }

    /// Inverse of [`flatten`].
    pub fn unflatten(x: &[f64], rows: usize, cols: usize) -> Result<CMat> {
        if x.len() != 2 * rows * cols {
            return Err(Error::shape(format!("{} features for a {rows}x{cols} matrix", x.len())));
        }
        let n = rows * cols;
        Ok(CMat::from_fn(rows, cols, |i, j| {
            crate::linalg::C64::new(x[i * cols + j], x[n + i * cols + j])
        }))
    }

    /// One row `[Re h_k, Im h_k]` per column.
    pub fn columns(h: &CMat) -> Vec<Vec<f64>> {
        (0..h.cols())
            .map(|j| {
                let c = h.col(j);
                c.iter().map(|z| z.re).chain(c.iter().map(|z| z.im)).collect()
            })
            .collect()
    }

    /// Antenna-major `[N_t, 2K]` layout: real parts of all columns, then
    /// imaginary parts, at each antenna.
    pub fn antenna_major(h: &CMat) -> Vec<f64> {
        let (r, c) = h.shape();
        let mut out = Vec::with_capacity(2 * r * c);
        for i in 0..r {
            out.extend((0..c).map(|j| h[(i, j)].re));
            out.extend((0..c).map(|j| h[(i, j)].im));
        }
        out
    }
}

/// Root-mean-square of the entries of a set of matrices (1 when empty or
/// zero).
pub fn rms(ms: &[&CMat]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for m in ms {
        acc += m.frob_norm_sqr();
        n += 2 * m.rows() * m.cols();
    }
    let r = if n > 0 { crate::math::sqrt(acc / n as f64) } else { 0.0 };
    if r > 0.0 && r.is_finite() {
        r
    } else {
        1.0
    }
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// Normalized flattened channel prediction `[B, 2 N_t K_c]`.
    pub h_flat: Option<NodeId>,
    /// Channel prediction `[B, N_t, K_c]` in physical units.
    pub h_hat: Option<NodeId>,
    /// Downlink powers `[B, K]` summing to `P`.
    pub p: Option<NodeId>,
    /// Virtual uplink powers `[B, K]` summing to `P`.
    pub q: Option<NodeId>,
    /// Beams `[B, N_t, K]` with total power `P` (beamformer role).
    pub w: Option<NodeId>,
}

/// A network with its own parameter store.
///
/// Two scale buffers normalize the data: inputs are divided by
/// `input_scale`, and the CSI-Net predicts the target divided by
/// `output_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetSpec,
    pub role: Role,
    pub power: f64,
    params: Params,
    csi: Option<Stack>,
    power_net: Option<Stack>,
    beam_net: Option<Stack>,
    input_scale: ParamId,
    output_scale: ParamId,
}

impl Network {
    /// Builds a freshly initialized network; identical seeds give identical
    /// parameters.
    pub fn new(spec: NetSpec, role: Role, power: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        if !(power > 0.0) {
            return Err(Error::config("power budget must be positive"));
        }
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_scale = params.add_buffer("norm.input_scale", CTensor::scalar(1.0));
        let output_scale = params.add_buffer("norm.output_scale", CTensor::scalar(1.0));
        let flat = spec.flat_len();
        let (csi, power_net, beam_net) = match role {
            Role::Proposed => {
                let csi = build_csi(&spec, &mut params, &mut rng);
                let pn = build_fc(
                    &mut params,
                    &mut rng,
                    "power",
                    flat,
                    spec.width,
                    spec.layers,
                    spec.power_heads() * spec.k,
                    true,
                    Activation::Relu,
                );
                (Some(csi), Some(pn), None)
            }
            Role::Channel => (Some(build_csi(&spec, &mut params, &mut rng)), None, None),
            Role::Beamformer => {
                let bf = build_fc(
                    &mut params,
                    &mut rng,
                    "beam",
                    flat,
                    spec.width,
                    spec.layers,
                    2 * spec.n_t * spec.k,
                    true,
                    Activation::Tanh,
                );
                (None, None, Some(bf))
            }
        };
        Ok(Network {
            spec,
            role,
            power,
            params,
            csi,
            power_net,
            beam_net,
            input_scale,
            output_scale,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Replaces the parameter store, e.g. with a best-so-far snapshot.
    pub(crate) fn set_params(&mut self, params: Params) {
        self.params = params;
    }

    /// Overwrites every parameter with the same-named entry of `other`.
    pub fn load_values(&mut self, other: &Params) -> Result<()> {
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let name = String::from(self.params.name(id));
            let src = other
                .find(&name)
                .ok_or_else(|| Error::shape(format!("checkpoint lacks parameter {name}")))?;
            self.params.set_value(id, other.value(src).clone())?;
        }
        Ok(())
    }

    pub fn scales(&self) -> (f64, f64) {
        (
            self.params.value(self.input_scale).item(),
            self.params.value(self.output_scale).item(),
        )
    }

    pub fn set_scales(&mut self, input: f64, output: f64) -> Result<()> {
        if !(input > 0.0 && output > 0.0 && input.is_finite() && output.is_finite()) {
            return Err(Error::config("normalization scales must be positive"));
        }
        self.params.set_value(self.input_scale, CTensor::scalar(input))?;
        self.params.set_value(self.output_scale, CTensor::scalar(output))
    }

    /// Network input tensor for a batch of channel matrices
    /// (`N_t x K_c` each), already divided by the input scale.
    pub fn encode_inputs(&self, inputs: &[&CMat]) -> Result<CTensor> {
        let (s_in, _) = self.scales();
        let s = &self.spec;
        let cols = s.columns();
        for m in inputs {
            if m.shape() != (s.n_t, cols) {
                return Err(Error::shape(format!(
                    "network input {:?}, expected ({}, {cols})",
                    m.shape(),
                    s.n_t
                )));
            }
        }
        let b = inputs.len();
        let per_user = s.per_user && self.csi.is_some();
        let (shape, data): (Vec<usize>, Vec<f64>) = match (s.variant, per_user, self.role) {
            (_, _, Role::Beamformer) | (Variant::SmallFc | Variant::MulticellFc, false, _) => (
                vec![b, s.flat_len()],
                inputs.iter().flat_map(|m| features::flatten(m)).collect(),
            ),
            (Variant::SmallFc | Variant::MulticellFc, true, _) => (
                vec![b * cols, 2 * s.n_t],
                inputs
                    .iter()
                    .flat_map(|m| features::columns(m).into_iter().flatten())
                    .collect(),
            ),
            (Variant::MassiveCnn, false, _) => (
                vec![b, s.n_t, 2 * cols],
                inputs.iter().flat_map(|m| features::antenna_major(m)).collect(),
            ),
            (Variant::MassiveCnn, true, _) => (
                vec![b * cols, s.n_t, 2],
                inputs
                    .iter()
                    .flat_map(|m| {
                        (0..cols).flat_map(move |j| (0..s.n_t).flat_map(move |i| [m[(i, j)].re, m[(i, j)].im]))
                    })
                    .collect(),
            ),
        };
        let data = data.into_iter().map(|x| x / s_in).collect();
        CTensor::from_real(&shape, data)
    }

    /// Forward pass on encoded inputs. Batch-norm statistics of train-mode
    /// passes are returned for [`Network::commit_stats`].
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<(Outputs, Vec<PendingStats>)> {
        let s = &self.spec;
        let mut pending = Vec::new();
        let mut out = Outputs {
            h_flat: None,
            h_hat: None,
            p: None,
            q: None,
            w: None,
        };
        let (_, s_out) = self.scales();
        if let Some(csi) = &self.csi {
            let y = csi.forward(g, &self.params, x, &mut pending)?;
            let b = g.value(x).shape()[0] / if s.per_user { s.columns() } else { 1 };
            let normalized = if s.per_user {
                let y = g.reshape(y, &[b, s.columns(), 2 * s.n_t])?;
                let re = g.slice_last(y, 0, s.n_t)?;
                let im = g.slice_last(y, s.n_t, s.n_t)?;
                let z = g.complex(re, im)?;
                g.transpose(z)?
            } else {
                unflatten_node(g, y, b, s.n_t, s.columns())?
            };
            let flat = if s.per_user { flatten_node(g, normalized)? } else { y };
            out.h_flat = Some(flat);
            out.h_hat = Some(g.scale(normalized, s_out)?);
            if let Some(pn) = &self.power_net {
                let src = match s.power_input {
                    PowerInput::Estimate => flat,
                    PowerInput::Raw => {
                        let xb = g.value(x).len() / b;
                        g.reshape(x, &[b, xb])?
                    }
                };
                let logits = pn.forward(g, &self.params, src, &mut pending)?;
                let p_logits = g.slice_last(logits, 0, s.k)?;
                let p = g.softmax(p_logits)?;
                out.p = Some(g.scale(p, self.power)?);
                if s.power_heads() == 2 {
                    let q_logits = g.slice_last(logits, s.k, s.k)?;
                    let q = g.softmax(q_logits)?;
                    out.q = Some(g.scale(q, self.power)?);
                }
            }
        }
        if let Some(bn) = &self.beam_net {
            let y = bn.forward(g, &self.params, x, &mut pending)?;
            let b = g.value(x).shape()[0];
            let w = unflatten_node(g, y, b, s.n_t, s.k)?;
            let a = g.abs2(w)?;
            let a = g.reshape(a, &[b, s.n_t * s.k])?;
            let tot = g.sum_last(a)?;
            let budget = g.input(CTensor::from_real(&[b], vec![self.power; b])?);
            let ratio = g.div(budget, tot)?;
            let scale = g.sqrt(ratio)?;
            out.w = Some(g.mul_bcast(w, scale)?);
        }
        Ok((out, pending))
    }

    /// Folds train-mode batch statistics into the running buffers.
    pub fn commit_stats(&mut self, g: &Graph, pending: &[PendingStats]) -> Result<()> {
        apply_pending(g, &mut self.params, pending)
    }
}

/// `[B, 2NK]` real features to a `[B, N, K]` complex node.
fn unflatten_node(g: &mut Graph, y: NodeId, b: usize, n: usize, k: usize) -> Result<NodeId> {
    let re = g.slice_last(y, 0, n * k)?;
    let im = g.slice_last(y, n * k, n * k)?;
    let re = g.reshape(re, &[b, n, k])?;
    let im = g.reshape(im, &[b, n, k])?;
    g.complex(re, im)
}

/// `[B, N, K]` complex node to `[B, 2NK]` real features.
fn flatten_node(g: &mut Graph, z: NodeId) -> Result<NodeId> {
    let shape = g.value(z).shape().to_vec();
    let b = shape[0];
    let n: usize = shape[1..].iter().product();
    let re = g.real_part(z)?;
    let im = g.imag_part(z)?;
    let re = g.reshape(re, &[b, n])?;
    let im = g.reshape(im, &[b, n])?;
    g.concat(&[re, im])
}

fn build_csi(spec: &NetSpec, params: &mut Params, rng: &mut ChaCha8Rng) -> Stack {
    let cols = if spec.per_user { 1 } else { spec.columns() };
    let flat = 2 * spec.n_t * cols;
    match spec.variant {
        Variant::SmallFc | Variant::MulticellFc => build_fc(
            params,
            rng,
            "csi",
            flat,
            spec.width,
            spec.layers,
            flat,
            false,
            Activation::Tanh,
        ),
        Variant::MassiveCnn => {
            let mut b = StackBuilder::new(params, rng, "csi");
            let mut c_in = 2 * cols;
            for &f in &spec.filters {
                b = b.conv(spec.kernel_width, c_in, f).act(Activation::Relu);
                c_in = f;
            }
            b.reshape(&[spec.n_t * c_in])
                .dropout(spec.dropout)
                .dense(spec.n_t * c_in, spec.cnn_dense)
                .act(Activation::Relu)
                .dense(spec.cnn_dense, flat)
                .finish()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_fc(
    params: &mut Params,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    input: usize,
    width: usize,
    layers: usize,
    output: usize,
    batch_norm: bool,
    act: Activation,
) -> Stack {
    let mut b = StackBuilder::new(params, rng, prefix);
    let mut fan_in = input;
    for _ in 0..layers {
        b = b.dense(fan_in, width);
        if batch_norm {
            b = b.batch_norm(width);
        }
        b = b.act(act);
        fan_in = width;
    }
    b.dense(fan_in, output).finish()
}

#[cfg(test)]
pub(crate) fn zero_final_layer(net: &mut Network) {
    // the last dense layer of the CSI-Net holds the two highest-indexed csi parameters
    let ids: Vec<ParamId> = net
        .params
        .ids()
        .filter(|id| net.params.name(*id).starts_with("csi."))
        .collect();
    for id in ids.iter().rev().take(2) {
        let z = CTensor::zeros(net.params.value(*id).shape());
        net.params.set_value(*id, z).unwrap();
    }
}
