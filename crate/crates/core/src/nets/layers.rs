//! Layer stacks over [`Params`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{CTensor, Graph, NodeId, ParamId, Params};
use crate::math;
use crate::Result;

/// Momentum of the running batch-norm statistics.
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Dense {
        w: ParamId,
        b: ParamId,
    },
    BatchNorm {
        gamma: ParamId,
        beta: ParamId,
        mean: ParamId,
        var: ParamId,
    },
    Act(Activation),
    Dropout(f64),
    Conv {
        kernel: ParamId,
        bias: ParamId,
    },
    /// Reshape keeping the leading batch axis.
    Reshape(Vec<usize>),
}

/// Running-statistics update owed after a training forward pass.
#[derive(Debug, Clone, Copy)]
pub struct PendingStats {
    pub(crate) node: NodeId,
    pub(crate) mean: ParamId,
    pub(crate) var: ParamId,
}

/// Uniform initialization on `±1/√fan_in`.
fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> CTensor {
    let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    CTensor::from_real(shape, data).expect("shape matches data")
}

/// Builder that names parameters `<prefix>.<index>.<role>`.
pub(crate) struct StackBuilder<'a> {
    params: &'a mut Params,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
    layers: Vec<Layer>,
}

impl<'a> StackBuilder<'a> {
    pub fn new(params: &'a mut Params, rng: &'a mut ChaCha8Rng, prefix: &str) -> Self {
        StackBuilder {
            params,
            rng,
            prefix: prefix.into(),
            layers: Vec::new(),
        }
    }

    fn name(&self, role: &str) -> String {
        format!("{}.{}.{}", self.prefix, self.layers.len(), role)
    }

    pub fn dense(mut self, fan_in: usize, fan_out: usize) -> Self {
        let w = uniform(self.rng, &[fan_in, fan_out], fan_in);
        let b = uniform(self.rng, &[fan_out], fan_in);
        let w = self.params.add(self.name("weight"), w);
        let b = self.params.add(self.name("bias"), b);
        self.layers.push(Layer::Dense { w, b });
        self
    }

    pub fn batch_norm(mut self, width: usize) -> Self {
        let ones = CTensor::from_real(&[width], vec![1.0; width]).expect("width");
        let gamma = self.params.add(self.name("gamma"), ones.clone());
        let beta = self.params.add(self.name("beta"), CTensor::zeros(&[width]));
        let mean = self
            .params
            .add_buffer(self.name("running_mean"), CTensor::zeros(&[width]));
        let var = self.params.add_buffer(self.name("running_var"), ones);
        self.layers.push(Layer::BatchNorm { gamma, beta, mean, var });
        self
    }

    pub fn act(mut self, a: Activation) -> Self {
        self.layers.push(Layer::Act(a));
        self
    }

    pub fn dropout(mut self, rate: f64) -> Self {
        if rate > 0.0 {
            self.layers.push(Layer::Dropout(rate));
        }
        self
    }

    pub fn conv(mut self, width: usize, c_in: usize, c_out: usize) -> Self {
        let fan_in = width * c_in;
        let kernel = uniform(self.rng, &[width, c_in, c_out], fan_in);
        let bias = uniform(self.rng, &[c_out], fan_in);
        let kernel = self.params.add(self.name("kernel"), kernel);
        let bias = self.params.add(self.name("bias"), bias);
        self.layers.push(Layer::Conv { kernel, bias });
        self
    }

    pub fn reshape(mut self, tail: &[usize]) -> Self {
        self.layers.push(Layer::Reshape(tail.to_vec()));
        self
    }

    pub fn finish(self) -> Stack {
        Stack { layers: self.layers }
    }
}

/// A feed-forward layer sequence.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Stack {
    layers: Vec<Layer>,
}

impl Stack {
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &Params,
        x: NodeId,
        pending: &mut Vec<PendingStats>,
    ) -> Result<NodeId> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense { w, b } => {
                    let w = g.param(params, *w);
                    let b = g.param(params, *b);
                    let xw = g.matmul(h, w)?;
                    g.add_bcast(xw, b)?
                }
                Layer::BatchNorm { gamma, beta, mean, var } => {
                    let gm = g.param(params, *gamma);
                    let bt = g.param(params, *beta);
                    let out = g.batch_norm(h, gm, bt, &params.value(*mean).re(), &params.value(*var).re())?;
                    pending.push(PendingStats {
                        node: out,
                        mean: *mean,
                        var: *var,
                    });
                    out
                }
                Layer::Act(Activation::Tanh) => g.tanh(h)?,
                Layer::Act(Activation::Relu) => g.relu(h)?,
                Layer::Dropout(rate) => g.dropout(h, *rate)?,
                Layer::Conv { kernel, bias } => {
                    let k = g.param(params, *kernel);
                    let b = g.param(params, *bias);
                    g.conv1d(h, k, b)?
                }
                Layer::Reshape(tail) => {
                    let batch = g.value(h).shape()[0];
                    let mut shape = vec![batch];
                    shape.extend_from_slice(tail);
                    g.reshape(h, &shape)?
                }
            };
        }
        Ok(h)
    }
}

/// Folds the batch statistics recorded during a training pass into the
/// running buffers.
pub(crate) fn apply_pending(g: &Graph, params: &mut Params, pending: &[PendingStats]) -> Result<()> {
    for p in pending {
        let Some((bm, bv)) = g.batch_norm_stats(p.node) else {
            continue;
        };
        let m = params.value(p.mean).re();
        let v = params.value(p.var).re();
        let mom = BATCH_NORM_MOMENTUM;
        let nm: Vec<f64> = m.iter().zip(bm).map(|(a, b)| (1.0 - mom) * a + mom * b).collect();
        let nv: Vec<f64> = v.iter().zip(bv).map(|(a, b)| (1.0 - mom) * a + mom * b).collect();
        params.set_value(p.mean, CTensor::from_real(&[nm.len()], nm)?)?;
        params.set_value(p.var, CTensor::from_real(&[nv.len()], nv)?)?;
    }
    Ok(())
}
