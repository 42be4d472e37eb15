use alloc::string::String;
use alloc::vec::Vec;

use super::CTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Param {
    pub(crate) name: String,
    pub(crate) value: CTensor,
    pub(crate) grad: CTensor,
    pub(crate) m: CTensor,
    pub(crate) v: CTensor,
    pub(crate) trainable: bool,
}

/// Named parameter store with per-parameter optimizer state.
///
/// Non-trainable entries act as buffers (running statistics, normalization
/// scales); they are saved with the model but never touched by an optimizer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    pub(crate) entries: Vec<Param>,
    pub(crate) step: u64,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: CTensor) -> ParamId {
        self.push(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: CTensor) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: CTensor, trainable: bool) -> ParamId {
        let zeros = CTensor::zeros_like(&value);
        self.entries.push(Param {
            name,
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &CTensor {
        &self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &CTensor {
        &self.entries[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    /// Number of optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of real scalars in trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.trainable)
            .map(|p| {
                if p.value.is_real() {
                    p.value.len()
                } else {
                    2 * p.value.len()
                }
            })
            .sum()
    }

    /// Replaces a value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: CTensor) -> Result<()> {
        let p = &mut self.entries[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(alloc::format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad = CTensor::zeros_like(&p.value);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &CTensor) {
        let p = &mut self.entries[id.0];
        if p.trainable {
            let mut g = g.clone();
            if p.value.is_real() {
                g.project_real();
            }
            p.grad.add_assign(&g);
        }
    }

    /// Global squared L2 norm of trainable gradients.
    pub fn grad_norm_sqr(&self) -> f64 {
        self.entries
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.data().iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Iterates `(name, value, trainable)` in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &CTensor, bool)> {
        self.entries.iter().map(|p| (p.name.as_str(), &p.value, p.trainable))
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|p| p.value.is_finite())
    }
}
