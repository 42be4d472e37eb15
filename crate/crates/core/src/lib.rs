//! Model-driven learning of multiuser MIMO downlink beamforming from uplink
//! channel information.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical piece
//! of the lab: complex linear algebra and a reverse-mode autodiff engine
//! ([`linalg`], [`autodiff`], [`optim`]), channel generators and
//! uplink-to-downlink mappings ([`channels`]), pilot processing and linear
//! MMSE estimation ([`pilots`]), beamforming constructions and rate functionals
//! ([`beamforming`]), the classical solvers that label data and serve as
//! baselines ([`solvers`]), and the CSI-Net / Power-Net pipeline trained with a
//! hybrid loss ([`nets`]).
//!
//! File formats, the CLI and anything touching the OS live in the companion
//! `beamlab` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod beamforming;
pub mod channels;
mod error;
pub mod linalg;
pub(crate) mod math;
pub mod nets;
pub mod optim;
pub mod pilots;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};

#[cfg(test)]
pub(crate) mod testutil;
