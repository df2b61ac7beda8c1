//! Multi-view, multi-stage reconstruction of articulated body pose, shape and
//! per-view weak-perspective cameras from 2D joint observations, with a
//! synthetic benchmark generator and the usual 3D pose/shape metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body_model;
pub mod camera;
pub mod cli;
pub mod error;
pub mod fitting;
mod fsutil;
pub mod gradcheck;
pub mod metrics;
pub mod obj;
pub mod observation;
pub mod rotation;
pub mod synth;

pub use error::{Error, Result};
