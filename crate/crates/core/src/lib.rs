//! Cooperative motion forecasting over multi-view trajectory graphs.
//!
//! Tracks of the same scene observed by several sensors (the ego vehicle,
//! roadside infrastructure, other vehicles) are encoded as graph nodes,
//! associated across views by a learned link classifier supervised with
//! IoU/assignment pseudo labels, fused through three subgraphs and decoded
//! into a multimodal Laplace-mixture forecast.
//!
//! The crate is `no_std` + `alloc`: everything here is a pure function of its
//! inputs and seeds. File formats, checkpoints and the command line live in
//! the `coopgraph-cli` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod association;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod math;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod scenario;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
