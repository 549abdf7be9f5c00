//! Scattering-kernel guided reciprocal point learning for SAR open-set recognition.
//!
//! The crate is `no_std` + `alloc`. It holds every numeric piece of the pipeline:
//!
//! - [`asc`]: attributed scattering center responses, unitary 2-D transforms and
//!   the kernel banks used to seed the first convolution layer.
//! - [`tensor`]: a small dense tensor engine with analytic backward passes and a
//!   central-difference gradient checker.
//! - [`network`]: the convolutional backbone producing embeddings.
//! - [`rpl`]: reciprocal points, the probability model, losses and the open-set rule.
//! - [`train`]: mini-batch SGD with momentum over network, points and boundary.
//! - [`eval`]: open-set confusion accounting, macro metrics, openness and protocols.
//!
//! File formats, dataset loading and the command line live in the `osrk` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod asc;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod math;
pub mod matrix;
pub mod network;
pub mod rpl;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
