//! FMCW radar target localization.
//!
//! Point-target simulation, a classical range-Doppler / MVDR / OS-CFAR /
//! DBSCAN chain, and a variational autoencoder with a learnable frequency
//! front end trained through a small reverse-mode autodiff engine.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod cfel;
pub mod classic;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pgm;
pub mod sim;
pub mod train;
pub mod util;
pub mod vae;

pub use config::{derive_params, DerivedParams, RadarConfig};
pub use error::{Error, Result};
pub use sim::{synth_frame, Frame, PointTarget};
