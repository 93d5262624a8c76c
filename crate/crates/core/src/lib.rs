//! Joint motion-estimated, motion-compensated reconstruction for simulated
//! free-breathing multi-shot Cartesian MRI.
//!
//! The pipeline runs in four stages:
//!
//! 1. self-navigation from the fully sampled k-space center and respiratory binning ([`selfnav`]),
//! 2. Beltrami-regularized SENSE reconstruction of every bin ([`recon::solve_bsense`]),
//! 3. non-rigid registration of the bin images ([`registration`]),
//! 4. a motion-compensated Beltrami reconstruction using all shots ([`recon::solve_mocobel`]).
//!
//! Synthetic data come from [`simulator`] and [`sampling`]; [`metrics`] scores the results
//! and [`io`] holds the file formats, configuration, and the end-to-end [`pipeline`].

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod pipeline;
pub mod recon;
pub mod registration;
pub mod sampling;
pub mod selfnav;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{
    inner_product, AcquisitionConfig, CoilMaps, ComplexArray, DisplacementField, Image, KSpaceData,
    ReconParams, SamplingMask, C64,
};
