//! Beltrami-regularized reconstructions and the comparison baselines.
//!
//! Both the per-bin SENSE problem and the motion-compensated problem minimize
//!
//! ```text
//! || s - E rho ||^2 + lambda * sum_pixels sqrt(1 + beta^2 |grad rho|^2)
//! ```
//!
//! with `E` the encoding operator of [`crate::operators`]. They differ only
//! in whether `E` contains displacement fields.

mod baselines;
mod primal_dual;
mod tikhonov;

pub use baselines::{
    baseline_rra, baseline_sos, baseline_zero_filled, rra_from_bin_images, RraOutput,
};
pub use primal_dual::{solve_primal_dual, PrimalDualState};
pub use tikhonov::{solve_tikhonov, solve_tikhonov_with, TikhonovReport, TIKHONOV_LAMBDA_SCALE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    norm_sqr, CoilMaps, DisplacementField, Image, KSpaceData, ReconParams, SamplingMask, C64,
};
use crate::operators::{grad, EncodingBin, EncodingOperator, Gradient};
use crate::selfnav::BinAssignment;

/// Iteration log of a primal-dual solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective of the starting point followed by every accepted iterate.
    pub objective: Vec<f64>,
    pub data_term: Vec<f64>,
    pub regularizer_term: Vec<f64>,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub final_relative_change: f64,
    pub converged: bool,
    pub lambda: f64,
    pub beta: f64,
    pub operator_norm: f64,
    pub wall_time_s: f64,
}

/// `sum sqrt(1 + beta^2 |grad x|^2)`, real and imaginary parts stacked in `|grad x|`.
pub fn beltrami_energy(img: &Image, beta: f64) -> f64 {
    beltrami_energy_of(&grad(img), beta)
}

pub(crate) fn beltrami_energy_of(g: &Gradient, beta: f64) -> f64 {
    let b2 = beta * beta;
    g.magnitude_sqr()
        .iter()
        .map(|m| (1.0 + b2 * m).sqrt())
        .sum()
}

/// Isotropic total variation with the same discretization.
pub fn total_variation(img: &Image) -> f64 {
    grad(img).magnitude_sqr().iter().map(|m| m.sqrt()).sum()
}

/// Gradient of [`beltrami_energy`] with respect to the image (real and
/// imaginary parts packed as one complex number per pixel):
/// `grad^T (beta^2 grad x / sqrt(1 + beta^2 |grad x|^2))`.
pub fn beltrami_gradient(img: &Image, beta: f64) -> Image {
    let mut g = grad(img);
    let b2 = beta * beta;
    for (gx, gy) in g.gx.iter_mut().zip(g.gy.iter_mut()) {
        let w = b2 / (1.0 + b2 * (gx.norm_sqr() + gy.norm_sqr())).sqrt();
        *gx *= w;
        *gy *= w;
    }
    let d = crate::operators::div(&g).expect("consistent gradient");
    d.scaled(-1.0)
}

/// `|| s - E x ||^2`
pub fn data_term(op: &EncodingOperator, img: &Image, data: &KSpaceData) -> Result<f64> {
    let ex = op.encode(img)?;
    check_data(op, data)?;
    Ok(ex
        .samples()
        .iter()
        .zip(data.samples())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum())
}

/// `2 E^H (E x - s)`, the gradient of [`data_term`].
pub fn data_gradient(op: &EncodingOperator, img: &Image, data: &KSpaceData) -> Result<Image> {
    check_data(op, data)?;
    let mut ex = op.encode(img)?;
    for (r, s) in ex.samples_mut().iter_mut().zip(data.samples()) {
        *r = (*r - s) * 2.0;
    }
    op.encode_adjoint(&ex)
}

fn check_data(op: &EncodingOperator, data: &KSpaceData) -> Result<()> {
    if data.all_lines() != op.output_lines() || data.n_coils() != op.coils().n_coils() {
        return Err(Error::ShapeMismatch(
            "data layout does not match the encoding operator".into(),
        ));
    }
    Ok(())
}

/// `scale * max |E^H s|`
pub fn default_lambda(op: &EncodingOperator, data: &KSpaceData, scale: f64) -> Result<f64> {
    let ehs = op.encode_adjoint(data)?;
    Ok(scale * ehs.data().iter().map(|v| v.norm()).fold(0.0, f64::max))
}

fn masks_of(ks: &KSpaceData) -> Result<Vec<SamplingMask>> {
    (0..ks.n_shots()).map(|s| ks.mask(s)).collect()
}

fn check_coils(ks: &KSpaceData, coils: &CoilMaps) -> Result<()> {
    if (ks.nx(), ks.ny(), ks.n_coils()) != (coils.nx(), coils.ny(), coils.n_coils()) {
        return Err(Error::ShapeMismatch(format!(
            "k-space {:?} vs coil maps {:?}",
            (ks.nx(), ks.ny(), ks.n_coils()),
            (coils.nx(), coils.ny(), coils.n_coils())
        )));
    }
    Ok(())
}

/// Beltrami-regularized SENSE of one motion state (no warping).
pub fn solve_bsense(
    ks_bin: &KSpaceData,
    coils: &CoilMaps,
    params: &ReconParams,
) -> Result<(Image, SolveReport)> {
    check_coils(ks_bin, coils)?;
    if ks_bin.n_shots() == 0 {
        return Err(Error::InvalidArgument("bin without shots".into()));
    }
    let op = EncodingOperator::without_motion(coils.clone(), masks_of(ks_bin)?)?;
    solve_primal_dual(&op, ks_bin, params)
}

/// Encoding operator over all bins with their fields, and the data
/// reordered bin-major to match it.
pub fn motion_operator(
    ks_all: &KSpaceData,
    coils: &CoilMaps,
    bins: &BinAssignment,
    fields: &[DisplacementField],
) -> Result<(EncodingOperator, KSpaceData)> {
    check_coils(ks_all, coils)?;
    if bins.n_shots() != ks_all.n_shots() {
        return Err(Error::ShapeMismatch(format!(
            "bin assignment covers {} shots, data has {}",
            bins.n_shots(),
            ks_all.n_shots()
        )));
    }
    if fields.len() != bins.n_bins {
        return Err(Error::ShapeMismatch(format!(
            "{} displacement fields for {} bins",
            fields.len(),
            bins.n_bins
        )));
    }
    let mut order = Vec::with_capacity(ks_all.n_shots());
    let mut enc_bins = Vec::with_capacity(bins.n_bins);
    for (b, field) in fields.iter().enumerate() {
        let shots = bins.shots_in_bin(b);
        let masks = shots
            .iter()
            .map(|&s| ks_all.mask(s))
            .collect::<Result<Vec<_>>>()?;
        order.extend_from_slice(&shots);
        enc_bins.push(EncodingBin {
            field: Some(field.clone()),
            masks,
        });
    }
    let op = EncodingOperator::new(coils.clone(), enc_bins)?;
    Ok((op, ks_all.select_shots(&order)?))
}

/// Motion-compensated Beltrami reconstruction over all shots.
pub fn solve_mocobel(
    ks_all: &KSpaceData,
    coils: &CoilMaps,
    bins: &BinAssignment,
    fields: &[DisplacementField],
    params: &ReconParams,
) -> Result<(Image, SolveReport)> {
    let (op, data) = motion_operator(ks_all, coils, bins, fields)?;
    solve_primal_dual(&op, &data, params)
}

pub(crate) fn rel_change(prev: f64, next: f64) -> f64 {
    if prev == 0.0 {
        0.0
    } else {
        (prev - next).abs() / prev.abs()
    }
}

pub(crate) fn zeros_like(op: &EncodingOperator) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); op.nx() * op.ny()]
}

pub(crate) fn norm_of(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}
