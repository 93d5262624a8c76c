use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{axpy, cdot, CoilMaps, DisplacementField, Image, KSpaceData};
use crate::operators::EncodingOperator;
use crate::selfnav::BinAssignment;

use super::{check_data, motion_operator, norm_of, zeros_like};

pub const TIKHONOV_MAX_ITERS: usize = 50;
pub const TIKHONOV_TOL: f64 = 1e-6;
/// Factor of the default Tikhonov weight `scale * max|E^H s|`.
pub const TIKHONOV_LAMBDA_SCALE: f64 = 0.01;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TikhonovReport {
    pub lambda: f64,
    pub iterations: usize,
    /// `||r_k|| / ||E^H s||` after every iteration.
    pub relative_residuals: Vec<f64>,
}

/// Conjugate gradients on `(E^H E + lambda I) x = E^H s`, starting from zero.
pub fn solve_tikhonov_with(
    op: &EncodingOperator,
    data: &KSpaceData,
    lambda: f64,
) -> Result<(Image, TikhonovReport)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Tikhonov weight {lambda} must be finite and >= 0"
        )));
    }
    check_data(op, data)?;
    let (nx, ny) = (op.nx(), op.ny());
    let mut report = TikhonovReport {
        lambda,
        ..TikhonovReport::default()
    };
    let mut x = zeros_like(op);
    let mut r = zeros_like(op);
    op.adjoint_into(data, &mut r);
    let b_norm = norm_of(&r);
    if b_norm == 0.0 {
        return Ok((Image::from_raw(nx, ny, x), report));
    }
    let mut p = r.clone();
    let mut ap = zeros_like(op);
    let mut rr = cdot(&r, &r).re;
    for _ in 0..TIKHONOV_MAX_ITERS {
        op.normal_into(&p, &mut ap);
        axpy(&mut ap, lambda, &p);
        let pap = cdot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_next = cdot(&r, &r).re;
        report.iterations += 1;
        let rel = rr_next.sqrt() / b_norm;
        report.relative_residuals.push(rel);
        if rel < TIKHONOV_TOL {
            break;
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rr = rr_next;
    }
    Ok((Image::from_raw(nx, ny, x), report))
}

/// Motion-compensated Tikhonov reconstruction with identity regularization.
pub fn solve_tikhonov(
    ks_all: &KSpaceData,
    coils: &CoilMaps,
    bins: &BinAssignment,
    fields: &[DisplacementField],
    lambda: f64,
) -> Result<Image> {
    let (op, data) = motion_operator(ks_all, coils, bins, fields)?;
    Ok(solve_tikhonov_with(&op, &data, lambda)?.0)
}
