//! Linear operators of the forward model: centered FFT, bilinear warping,
//! gradient/divergence and the composed multi-coil, multi-bin encoding.

mod encoding;
mod fft;
mod gradient;
mod warp;

pub use encoding::{EncodingBin, EncodingOperator};
pub(crate) use fft::fft2c_inplace;
pub use fft::{fft2c, ifft2c};
pub use gradient::{div, grad, Gradient};
pub(crate) use gradient::{div_into, grad_into};
pub(crate) use warp::warp_real;
pub use warp::{warp, warp_adjoint, WarpPlan};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{cdot, norm_sqr, C64};

/// Power iteration on a Hermitian positive semi-definite operator.
///
/// Returns the Rayleigh quotient after every iteration; the sequence is
/// non-decreasing up to rounding.
pub fn power_iteration<F>(mut apply: F, x0: Vec<C64>, iters: usize) -> Vec<f64>
where
    F: FnMut(&[C64], &mut [C64]),
{
    let mut x = x0;
    let n0 = norm_sqr(&x).sqrt();
    if n0 == 0.0 {
        return vec![0.0; iters];
    }
    x.iter_mut().for_each(|v| *v /= n0);
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        apply(&x, &mut y);
        let rq = cdot(&x, &y).re;
        history.push(rq);
        let ny = norm_sqr(&y).sqrt();
        if ny == 0.0 {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    history
}

/// Largest eigenvalue of `E^H E` by seeded power iteration.
pub fn estimate_norm(op: &EncodingOperator, iters: usize, seed: u64) -> Result<f64> {
    Ok(*estimate_norm_history(op, iters, seed)?
        .last()
        .expect("at least five iterations"))
}

pub fn estimate_norm_history(op: &EncodingOperator, iters: usize, seed: u64) -> Result<Vec<f64>> {
    if iters < 5 {
        return Err(Error::InvalidArgument(format!(
            "norm estimation needs at least 5 iterations, got {iters}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = op.nx() * op.ny();
    let x0 = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    Ok(power_iteration(|x, out| op.normal_into(x, out), x0, iters))
}

#[cfg(test)]
mod tests;
