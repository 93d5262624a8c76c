//! Primal-dual solver for `|| s - E x ||^2 + lambda * sum sqrt(1 + beta^2 |grad x|^2)`.
//!
//! The regularizer is the norm of `(beta * grad x, 1)` per pixel, dualized
//! with a variable `(q, t)` restricted to the unit ball of R^5 (two complex
//! gradient components plus the constant channel). The smooth data term is
//! handled with explicit gradient steps (forward-backward primal-dual), so
//! the primal step must satisfy `1/tau - sigma ||K||^2 >= L_f / 2` with
//! `K = lambda * beta * grad`, `||grad||^2 <= 8` and `L_f = 2 ||E||^2`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{Image, KSpaceData, ReconParams, C64};
use crate::operators::{div_into, estimate_norm, grad_into, EncodingOperator, Gradient};

use super::{beltrami_energy_of, check_data, default_lambda, rel_change, zeros_like, SolveReport};

const NORM_ITERS: usize = 30;
const MAX_HALVINGS: usize = 5;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Objective split at the current iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimalDualState {
    pub data: f64,
    pub regularizer: f64,
}

impl PrimalDualState {
    pub fn total(&self) -> f64 {
        self.data + self.regularizer
    }
}

struct Evaluator<'a> {
    op: &'a EncodingOperator,
    data: &'a KSpaceData,
    lambda: f64,
    beta: f64,
    ks: KSpaceData,
    g: Gradient,
}

impl Evaluator<'_> {
    /// Encodes `x` into `self.ks`, turns it into the residual `E x - s` and
    /// returns the objective split.
    fn evaluate(&mut self, x: &[C64]) -> PrimalDualState {
        self.op.encode_into(x, &mut self.ks);
        let mut data = 0.0;
        for (r, s) in self.ks.samples_mut().iter_mut().zip(self.data.samples()) {
            *r -= s;
            data += r.norm_sqr();
        }
        grad_into(x, self.op.nx(), self.op.ny(), &mut self.g);
        PrimalDualState {
            data,
            regularizer: self.lambda * beltrami_energy_of(&self.g, self.beta),
        }
    }
}

/// Runs the solver from a zero image. The returned image is the last
/// accepted primal iterate.
pub fn solve_primal_dual(
    op: &EncodingOperator,
    data: &KSpaceData,
    params: &ReconParams,
) -> Result<(Image, SolveReport)> {
    params.check()?;
    check_data(op, data)?;
    let start = Instant::now();
    let lambda = match params.lambda {
        Some(l) => l,
        None => default_lambda(op, data, params.lambda_scale)?,
    };
    let beta = params.beta;
    let (nx, ny) = (op.nx(), op.ny());
    let e_norm = estimate_norm(op, NORM_ITERS, 0)?;
    let lip = 2.0 * e_norm;
    let k_norm = lambda * beta * 8f64.sqrt();
    let lb = lambda * beta;
    let sigma = if k_norm > 0.0 { 1.0 / k_norm } else { 0.0 };
    let tau0 = params.step_safety / (lip / 2.0 + k_norm).max(f64::MIN_POSITIVE);

    let mut report = SolveReport {
        lambda,
        beta,
        operator_norm: e_norm,
        ..SolveReport::default()
    };

    let mut eval = Evaluator {
        op,
        data,
        lambda,
        beta,
        ks: op.zero_kspace(),
        g: Gradient::zeros(nx, ny),
    };

    let mut x = zeros_like(op);
    let mut x_bar = x.clone();
    let mut cand = x.clone();
    let mut grad_f = x.clone();
    let mut div_p = x.clone();
    let mut dual = Gradient::zeros(nx, ny);
    let mut dual_t = vec![0.0; nx * ny];
    let mut g_bar = Gradient::zeros(nx, ny);

    let mut state = eval.evaluate(&x);
    // residual of the accepted iterate
    let mut residual = eval.ks.clone();
    let initial = state.total();
    push(&mut report, state);

    for _ in 0..params.max_iters {
        report.iterations += 1;

        // dual ascent on the extrapolated point
        grad_into(&x_bar, nx, ny, &mut g_bar);
        for i in 0..nx * ny {
            let mut qx = dual.gx[i] + g_bar.gx[i] * (sigma * lb);
            let mut qy = dual.gy[i] + g_bar.gy[i] * (sigma * lb);
            let mut t = dual_t[i] + sigma * lambda;
            let n2 = qx.norm_sqr() + qy.norm_sqr() + t * t;
            if n2 > 1.0 {
                let s = 1.0 / n2.sqrt();
                qx *= s;
                qy *= s;
                t *= s;
            }
            dual.gx[i] = qx;
            dual.gy[i] = qy;
            dual_t[i] = t;
        }

        // primal descent direction: 2 E^H (E x - s) - lambda beta div p
        op.adjoint_into(&residual, &mut grad_f);
        div_into(&dual, &mut div_p);
        for (gf, d) in grad_f.iter_mut().zip(&div_p) {
            *gf = *gf * 2.0 - d * lb;
        }

        let mut tau = tau0;
        let mut accepted = None;
        let mut last = state;
        for _ in 0..=MAX_HALVINGS {
            for ((c, xi), gi) in cand.iter_mut().zip(&x).zip(&grad_f) {
                *c = xi - gi * tau;
            }
            last = eval.evaluate(&cand);
            if last.total().is_finite() && last.total() <= state.total() {
                accepted = Some(last);
                break;
            }
            tau *= 0.5;
        }

        match accepted {
            Some(next) => {
                for ((xb, xi), c) in x_bar.iter_mut().zip(x.iter_mut()).zip(&cand) {
                    *xb = c * 2.0 - *xi;
                    *xi = *c;
                }
                std::mem::swap(&mut residual, &mut eval.ks);
                let change = rel_change(state.total(), next.total());
                state = next;
                push(&mut report, state);
                report.final_relative_change = change;
                if change < params.tol {
                    report.converged = true;
                    break;
                }
            }
            None => {
                if !last.total().is_finite() || last.total() > DIVERGENCE_FACTOR * initial {
                    report.wall_time_s = start.elapsed().as_secs_f64();
                    return Err(Error::Divergence(Box::new(report)));
                }
                report.rejected_steps += 1;
                x_bar.copy_from_slice(&x);
            }
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((Image::from_raw(nx, ny, x), report))
}

fn push(report: &mut SolveReport, s: PrimalDualState) {
    report.objective.push(s.total());
    report.data_term.push(s.data);
    report.regularizer_term.push(s.regularizer);
}
