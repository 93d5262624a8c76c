//! Non-rigid registration by sum-of-squared-differences minimization in a
//! coarse-to-fine Gauss-Newton scheme.
//!
//! At every level the residual `r = warp(moving, u) - reference` is
//! linearized through the spatial gradients of the warped moving image and
//! `(J^T J + alpha L) du = -J^T r` is solved by conjugate gradients, `L`
//! being the (Neumann) negative Laplacian applied to each component of
//! `du`. The update is Gaussian-smoothed and accepted only if it lowers the
//! SSD, halving the step up to five times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DisplacementField, Image};
use crate::operators::warp_real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationParams {
    pub n_levels: usize,
    pub max_gn_iters: usize,
    /// Gaussian smoothing of each update, in pixels of the current level.
    pub update_smoothing_sigma: f64,
    pub tikhonov_alpha: f64,
    pub cg_iters: usize,
    /// Relative SSD decrease below which a level stops.
    pub tol: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            n_levels: 3,
            max_gn_iters: 10,
            update_smoothing_sigma: 2.0,
            tikhonov_alpha: 0.1,
            cg_iters: 20,
            tol: 1e-4,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_levels == 0 {
            v.push("n_levels must be at least 1".into());
        }
        if self.max_gn_iters == 0 {
            v.push("max_gn_iters must be at least 1".into());
        }
        if self.cg_iters == 0 {
            v.push("cg_iters must be at least 1".into());
        }
        if !(self.update_smoothing_sigma >= 0.0 && self.update_smoothing_sigma.is_finite()) {
            v.push("update_smoothing_sigma must be >= 0".into());
        }
        if !(self.tikhonov_alpha >= 0.0 && self.tikhonov_alpha.is_finite()) {
            v.push("tikhonov_alpha must be >= 0".into());
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            v.push("tol must lie in (0, 1)".into());
        }
        v
    }
}

/// SSD trace of one pyramid level; `ssd[0]` is the starting value and every
/// later entry an accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelLog {
    pub level: usize,
    pub nx: usize,
    pub ny: usize,
    pub ssd: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Registration {
    pub field: DisplacementField,
    pub levels: Vec<LevelLog>,
}

#[derive(Clone, Debug)]
struct Grid {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Grid {
    fn new(nx: usize, ny: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), nx * ny);
        Self { nx, ny, data }
    }

    fn downsample(&self) -> Grid {
        let smooth = gaussian_blur(&self.data, self.nx, self.ny, 1.0);
        let (cx, cy) = (self.nx.div_ceil(2), self.ny.div_ceil(2));
        let mut data = Vec::with_capacity(cx * cy);
        for i in 0..cx {
            for j in 0..cy {
                data.push(smooth[2 * i * self.ny + 2 * j]);
            }
        }
        Grid::new(cx, cy, data)
    }
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(data: &[f64], nx: usize, ny: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let mut tmp = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let jj = (j as isize + t as isize - radius).clamp(0, ny as isize - 1) as usize;
                acc += w * data[i * ny + jj];
            }
            tmp[i * ny + j] = acc;
        }
    }
    let mut out = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let ii = (i as isize + t as isize - radius).clamp(0, nx as isize - 1) as usize;
                acc += w * tmp[ii * ny + j];
            }
            out[i * ny + j] = acc;
        }
    }
    out
}

/// Central differences, one-sided at the borders.
fn central_gradient(data: &[f64], nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; nx * ny];
    let mut gy = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let p = i * ny + j;
            let (a, b) = (i.saturating_sub(1), (i + 1).min(nx - 1));
            if b > a {
                gx[p] = (data[b * ny + j] - data[a * ny + j]) / (b - a) as f64;
            }
            let (c, d) = (j.saturating_sub(1), (j + 1).min(ny - 1));
            if d > c {
                gy[p] = (data[i * ny + d] - data[i * ny + c]) / (d - c) as f64;
            }
        }
    }
    (gx, gy)
}

/// Negative Neumann Laplacian.
fn neg_laplacian(v: &[f64], nx: usize, ny: usize, out: &mut [f64]) {
    for i in 0..nx {
        for j in 0..ny {
            let p = i * ny + j;
            let mut acc = 0.0;
            if i > 0 {
                acc += v[p] - v[p - ny];
            }
            if i + 1 < nx {
                acc += v[p] - v[p + ny];
            }
            if j > 0 {
                acc += v[p] - v[p - 1];
            }
            if j + 1 < ny {
                acc += v[p] - v[p + 1];
            }
            out[p] = acc;
        }
    }
}

fn ssd(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct NormalSystem<'a> {
    gx: &'a [f64],
    gy: &'a [f64],
    alpha: f64,
    nx: usize,
    ny: usize,
}

impl NormalSystem<'_> {
    /// `v` and `out` hold the x components followed by the y components.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.nx * self.ny;
        let (vx, vy) = v.split_at(n);
        let (ox, oy) = out.split_at_mut(n);
        neg_laplacian(vx, self.nx, self.ny, ox);
        neg_laplacian(vy, self.nx, self.ny, oy);
        for p in 0..n {
            let jv = self.gx[p] * vx[p] + self.gy[p] * vy[p];
            ox[p] = self.alpha * ox[p] + self.gx[p] * jv + 1e-9 * vx[p];
            oy[p] = self.alpha * oy[p] + self.gy[p] * jv + 1e-9 * vy[p];
        }
    }
}

fn conjugate_gradient(sys: &NormalSystem, rhs: &[f64], iters: usize) -> Vec<f64> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = 1e-20 * rr;
    for _ in 0..iters {
        if rr <= stop || rr == 0.0 {
            break;
        }
        sys.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    x
}

fn upsample_field(field: &DisplacementField, nx: usize, ny: usize) -> DisplacementField {
    let (cx, cy) = (field.nx(), field.ny());
    let sample = |data: &[f64], x: f64, y: f64| -> f64 {
        let x = x.clamp(0.0, (cx - 1) as f64);
        let y = y.clamp(0.0, (cy - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(cx - 1), (y0 + 1).min(cy - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        data[x0 * cy + y0] * (1.0 - fx) * (1.0 - fy)
            + data[x0 * cy + y1] * (1.0 - fx) * fy
            + data[x1 * cy + y0] * fx * (1.0 - fy)
            + data[x1 * cy + y1] * fx * fy
    };
    let mut ux = Vec::with_capacity(nx * ny);
    let mut uy = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = (i as f64 / 2.0, j as f64 / 2.0);
            ux.push(2.0 * sample(field.ux(), x, y));
            uy.push(2.0 * sample(field.uy(), x, y));
        }
    }
    DisplacementField::new(nx, ny, ux, uy).expect("finite upsampled field")
}

fn add_scaled(u: &DisplacementField, du: &[f64], t: f64) -> DisplacementField {
    let n = u.nx() * u.ny();
    let ux = u
        .ux()
        .iter()
        .zip(&du[..n])
        .map(|(a, b)| a + t * b)
        .collect();
    let uy = u
        .uy()
        .iter()
        .zip(&du[n..])
        .map(|(a, b)| a + t * b)
        .collect();
    DisplacementField::new(u.nx(), u.ny(), ux, uy).expect("finite update")
}

fn register_level(
    moving: &Grid,
    reference: &Grid,
    mut u: DisplacementField,
    params: &RegistrationParams,
    level: usize,
) -> (DisplacementField, LevelLog) {
    let (nx, ny) = (moving.nx, moving.ny);
    let n = nx * ny;
    let (mgx, mgy) = central_gradient(&moving.data, nx, ny);
    let mut warped = warp_real(&moving.data, &u);
    let mut current = ssd(&warped, &reference.data);
    let mut log = LevelLog {
        level,
        nx,
        ny,
        ssd: vec![current],
    };
    for _ in 0..params.max_gn_iters {
        if current == 0.0 {
            break;
        }
        let gx = warp_real(&mgx, &u);
        let gy = warp_real(&mgy, &u);
        let mut rhs = vec![0.0; 2 * n];
        for p in 0..n {
            let r = warped[p] - reference.data[p];
            rhs[p] = -gx[p] * r;
            rhs[n + p] = -gy[p] * r;
        }
        let sys = NormalSystem {
            gx: &gx,
            gy: &gy,
            alpha: params.tikhonov_alpha,
            nx,
            ny,
        };
        let mut du = conjugate_gradient(&sys, &rhs, params.cg_iters);
        let sx = gaussian_blur(&du[..n], nx, ny, params.update_smoothing_sigma);
        let sy = gaussian_blur(&du[n..], nx, ny, params.update_smoothing_sigma);
        du[..n].copy_from_slice(&sx);
        du[n..].copy_from_slice(&sy);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=5 {
            let trial = add_scaled(&u, &du, step);
            let w = warp_real(&moving.data, &trial);
            let s = ssd(&w, &reference.data);
            if s < current {
                accepted = Some((trial, w, s));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, w, s)) = accepted else {
            break;
        };
        let gain = (current - s) / current;
        u = trial;
        warped = w;
        current = s;
        log.ssd.push(s);
        if gain < params.tol {
            break;
        }
    }
    (u, log)
}

/// Full registration with the per-level SSD log.
///
/// The returned field `u` satisfies `warp(|moving|, u) ~ |reference|`.
pub fn register_with_log(
    moving: &Image,
    reference: &Image,
    params: &RegistrationParams,
) -> Result<Registration> {
    moving.ensure_same_shape(reference, "registration")?;
    let v = params.validate();
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    let (nx, ny) = moving.dims();
    let scale = reference
        .data()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let norm = |img: &Image| {
        Grid::new(
            nx,
            ny,
            img.data().iter().map(|v| v.norm() / scale).collect(),
        )
    };

    let mut moving_pyr = vec![norm(moving)];
    let mut reference_pyr = vec![norm(reference)];
    while moving_pyr.len() < params.n_levels {
        let last = moving_pyr.last().expect("non-empty");
        if last.nx.div_ceil(2) < 8 || last.ny.div_ceil(2) < 8 {
            break;
        }
        let m = last.downsample();
        let r = reference_pyr.last().expect("non-empty").downsample();
        moving_pyr.push(m);
        reference_pyr.push(r);
    }

    let coarsest = moving_pyr.last().expect("non-empty");
    let mut u = DisplacementField::zeros(coarsest.nx, coarsest.ny);
    let mut levels = Vec::new();
    for level in (0..moving_pyr.len()).rev() {
        let (m, r) = (&moving_pyr[level], &reference_pyr[level]);
        if (u.nx(), u.ny()) != (m.nx, m.ny) {
            u = upsample_field(&u, m.nx, m.ny);
        }
        let (next, log) = register_level(m, r, u, params, level);
        u = next;
        levels.push(log);
    }
    Ok(Registration { field: u, levels })
}

/// Displacement `u` with `warp(|moving|, u) ~ |reference|`.
pub fn register(
    moving: &Image,
    reference: &Image,
    params: &RegistrationParams,
) -> Result<DisplacementField> {
    Ok(register_with_log(moving, reference, params)?.field)
}

/// Motion fields of every bin relative to the reference bin.
///
/// Field `b` satisfies `warp(bin_images[reference_bin], u_b) ~ bin_images[b]`,
/// the convention of the encoding operator; the reference bin gets zeros.
pub fn register_bins(
    bin_images: &[Image],
    reference_bin: usize,
    params: &RegistrationParams,
) -> Result<Vec<DisplacementField>> {
    let reference = bin_images.get(reference_bin).ok_or_else(|| {
        Error::InvalidArgument(format!("reference bin {reference_bin} out of range"))
    })?;
    bin_images
        .iter()
        .enumerate()
        .map(|(b, img)| {
            if b == reference_bin {
                Ok(DisplacementField::zeros(img.nx(), img.ny()))
            } else {
                register(reference, img, params)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::warp;
    use crate::simulator::{make_phantom, MotionState, PhantomSpec};

    fn smooth_phantom(nx: usize, ny: usize) -> Image {
        let p = make_phantom(&PhantomSpec::cardiac(nx, ny)).unwrap();
        Image::from_real(nx, ny, &gaussian_blur(&p.magnitude(), nx, ny, 1.5)).unwrap()
    }

    #[test]
    fn identical_images_give_zero_field() {
        let img = smooth_phantom(64, 80);
        let f = register(&img, &img, &RegistrationParams::default()).unwrap();
        assert!(f.max_norm() < 0.05);
    }

    #[test]
    fn ssd_is_monotone_per_level() {
        let img = smooth_phantom(64, 64);
        let target = warp(&img, &DisplacementField::constant(64, 64, 1.5, -1.0)).unwrap();
        let reg = register_with_log(&img, &target, &RegistrationParams::default()).unwrap();
        assert_eq!(reg.levels.len(), 3);
        for log in &reg.levels {
            assert!(log.ssd.windows(2).all(|w| w[1] <= w[0]), "{:?}", log.ssd);
        }
    }

    #[test]
    fn small_translation() {
        let img = smooth_phantom(64, 64);
        let truth = MotionState::translation(1.0, 0.5);
        let (target, _) = crate::simulator::apply_motion(&img, &truth).unwrap();
        let f = register(&img, &target, &RegistrationParams::default()).unwrap();
        let mut ex: Vec<f64> = f.ux().to_vec();
        ex.sort_by(f64::total_cmp);
        assert!((ex[ex.len() / 2] - 1.0).abs() < 0.25);
    }

    #[test]
    fn single_and_identical_bins() {
        let img = smooth_phantom(32, 32);
        let one = register_bins(
            std::slice::from_ref(&img),
            0,
            &RegistrationParams::default(),
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].is_zero());
        let two = register_bins(
            &[img.clone(), img.clone()],
            1,
            &RegistrationParams::default(),
        )
        .unwrap();
        assert!(two[1].is_zero());
        assert!(two[0].max_norm() < 0.05);
        assert!(register_bins(&[], 0, &RegistrationParams::default()).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let a = Image::zeros(16, 16).unwrap();
        let b = Image::zeros(16, 18).unwrap();
        assert!(register(&a, &b, &RegistrationParams::default()).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let v = vec![2.0; 12 * 9];
        let b = gaussian_blur(&v, 12, 9, 2.0);
        assert!(b.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }
}
