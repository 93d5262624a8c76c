//! Bilinear pull warping and its exact transpose.
//!
//! `warp(x)(p) = x(p + u(p))`, reads outside the grid clamp to the nearest
//! edge pixel. The transpose scatters with the very same taps, so
//! `<W x, y> = <x, W^T y>` holds to rounding.

use crate::error::{Error, Result};
use crate::model::{DisplacementField, Image, C64};

#[derive(Clone, Copy, Debug)]
struct Taps {
    idx: [u32; 4],
    w: [f64; 4],
}

/// Precomputed interpolation taps for one displacement field.
#[derive(Clone, Debug)]
pub struct WarpPlan {
    nx: usize,
    ny: usize,
    taps: Vec<Taps>,
}

impl WarpPlan {
    pub fn new(field: &DisplacementField) -> Self {
        let (nx, ny) = (field.nx(), field.ny());
        let mut taps = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let p = i * ny + j;
                taps.push(bilinear_taps(
                    i as f64 + field.ux[p],
                    j as f64 + field.uy[p],
                    nx,
                    ny,
                ));
            }
        }
        Self { nx, ny, taps }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub(crate) fn apply_slice<T>(&self, src: &[T], out: &mut [T])
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        for (o, t) in out.iter_mut().zip(&self.taps) {
            let mut acc = T::default();
            let mut first = true;
            for k in 0..4 {
                if t.w[k] != 0.0 {
                    let v = src[t.idx[k] as usize];
                    // the lone-tap case stays bit-exact
                    acc = if first && t.w[k] == 1.0 {
                        v
                    } else {
                        acc + v * t.w[k]
                    };
                    first = false;
                }
            }
            *o = acc;
        }
    }

    pub(crate) fn adjoint_slice<T>(&self, src: &[T], out: &mut [T])
    where
        T: Copy + Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
    {
        out.iter_mut().for_each(|v| *v = T::default());
        for (v, t) in src.iter().zip(&self.taps) {
            for k in 0..4 {
                if t.w[k] != 0.0 {
                    out[t.idx[k] as usize] += *v * t.w[k];
                }
            }
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let mut out = vec![C64::new(0.0, 0.0); img.len()];
        self.apply_slice(img.data(), &mut out);
        Ok(Image::from_raw(self.nx, self.ny, out))
    }

    pub fn adjoint(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let mut out = vec![C64::new(0.0, 0.0); img.len()];
        self.adjoint_slice(img.data(), &mut out);
        Ok(Image::from_raw(self.nx, self.ny, out))
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.dims() != (self.nx, self.ny) {
            return Err(Error::ShapeMismatch(format!(
                "warp field {:?} vs image {:?}",
                (self.nx, self.ny),
                img.dims()
            )));
        }
        Ok(())
    }
}

fn bilinear_taps(x: f64, y: f64, nx: usize, ny: usize) -> Taps {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let clamp = |v: f64, n: usize| -> u32 { v.max(0.0).min((n - 1) as f64) as u32 };
    let (i0, i1) = (clamp(x0, nx), clamp(x0 + 1.0, nx));
    let (j0, j1) = (clamp(y0, ny), clamp(y0 + 1.0, ny));
    let ny32 = ny as u32;
    Taps {
        idx: [
            i0 * ny32 + j0,
            i0 * ny32 + j1,
            i1 * ny32 + j0,
            i1 * ny32 + j1,
        ],
        w: [
            (1.0 - fx) * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * (1.0 - fy),
            fx * fy,
        ],
    }
}

/// Bilinear pull warp of `img` by `field`.
pub fn warp(img: &Image, field: &DisplacementField) -> Result<Image> {
    check_field(img, field)?;
    if field.is_zero() {
        return Ok(img.clone());
    }
    WarpPlan::new(field).apply(img)
}

/// Transpose of [`warp`] (a scatter with the same weights, not the inverse deformation).
pub fn warp_adjoint(img: &Image, field: &DisplacementField) -> Result<Image> {
    check_field(img, field)?;
    if field.is_zero() {
        return Ok(img.clone());
    }
    WarpPlan::new(field).adjoint(img)
}

/// Warp of a real-valued row-major buffer.
pub(crate) fn warp_real(src: &[f64], field: &DisplacementField) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    WarpPlan::new(field).apply_slice(src, &mut out);
    out
}

fn check_field(img: &Image, field: &DisplacementField) -> Result<()> {
    if img.dims() != (field.nx(), field.ny()) {
        return Err(Error::ShapeMismatch(format!(
            "field {:?} vs image {:?}",
            (field.nx(), field.ny()),
            img.dims()
        )));
    }
    Ok(())
}
