//! Forward-difference gradient with Neumann boundary and its negative adjoint.

use crate::error::{Error, Result};
use crate::model::{cdot, norm_sqr, Image, C64};

/// Gradient of a complex image: one complex value per pixel and direction,
/// i.e. four real channels (re/im along rows, re/im along columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub nx: usize,
    pub ny: usize,
    /// Difference along rows (`x(i+1, j) - x(i, j)`).
    pub gx: Vec<C64>,
    /// Difference along columns (`x(i, j+1) - x(i, j)`).
    pub gy: Vec<C64>,
}

impl Gradient {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            gx: vec![C64::new(0.0, 0.0); nx * ny],
            gy: vec![C64::new(0.0, 0.0); nx * ny],
        }
    }

    /// `|g|^2` per pixel, summed over all four real channels.
    pub fn magnitude_sqr(&self) -> Vec<f64> {
        self.gx
            .iter()
            .zip(&self.gy)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    pub fn inner(&self, other: &Gradient) -> C64 {
        cdot(&self.gx, &other.gx) + cdot(&self.gy, &other.gy)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.gx) + norm_sqr(&self.gy)
    }
}

pub fn grad(img: &Image) -> Gradient {
    let (nx, ny) = img.dims();
    let mut g = Gradient::zeros(nx, ny);
    grad_into(img.data(), nx, ny, &mut g);
    g
}

pub(crate) fn grad_into(x: &[C64], nx: usize, ny: usize, g: &mut Gradient) {
    for i in 0..nx {
        for j in 0..ny {
            let p = i * ny + j;
            g.gx[p] = if i + 1 < nx {
                x[p + ny] - x[p]
            } else {
                C64::new(0.0, 0.0)
            };
            g.gy[p] = if j + 1 < ny {
                x[p + 1] - x[p]
            } else {
                C64::new(0.0, 0.0)
            };
        }
    }
}

/// Discrete divergence, `div = -grad^T`.
pub fn div(g: &Gradient) -> Result<Image> {
    if g.gx.len() != g.nx * g.ny || g.gy.len() != g.nx * g.ny {
        return Err(Error::ShapeMismatch("gradient components".into()));
    }
    let mut out = vec![C64::new(0.0, 0.0); g.nx * g.ny];
    div_into(g, &mut out);
    Image::from_vec(g.nx, g.ny, out)
}

pub(crate) fn div_into(g: &Gradient, out: &mut [C64]) {
    let (nx, ny) = (g.nx, g.ny);
    for i in 0..nx {
        for j in 0..ny {
            let p = i * ny + j;
            let mut v = C64::new(0.0, 0.0);
            if i + 1 < nx {
                v += g.gx[p];
            }
            if i > 0 {
                v -= g.gx[p - ny];
            }
            if j + 1 < ny {
                v += g.gy[p];
            }
            if j > 0 {
                v -= g.gy[p - 1];
            }
            out[p] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::power_iteration;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rc(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let x = Image::from_fn(9, 12, |_, _| C64::new(2.5, -1.0)).unwrap();
        assert_eq!(grad(&x).norm_sqr(), 0.0);
    }

    #[test]
    fn ramp_gradient() {
        let x = Image::from_fn(10, 8, |i, _| C64::new(i as f64, 0.0)).unwrap();
        let g = grad(&x);
        for i in 0..10 {
            for j in 0..8 {
                let expect = if i < 9 { 1.0 } else { 0.0 };
                assert_eq!(g.gx[i * 8 + j], C64::new(expect, 0.0));
                assert_eq!(g.gy[i * 8 + j], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn div_is_negative_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (nx, ny) in [(8, 8), (13, 9), (32, 17)] {
            let x = Image::from_fn(nx, ny, |_, _| rc(&mut rng)).unwrap();
            let mut p = Gradient::zeros(nx, ny);
            p.gx.iter_mut().for_each(|v| *v = rc(&mut rng));
            p.gy.iter_mut().for_each(|v| *v = rc(&mut rng));
            let lhs = grad(&x).inner(&p);
            let rhs = -cdot(x.data(), div(&p).unwrap().data());
            assert!((lhs - rhs).norm() / lhs.norm() < 1e-12);
        }
    }

    #[test]
    fn operator_norm_bound() {
        let (nx, ny) = (24, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0: Vec<C64> = (0..nx * ny).map(|_| rc(&mut rng)).collect();
        let history = power_iteration(
            |x: &[C64], out: &mut [C64]| {
                let img = Image::from_raw(nx, ny, x.to_vec());
                let d = div(&grad(&img)).unwrap();
                for (o, v) in out.iter_mut().zip(d.data()) {
                    *o = -v;
                }
            },
            x0,
            200,
        );
        let top = *history.last().unwrap();
        assert!(top <= 8.0 + 1e-6 && top > 7.0, "{top}");
    }
}
