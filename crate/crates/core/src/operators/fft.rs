//! Centered, orthonormal 2-D Fourier transform.
//!
//! `fft2c(x) = fftshift(FFT2(ifftshift(x))) / sqrt(nx * ny)`, so the DC
//! sample sits at `(nx / 2, ny / 2)` and the transform is unitary.

use std::cell::RefCell;

use rustfft::{FftDirection, FftPlanner};

use crate::model::{Image, C64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft2c(img: &Image) -> Image {
    let mut data = img.data().to_vec();
    fft2c_inplace(&mut data, img.nx(), img.ny(), FftDirection::Forward);
    Image::from_raw(img.nx(), img.ny(), data)
}

pub fn ifft2c(kspace: &Image) -> Image {
    let mut data = kspace.data().to_vec();
    fft2c_inplace(&mut data, kspace.nx(), kspace.ny(), FftDirection::Inverse);
    Image::from_raw(kspace.nx(), kspace.ny(), data)
}

/// In-place centered transform of a row-major `nx x ny` buffer.
pub(crate) fn fft2c_inplace(data: &mut [C64], nx: usize, ny: usize, direction: FftDirection) {
    assert_eq!(data.len(), nx * ny);
    let mut scratch = vec![C64::new(0.0, 0.0); nx * ny];
    // ifftshift: out[i] = in[(i + n/2) % n]
    roll(data, &mut scratch, nx, ny, nx - nx / 2, ny - ny / 2);
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let rows = planner.plan_fft(ny, direction);
        let cols = planner.plan_fft(nx, direction);
        rows.process(&mut scratch);
        transpose(&scratch, data, nx, ny);
        cols.process(data);
        transpose(data, &mut scratch, ny, nx);
    });
    // fftshift: out[(i + n/2) % n] = in[i]
    roll(&scratch, data, nx, ny, nx / 2, ny / 2);
    let scale = 1.0 / ((nx * ny) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// `out[(i + si) % nx][(j + sj) % ny] = input[i][j]`
fn roll(input: &[C64], out: &mut [C64], nx: usize, ny: usize, si: usize, sj: usize) {
    for i in 0..nx {
        let oi = (i + si) % nx;
        let src = &input[i * ny..(i + 1) * ny];
        let dst = &mut out[oi * ny..(oi + 1) * ny];
        let split = ny - sj % ny;
        dst[sj % ny..].copy_from_slice(&src[..split]);
        dst[..sj % ny].copy_from_slice(&src[split..]);
    }
}

/// `out (cols x rows) = input (rows x cols)^T`
fn transpose(input: &[C64], out: &mut [C64], rows: usize, cols: usize) {
    const B: usize = 16;
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    out[j * rows + i] = input[i * cols + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::norm_sqr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(nx: usize, ny: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(nx, ny, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    #[test]
    fn centered_delta_is_flat() {
        for (nx, ny) in [(16, 16), (12, 9), (9, 15)] {
            let img = Image::from_fn(nx, ny, |i, j| {
                if i == nx / 2 && j == ny / 2 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .unwrap();
            let k = fft2c(&img);
            let expect = 1.0 / ((nx * ny) as f64).sqrt();
            for v in k.data() {
                assert!((v - C64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn dc_lands_in_the_center() {
        let img = Image::from_fn(10, 12, |_, _| C64::new(1.0, 0.0)).unwrap();
        let k = fft2c(&img);
        assert!((k.get(5, 6).re - (120f64).sqrt()).abs() < 1e-12);
        assert!(k.get(0, 0).norm() < 1e-12);
    }

    #[test]
    fn inverse_pair_and_parseval() {
        for (nx, ny, seed) in [(16, 16, 1), (13, 20, 2), (9, 11, 3)] {
            let x = random_image(nx, ny, seed);
            let k = fft2c(&x);
            let back = ifft2c(&k);
            let err: f64 = x
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            assert!(err.sqrt() / x.norm() < 1e-12);
            assert!((k.norm() - x.norm()).abs() / x.norm() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dft_for_odd_sizes() {
        let (nx, ny) = (9, 10);
        let x = random_image(nx, ny, 4);
        let k = fft2c(&x);
        let (cx, cy) = ((nx / 2) as f64, (ny / 2) as f64);
        let mut err = 0.0;
        for p in 0..nx {
            for q in 0..ny {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..nx {
                    for j in 0..ny {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * ((p as f64 - cx) * (i as f64 - cx) / nx as f64
                                + (q as f64 - cy) * (j as f64 - cy) / ny as f64);
                        acc += x.get(i, j) * C64::from_polar(1.0, ph);
                    }
                }
                acc /= ((nx * ny) as f64).sqrt();
                err += (acc - k.get(p, q)).norm_sqr();
            }
        }
        assert!(err.sqrt() / norm_sqr(x.data()).sqrt() < 1e-12);
    }
}
