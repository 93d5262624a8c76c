//! Image-quality and signal scores. All image metrics compare magnitudes
//! and take their dynamic range from the reference image, so they are not
//! symmetric in their arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Image;

const SSIM_WINDOW: usize = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn peak(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `10 log10(max|ref|^2 / MSE)` on magnitudes; `f64::INFINITY` for identical magnitudes.
pub fn psnr(test: &Image, reference: &Image) -> Result<f64> {
    test.ensure_same_shape(reference, "psnr")?;
    let r = reference.magnitude();
    let p = peak(&r);
    if p == 0.0 {
        return Err(Error::InvalidArgument(
            "psnr against an all-zero reference".into(),
        ));
    }
    let mse = test
        .magnitude()
        .iter()
        .zip(&r)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / r.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p * p / mse).log10())
}

/// Mean SSIM of the magnitudes over all 8x8 windows.
pub fn ssim(test: &Image, reference: &Image) -> Result<f64> {
    test.ensure_same_shape(reference, "ssim")?;
    ssim_real(
        &test.magnitude(),
        &reference.magnitude(),
        test.nx(),
        test.ny(),
    )
}

/// Mean SSIM of two real arrays (row-major `nx x ny`) over every 8x8
/// window, uniform weights, dynamic range `max|reference|`.
pub fn ssim_real(test: &[f64], reference: &[f64], nx: usize, ny: usize) -> Result<f64> {
    if test.len() != nx * ny || reference.len() != nx * ny {
        return Err(Error::ShapeMismatch(format!(
            "ssim arrays of length {} and {} for {nx}x{ny}",
            test.len(),
            reference.len()
        )));
    }
    if nx < SSIM_WINDOW || ny < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"
        )));
    }
    let l = peak(reference);
    if l == 0.0 {
        return Err(Error::InvalidArgument(
            "ssim against an all-zero reference".into(),
        ));
    }
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);

    let sx = Integral::new(test, nx, ny, |a| a);
    let sy = Integral::new(reference, nx, ny, |a| a);
    let sxx = Integral::new(test, nx, ny, |a| a * a);
    let syy = Integral::new(reference, nx, ny, |a| a * a);
    let sxy = Integral::pair(test, reference, nx, ny);

    let w = SSIM_WINDOW;
    let n = (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=nx - w {
        for j in 0..=ny - w {
            let mx = sx.window(i, j, w) / n;
            let my = sy.window(i, j, w) / n;
            // unbiased local (co)variances
            let vx = (sxx.window(i, j, w) - n * mx * mx) / (n - 1.0);
            let vy = (syy.window(i, j, w) - n * my * my) / (n - 1.0);
            let cxy = (sxy.window(i, j, w) - n * mx * my) / (n - 1.0);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    ny1: usize,
    table: Vec<f64>,
}

impl Integral {
    fn new(a: &[f64], nx: usize, ny: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::build(nx, ny, |k| f(a[k]))
    }

    fn pair(a: &[f64], b: &[f64], nx: usize, ny: usize) -> Self {
        Self::build(nx, ny, |k| a[k] * b[k])
    }

    fn build(nx: usize, ny: usize, value: impl Fn(usize) -> f64) -> Self {
        let ny1 = ny + 1;
        let mut table = vec![0.0; (nx + 1) * ny1];
        for i in 0..nx {
            let mut row = 0.0;
            for j in 0..ny {
                row += value(i * ny + j);
                table[(i + 1) * ny1 + j + 1] = table[i * ny1 + j + 1] + row;
            }
        }
        Self { ny1, table }
    }

    fn window(&self, i: usize, j: usize, w: usize) -> f64 {
        let t = |a: usize, b: usize| self.table[a * self.ny1 + b];
        t(i + w, j + w) - t(i, j + w) - t(i + w, j) + t(i, j)
    }
}

/// Straight segment in pixel coordinates `(row, column)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub n_samples: usize,
}

impl ProfileSpec {
    pub fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "profile needs at least 2 samples, got {}",
                self.n_samples
            )));
        }
        let inside = |(x, y): (f64, f64)| {
            x.is_finite()
                && y.is_finite()
                && x >= 0.0
                && y >= 0.0
                && x <= (nx - 1) as f64
                && y <= (ny - 1) as f64
        };
        if !inside(self.start) || !inside(self.end) {
            return Err(Error::InvalidArgument(format!(
                "profile endpoints {:?} -> {:?} outside the {nx}x{ny} grid",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Bilinear samples of `|img|` at evenly spaced points from start to end.
pub fn line_profile(img: &Image, spec: &ProfileSpec) -> Result<Vec<f64>> {
    let (nx, ny) = img.dims();
    spec.validate(nx, ny)?;
    let mag = img.magnitude();
    let at = |i: usize, j: usize| mag[i * ny + j];
    let n = spec.n_samples;
    Ok((0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            let x = spec.start.0 + t * (spec.end.0 - spec.start.0);
            let y = spec.start.1 + t * (spec.end.1 - spec.start.1);
            let (i0, j0) = (
                (x.floor() as usize).min(nx - 1),
                (y.floor() as usize).min(ny - 1),
            );
            let (i1, j1) = ((i0 + 1).min(nx - 1), (j0 + 1).min(ny - 1));
            let (fx, fy) = (x - i0 as f64, y - j0 as f64);
            (1.0 - fx) * ((1.0 - fy) * at(i0, j0) + fy * at(i0, j1))
                + fx * ((1.0 - fy) * at(i1, j0) + fy * at(i1, j1))
        })
        .collect())
}

/// Largest absolute difference between consecutive profile samples.
pub fn max_abs_derivative(profile: &[f64]) -> f64 {
    profile
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson_r: f64,
    pub r_squared: f64,
}

pub fn signal_correlation(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "signals of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InvalidArgument(
            "correlation needs at least 3 samples".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument(
            "correlation of a constant signal".into(),
        ));
    }
    let r = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    Ok(Correlation {
        pearson_r: r,
        r_squared: r * r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::C64;
    use crate::registration::gaussian_blur;
    use crate::simulator::{make_phantom, PhantomSpec};
    use proptest::prelude::*;
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
    fn psnr_identical_is_infinite() {
        let a = random_image(16, 16, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_error_is_twenty_db() {
        let ones = Image::from_real(10, 12, &[1.0; 120]).unwrap();
        let off = Image::from_real(10, 12, &[1.1; 120]).unwrap();
        assert!((psnr(&off, &ones).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_loop_oracle() {
        for seed in 0..5 {
            let a = random_image(9, 14, seed);
            let b = random_image(9, 14, seed + 100);
            let mut peak = 0.0f64;
            let mut se = 0.0;
            for i in 0..9 {
                for j in 0..14 {
                    peak = peak.max(b.get(i, j).norm());
                    let d = a.get(i, j).norm() - b.get(i, j).norm();
                    se += d * d;
                }
            }
            let oracle = 10.0 * (peak * peak / (se / 126.0)).log10();
            assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_zero_reference_is_error() {
        let z = Image::zeros(8, 8).unwrap();
        assert!(psnr(&random_image(8, 8, 3), &z).is_err());
    }

    #[test]
    fn ssim_of_identical_is_one() {
        let a = random_image(20, 24, 4);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_negated_zero_mean_is_negative() {
        // period 8 along rows: every 8x8 window has zero mean
        let x: Vec<f64> = (0..400)
            .map(|k| {
                let (i, j) = ((k / 20) as f64, (k % 20) as f64);
                (std::f64::consts::PI * (i + 0.3 * j) / 4.0).cos() * (1.0 + 0.2 * (0.7 * j).sin())
            })
            .collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(ssim_real(&neg, &x, 20, 20).unwrap() < 0.0);
    }

    #[test]
    fn ssim_orders_blur_between_noise_and_identity() {
        let (nx, ny) = (64, 64);
        let p = make_phantom(&PhantomSpec::cardiac(nx, ny)).unwrap();
        let mag = p.magnitude();
        let blurred = gaussian_blur(&mag, nx, ny, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noisy: Vec<f64> = mag
            .iter()
            .map(|v| v + rng.random_range(-0.5..0.5))
            .collect();
        let s_blur = ssim_real(&blurred, &mag, nx, ny).unwrap();
        let s_noise = ssim_real(&noisy, &mag, nx, ny).unwrap();
        assert!(
            s_noise < s_blur && s_blur < 1.0,
            "noise {s_noise} blur {s_blur}"
        );
    }

    #[test]
    fn ssim_matches_direct_window_loop() {
        let (nx, ny) = (11, 13);
        let a = random_image(nx, ny, 7).magnitude();
        let b = random_image(nx, ny, 8).magnitude();
        let l = b.iter().cloned().fold(0.0, f64::max);
        let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..=nx - 8 {
            for j in 0..=ny - 8 {
                let px: Vec<f64> = (0..64).map(|k| a[(i + k / 8) * ny + j + k % 8]).collect();
                let py: Vec<f64> = (0..64).map(|k| b[(i + k / 8) * ny + j + k % 8]).collect();
                let mx = px.iter().sum::<f64>() / 64.0;
                let my = py.iter().sum::<f64>() / 64.0;
                let vx = px.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 63.0;
                let vy = py.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 63.0;
                let cxy = px
                    .iter()
                    .zip(&py)
                    .map(|(x, y)| (x - mx) * (y - my))
                    .sum::<f64>()
                    / 63.0;
                total += (2.0 * mx * my + c1) * (2.0 * cxy + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        assert!((ssim_real(&a, &b, nx, ny).unwrap() - total / count).abs() < 1e-12);
    }

    #[test]
    fn constant_image_gives_constant_profile() {
        let img = Image::from_real(16, 16, &[2.5; 256]).unwrap();
        let spec = ProfileSpec {
            start: (1.0, 2.0),
            end: (14.0, 11.5),
            n_samples: 33,
        };
        let prof = line_profile(&img, &spec).unwrap();
        assert_eq!(prof.len(), 33);
        assert!(prof.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn profile_across_step_edge_is_localized() {
        let (nx, ny) = (16, 32);
        let vals: Vec<f64> = (0..nx * ny)
            .map(|k| if k % ny >= 16 { 1.0 } else { 0.0 })
            .collect();
        let img = Image::from_real(nx, ny, &vals).unwrap();
        let spec = ProfileSpec {
            start: (8.0, 0.0),
            end: (8.0, 31.0),
            n_samples: 32,
        };
        let prof = line_profile(&img, &spec).unwrap();
        assert!(prof.windows(2).all(|w| w[1] >= w[0]));
        let transition = prof.iter().filter(|&&v| v > 0.0 && v < 1.0).count();
        assert!(transition <= 2);
    }

    #[test]
    fn profile_rejects_outside_endpoints_and_short_counts() {
        let img = Image::zeros(8, 8).unwrap();
        let bad = ProfileSpec {
            start: (0.0, 0.0),
            end: (8.5, 3.0),
            n_samples: 5,
        };
        assert!(line_profile(&img, &bad).is_err());
        let short = ProfileSpec {
            start: (0.0, 0.0),
            end: (3.0, 3.0),
            n_samples: 1,
        };
        assert!(line_profile(&img, &short).is_err());
    }

    #[test]
    fn correlation_examples() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let c = signal_correlation(&a, &a).unwrap();
        assert!((c.pearson_r - 1.0).abs() < 1e-15 && (c.r_squared - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let c = signal_correlation(&a, &neg).unwrap();
        assert!((c.pearson_r + 1.0).abs() < 1e-15 && (c.r_squared - 1.0).abs() < 1e-15);
        // means 2 and 7/3; sab = 3, saa = 2, sbb = 14/3
        let c = signal_correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let hand = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        assert!((c.pearson_r - hand).abs() < 1e-12);
        assert!(signal_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(signal_correlation(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn ssim_is_bounded(seed in 0u64..500) {
            let a = random_image(12, 12, seed).magnitude();
            let b = random_image(12, 12, seed + 1).magnitude();
            let s = ssim_real(&a, &b, 12, 12).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }

        #[test]
        fn psnr_is_reference_anchored(seed in 0u64..500, scale in 0.5f64..2.0) {
            // scaling the test image changes the score, scaling both leaves it alone
            let a = random_image(8, 8, seed);
            let b = random_image(8, 8, seed + 7);
            let p = psnr(&a, &b).unwrap();
            let q = psnr(&a.scaled(scale), &b.scaled(scale)).unwrap();
            prop_assert!((p - q).abs() < 1e-9);
        }
    }
}
