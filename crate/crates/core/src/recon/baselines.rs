//! Comparison reconstructions: pooled sum-of-squares, zero-filled SENSE
//! combination, and register-then-average of per-bin reconstructions.

use crate::error::{Error, Result};
use crate::model::{CoilMaps, Image, KSpaceData, ReconParams, C64};
use crate::operators::{ifft2c, warp_real};
use crate::registration::{register, RegistrationParams};
use crate::selfnav::BinAssignment;

use super::{check_coils, solve_bsense, SolveReport};

/// Per-coil k-space with every sampled line averaged over the shots that
/// acquired it, zeros elsewhere.
fn pooled_coil_kspace(ks: &KSpaceData) -> Vec<Vec<C64>> {
    let (nx, ny) = (ks.nx(), ks.ny());
    let mut count = vec![0usize; nx];
    for s in 0..ks.n_shots() {
        for &l in ks.lines(s) {
            count[l] += 1;
        }
    }
    (0..ks.n_coils())
        .map(|c| {
            let mut grid = vec![C64::new(0.0, 0.0); nx * ny];
            for s in 0..ks.n_shots() {
                for (pos, &l) in ks.lines(s).iter().enumerate() {
                    for (g, v) in grid[l * ny..(l + 1) * ny]
                        .iter_mut()
                        .zip(ks.line(s, c, pos))
                    {
                        *g += v;
                    }
                }
            }
            for (l, &n) in count.iter().enumerate() {
                if n > 1 {
                    let inv = 1.0 / n as f64;
                    grid[l * ny..(l + 1) * ny]
                        .iter_mut()
                        .for_each(|v| *v *= inv);
                }
            }
            grid
        })
        .collect()
}

fn coil_images(ks: &KSpaceData) -> Vec<Image> {
    pooled_coil_kspace(ks)
        .into_iter()
        .map(|grid| ifft2c(&Image::from_raw(ks.nx(), ks.ny(), grid)))
        .collect()
}

/// Root-sum-of-squares of the zero-filled coil images, all shots pooled
/// with duplicate lines averaged. No motion handling.
pub fn baseline_sos(ks_all: &KSpaceData, coils: &CoilMaps) -> Result<Image> {
    check_coils(ks_all, coils)?;
    let imgs = coil_images(ks_all);
    let n = ks_all.nx() * ks_all.ny();
    let mut out = vec![0.0; n];
    for img in &imgs {
        for (o, v) in out.iter_mut().zip(img.data()) {
            *o += v.norm_sqr();
        }
    }
    let data = out.into_iter().map(|v| C64::new(v.sqrt(), 0.0)).collect();
    Ok(Image::from_raw(ks_all.nx(), ks_all.ny(), data))
}

/// Coil-weighted combination `sum_c conj(S_c) ifft(zero-filled k_c)` of the
/// pooled data. Equals the adjoint of a single-shot encoding.
pub fn baseline_zero_filled(ks: &KSpaceData, coils: &CoilMaps) -> Result<Image> {
    check_coils(ks, coils)?;
    let imgs = coil_images(ks);
    let mut out = vec![C64::new(0.0, 0.0); ks.nx() * ks.ny()];
    for (c, img) in imgs.iter().enumerate() {
        for ((o, s), v) in out.iter_mut().zip(coils.map(c)).zip(img.data()) {
            *o += s.conj() * v;
        }
    }
    Ok(Image::from_raw(ks.nx(), ks.ny(), out))
}

/// Result of the register-then-average baseline.
#[derive(Clone, Debug)]
pub struct RraOutput {
    pub image: Image,
    pub bin_images: Vec<Image>,
    pub reports: Vec<SolveReport>,
}

/// Registers every bin magnitude onto the reference bin and averages the
/// warped magnitudes.
pub fn rra_from_bin_images(
    bin_images: &[Image],
    reference_bin: usize,
    params: &RegistrationParams,
) -> Result<Image> {
    let reference = bin_images.get(reference_bin).ok_or_else(|| {
        Error::InvalidArgument(format!("reference bin {reference_bin} out of range"))
    })?;
    let (nx, ny) = reference.dims();
    let mut acc = vec![0.0; nx * ny];
    for (b, img) in bin_images.iter().enumerate() {
        img.ensure_same_shape(reference, "bin images")?;
        let mag = img.magnitude();
        let aligned = if b == reference_bin {
            mag
        } else {
            let u = register(img, reference, params)?;
            warp_real(&mag, &u)
        };
        for (a, v) in acc.iter_mut().zip(&aligned) {
            *a += v;
        }
    }
    let inv = 1.0 / bin_images.len() as f64;
    let data = acc.into_iter().map(|v| C64::new(v * inv, 0.0)).collect();
    Ok(Image::from_raw(nx, ny, data))
}

/// Per-bin Beltrami SENSE, then register-and-average.
pub fn baseline_rra(
    ks_all: &KSpaceData,
    coils: &CoilMaps,
    bins: &BinAssignment,
    recon: &ReconParams,
    registration: &RegistrationParams,
) -> Result<RraOutput> {
    if bins.n_shots() != ks_all.n_shots() {
        return Err(Error::ShapeMismatch(format!(
            "bin assignment covers {} shots, data has {}",
            bins.n_shots(),
            ks_all.n_shots()
        )));
    }
    let mut bin_images = Vec::with_capacity(bins.n_bins);
    let mut reports = Vec::with_capacity(bins.n_bins);
    for b in 0..bins.n_bins {
        let ks_b = ks_all.select_shots(&bins.shots_in_bin(b))?;
        let (img, rep) = solve_bsense(&ks_b, coils, recon)?;
        bin_images.push(img);
        reports.push(rep);
    }
    let image = rra_from_bin_images(&bin_images, bins.reference_bin, registration)?;
    Ok(RraOutput {
        image,
        bin_images,
        reports,
    })
}
