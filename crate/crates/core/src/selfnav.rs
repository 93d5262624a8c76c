//! Respiratory self-navigation from the fully sampled k-space center and
//! equal-count binning of shots into motion states.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{Image, KSpaceData, C64};
use crate::operators::fft2c_inplace;

/// One respiratory surrogate value per shot, zero-mean, first nonzero entry positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RespiratorySignal {
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinAssignment {
    pub bin_of_shot: Vec<usize>,
    pub n_bins: usize,
    pub reference_bin: usize,
}

impl BinAssignment {
    pub fn new(bin_of_shot: Vec<usize>, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || bin_of_shot.iter().any(|&b| b >= n_bins) {
            return Err(Error::InvalidArgument("bin index out of range".into()));
        }
        let mut counts = vec![0usize; n_bins];
        for &b in &bin_of_shot {
            counts[b] += 1;
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "every bin must hold at least one shot".into(),
            ));
        }
        // first maximum wins ties
        let reference_bin = counts
            .iter()
            .enumerate()
            .fold(
                (0, 0),
                |best, (b, &c)| if c > best.1 { (b, c) } else { best },
            )
            .0;
        Ok(Self {
            bin_of_shot,
            n_bins,
            reference_bin,
        })
    }

    /// Every shot in its own bin.
    pub fn one_per_shot(n_shots: usize) -> Result<Self> {
        Self::new((0..n_shots).collect(), n_shots)
    }

    /// All shots in bin 0.
    pub fn single(n_shots: usize) -> Result<Self> {
        Self::new(vec![0; n_shots], 1)
    }

    pub fn n_shots(&self) -> usize {
        self.bin_of_shot.len()
    }

    pub fn shots_in_bin(&self, bin: usize) -> Vec<usize> {
        (0..self.bin_of_shot.len())
            .filter(|&s| self.bin_of_shot[s] == bin)
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.n_bins)
            .map(|b| self.shots_in_bin(b).len())
            .collect()
    }
}

/// Raised-cosine weights over a truncated block of `n` lines (peak 1 in the middle).
fn line_window(n: usize, nx: usize) -> Vec<f64> {
    if n == nx {
        // nothing truncated, nothing to taper
        return vec![1.0; n];
    }
    let mid = (n as f64 - 1.0) / 2.0;
    let half = (n as f64 + 1.0) / 2.0;
    (0..n)
        .map(|k| 0.5 * (1.0 + (PI * (k as f64 - mid) / half).cos()))
        .collect()
}

/// Low-resolution root-sum-of-squares magnitude image of every shot, built
/// from its centered block of `n_center_lines`.
pub fn navigator_images(ks: &KSpaceData, n_center_lines: usize) -> Result<Vec<Image>> {
    let (nx, ny) = (ks.nx(), ks.ny());
    if n_center_lines == 0 || n_center_lines > nx {
        return Err(Error::InvalidArgument(format!(
            "n_center_lines = {n_center_lines} for nx = {nx}"
        )));
    }
    let start = (nx - n_center_lines) / 2;
    let window = line_window(n_center_lines, nx);
    let mut out = Vec::with_capacity(ks.n_shots());
    let mut buf = vec![C64::new(0.0, 0.0); nx * ny];
    for s in 0..ks.n_shots() {
        let lines = ks.lines(s);
        let positions: Vec<usize> = (start..start + n_center_lines)
            .map(|l| {
                lines.binary_search(&l).map_err(|_| {
                    Error::InvalidArgument(format!("shot {s} is missing center line {l}"))
                })
            })
            .collect::<Result<_>>()?;
        let mut sos = vec![0.0; nx * ny];
        for c in 0..ks.n_coils() {
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for (k, &pos) in positions.iter().enumerate() {
                let l = start + k;
                for (b, v) in buf[l * ny..(l + 1) * ny].iter_mut().zip(ks.line(s, c, pos)) {
                    *b = v * window[k];
                }
            }
            fft2c_inplace(&mut buf, nx, ny, rustfft::FftDirection::Inverse);
            for (acc, v) in sos.iter_mut().zip(&buf) {
                *acc += v.norm_sqr();
            }
        }
        out.push(Image::from_raw(
            nx,
            ny,
            sos.into_iter().map(|v| C64::new(v.sqrt(), 0.0)).collect(),
        ));
    }
    Ok(out)
}

/// Temporal coefficients of the first principal component of the
/// mean-subtracted navigator stack (pixels x shots).
pub fn extract_signal(navs: &[Image]) -> Result<RespiratorySignal> {
    let n = navs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "self-navigation needs at least two shots".into(),
        ));
    }
    let dims = navs[0].dims();
    if navs.iter().any(|im| im.dims() != dims) {
        return Err(Error::ShapeMismatch(
            "navigator images differ in size".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = navs.iter().map(|im| im.magnitude()).collect();
    let npix = columns[0].len();
    let energy: f64 = columns.iter().flatten().map(|v| v * v).sum();
    let mut mean = vec![0.0; npix];
    for col in &columns {
        for (m, v) in mean.iter_mut().zip(col) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|col| col.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    // shots x shots Gram matrix shares the right-singular vectors of the stack
    let gram = DMatrix::from_fn(n, n, |a, b| {
        centered[a]
            .iter()
            .zip(&centered[b])
            .map(|(x, y)| x * y)
            .sum::<f64>()
    });
    let eig = SymmetricEigen::new(gram);
    let (top, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("n >= 2");
    if !(lambda > 1e-20 * energy) {
        return Ok(RespiratorySignal {
            values: vec![0.0; n],
        });
    }
    let v = eig.eigenvectors.column(top);
    let sigma = lambda.sqrt();
    let mut values: Vec<f64> = v.iter().map(|x| x * sigma).collect();
    let peak = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = values.iter().find(|x| x.abs() > 1e-9 * peak) {
        if *first < 0.0 {
            values.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(RespiratorySignal { values })
}

/// Equal-count (quantile) binning on signal amplitude; ties by shot index.
pub fn bin_shots(signal: &RespiratorySignal, n_bins: usize) -> Result<BinAssignment> {
    let n = signal.values.len();
    if n_bins == 0 || n_bins > n {
        return Err(Error::InvalidArgument(format!(
            "{n_bins} bins for {n} shots"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        signal.values[a]
            .total_cmp(&signal.values[b])
            .then(a.cmp(&b))
    });
    let mut bins = vec![0; n];
    for (rank, &shot) in order.iter().enumerate() {
        bins[shot] = rank * n_bins / n;
    }
    BinAssignment::new(bins, n_bins)
}
