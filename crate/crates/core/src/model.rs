//! Shared data types: images, k-space data, masks, coil maps, displacement
//! fields and the acquisition / reconstruction parameter sets.
//!
//! Layout conventions used everywhere in the crate:
//! - images are row-major, `nx` rows by `ny` columns;
//! - the phase-encode (undersampled) direction runs along the rows, so one
//!   k-space "line" is one row of `ny` readout samples;
//! - displacement fields use the pull convention `warped(x) = source(x + u(x))`,
//!   with `ux` along rows and `uy` along columns.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Anything that can be viewed as a flat complex vector with a shape.
pub trait ComplexArray {
    /// Shape descriptor; two arrays are compatible when their keys are equal.
    fn shape_key(&self) -> Vec<usize>;
    fn values(&self) -> &[C64];
}

impl ComplexArray for [C64] {
    fn shape_key(&self) -> Vec<usize> {
        vec![self.len()]
    }
    fn values(&self) -> &[C64] {
        self
    }
}

impl ComplexArray for Vec<C64> {
    fn shape_key(&self) -> Vec<usize> {
        vec![self.len()]
    }
    fn values(&self) -> &[C64] {
        self
    }
}

/// `<a, b> = sum(conj(a) * b)`, conjugate-linear in `a`.
pub fn inner_product<T: ComplexArray + ?Sized>(a: &T, b: &T) -> Result<C64> {
    if a.shape_key() != b.shape_key() {
        return Err(Error::ShapeMismatch(format!(
            "inner product of {:?} and {:?}",
            a.shape_key(),
            b.shape_key()
        )));
    }
    Ok(cdot(a.values(), b.values()))
}

pub(crate) fn cdot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// `y += alpha * x`
pub(crate) fn axpy(y: &mut [C64], alpha: f64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * alpha;
    }
}

fn check_dims(nx: usize, ny: usize) -> Result<()> {
    if nx < Image::MIN_DIM || ny < Image::MIN_DIM {
        return Err(Error::InvalidArgument(format!(
            "grid {nx}x{ny} is smaller than the minimum {0}x{0}",
            Image::MIN_DIM
        )));
    }
    Ok(())
}

fn all_finite(data: &[C64]) -> bool {
    data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Complex 2-D image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    nx: usize,
    ny: usize,
    data: Vec<C64>,
}

impl Image {
    pub const MIN_DIM: usize = 8;

    pub fn zeros(nx: usize, ny: usize) -> Result<Self> {
        check_dims(nx, ny)?;
        Ok(Self {
            nx,
            ny,
            data: vec![C64::new(0.0, 0.0); nx * ny],
        })
    }

    pub fn from_vec(nx: usize, ny: usize, data: Vec<C64>) -> Result<Self> {
        check_dims(nx, ny)?;
        if data.len() != nx * ny {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {nx}x{ny} image",
                data.len()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::InvalidArgument(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn from_real(nx: usize, ny: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(nx, ny, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        let mut data = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                data.push(f(i, j));
            }
        }
        Self::from_vec(nx, ny, data)
    }

    /// Internal constructor for buffers produced by the crate's own operators.
    pub(crate) fn from_raw(nx: usize, ny: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), nx * ny);
        Self { nx, ny, data }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    #[cfg(test)]
    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.ny + j]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    /// Real image holding `|self|`.
    pub fn abs(&self) -> Image {
        Image::from_raw(
            self.nx,
            self.ny,
            self.data.iter().map(|v| C64::new(v.norm(), 0.0)).collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.data).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image::from_raw(
            self.nx,
            self.ny,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }
}

impl ComplexArray for Image {
    fn shape_key(&self) -> Vec<usize> {
        vec![self.nx, self.ny]
    }
    fn values(&self) -> &[C64] {
        &self.data
    }
}

/// Multi-shot, multi-coil Cartesian k-space samples.
///
/// Samples are stored shot-major, then coil, then sampled line, then readout column.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    nx: usize,
    ny: usize,
    n_coils: usize,
    lines: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    samples: Vec<C64>,
}

impl KSpaceData {
    pub fn zeros(nx: usize, ny: usize, n_coils: usize, lines: Vec<Vec<usize>>) -> Result<Self> {
        let total = Self::layout(nx, ny, n_coils, &lines)?.1;
        Self::new(nx, ny, n_coils, lines, vec![C64::new(0.0, 0.0); total])
    }

    pub fn new(
        nx: usize,
        ny: usize,
        n_coils: usize,
        lines: Vec<Vec<usize>>,
        samples: Vec<C64>,
    ) -> Result<Self> {
        let (offsets, total) = Self::layout(nx, ny, n_coils, &lines)?;
        if samples.len() != total {
            return Err(Error::ShapeMismatch(format!(
                "{} samples, layout needs {total}",
                samples.len()
            )));
        }
        Ok(Self {
            nx,
            ny,
            n_coils,
            lines,
            offsets,
            samples,
        })
    }

    fn layout(
        nx: usize,
        ny: usize,
        n_coils: usize,
        lines: &[Vec<usize>],
    ) -> Result<(Vec<usize>, usize)> {
        check_dims(nx, ny)?;
        if n_coils == 0 {
            return Err(Error::InvalidArgument(
                "k-space needs at least one coil".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(lines.len());
        let mut total = 0;
        for (s, shot) in lines.iter().enumerate() {
            if shot.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "shot {s}: line indices must be unique and sorted"
                )));
            }
            if shot.last().is_some_and(|&l| l >= nx) {
                return Err(Error::InvalidArgument(format!(
                    "shot {s}: line index out of range for nx={nx}"
                )));
            }
            offsets.push(total);
            total += n_coils * shot.len() * ny;
        }
        Ok((offsets, total))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn n_coils(&self) -> usize {
        self.n_coils
    }
    pub fn n_shots(&self) -> usize {
        self.lines.len()
    }
    pub fn lines(&self, shot: usize) -> &[usize] {
        &self.lines[shot]
    }
    pub fn all_lines(&self) -> &[Vec<usize>] {
        &self.lines
    }
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }
    pub(crate) fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn shot_samples(&self, shot: usize) -> &[C64] {
        let start = self.offsets[shot];
        &self.samples[start..start + self.n_coils * self.lines[shot].len() * self.ny]
    }

    pub(crate) fn shot_samples_mut(&mut self, shot: usize) -> &mut [C64] {
        let start = self.offsets[shot];
        let len = self.n_coils * self.lines[shot].len() * self.ny;
        &mut self.samples[start..start + len]
    }

    /// One readout line of one coil in one shot.
    pub fn line(&self, shot: usize, coil: usize, line_pos: usize) -> &[C64] {
        let n = self.lines[shot].len();
        let start = (coil * n + line_pos) * self.ny;
        &self.shot_samples(shot)[start..start + self.ny]
    }

    pub fn mask(&self, shot: usize) -> Result<SamplingMask> {
        SamplingMask::from_lines(self.nx, &self.lines[shot])
    }

    /// New dataset holding the listed shots in the listed order.
    pub fn select_shots(&self, shots: &[usize]) -> Result<KSpaceData> {
        let mut lines = Vec::with_capacity(shots.len());
        let mut samples = Vec::new();
        for &s in shots {
            if s >= self.n_shots() {
                return Err(Error::InvalidArgument(format!("shot {s} out of range")));
            }
            lines.push(self.lines[s].clone());
            samples.extend_from_slice(self.shot_samples(s));
        }
        KSpaceData::new(self.nx, self.ny, self.n_coils, lines, samples)
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.samples).sqrt()
    }

    pub fn same_layout(&self, other: &KSpaceData) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.n_coils == other.n_coils
            && self.lines == other.lines
    }
}

impl ComplexArray for KSpaceData {
    fn shape_key(&self) -> Vec<usize> {
        let mut key = vec![self.nx, self.ny, self.n_coils, self.lines.len()];
        for shot in &self.lines {
            key.push(usize::MAX);
            key.extend_from_slice(shot);
        }
        key
    }
    fn values(&self) -> &[C64] {
        &self.samples
    }
}

/// Phase-encode line selection; the readout direction is always fully sampled.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SamplingMask {
    lines: Vec<bool>,
}

impl SamplingMask {
    pub fn from_bools(lines: Vec<bool>) -> Result<Self> {
        if !lines.iter().any(|&b| b) {
            return Err(Error::InvalidArgument("sampling mask has no lines".into()));
        }
        Ok(Self { lines })
    }

    pub fn from_lines(nx: usize, indices: &[usize]) -> Result<Self> {
        let mut lines = vec![false; nx];
        for &l in indices {
            if l >= nx {
                return Err(Error::InvalidArgument(format!(
                    "line {l} out of range for nx={nx}"
                )));
            }
            lines[l] = true;
        }
        Self::from_bools(lines)
    }

    pub fn full(nx: usize) -> Self {
        Self {
            lines: vec![true; nx],
        }
    }

    pub fn nx(&self) -> usize {
        self.lines.len()
    }
    pub fn is_set(&self, line: usize) -> bool {
        self.lines[line]
    }
    pub fn as_bools(&self) -> &[bool] {
        &self.lines
    }
    pub fn count(&self) -> usize {
        self.lines.iter().filter(|&&b| b).count()
    }
    pub fn indices(&self) -> Vec<usize> {
        (0..self.lines.len()).filter(|&l| self.lines[l]).collect()
    }
    /// `nx / sampled lines`
    pub fn acceleration(&self) -> f64 {
        self.nx() as f64 / self.count() as f64
    }
}

/// Complex receive sensitivities, one `nx x ny` map per coil, coil-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps {
    n_coils: usize,
    nx: usize,
    ny: usize,
    maps: Vec<C64>,
}

impl CoilMaps {
    pub fn new(n_coils: usize, nx: usize, ny: usize, maps: Vec<C64>) -> Result<Self> {
        check_dims(nx, ny)?;
        if n_coils == 0 || maps.len() != n_coils * nx * ny {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n_coils} coil maps of {nx}x{ny}",
                maps.len()
            )));
        }
        if !all_finite(&maps) {
            return Err(Error::InvalidArgument(
                "coil maps contain non-finite values".into(),
            ));
        }
        Ok(Self {
            n_coils,
            nx,
            ny,
            maps,
        })
    }

    /// A single coil with unit sensitivity everywhere.
    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new(1, nx, ny, vec![C64::new(1.0, 0.0); nx * ny])
    }

    pub fn n_coils(&self) -> usize {
        self.n_coils
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn map(&self, coil: usize) -> &[C64] {
        let n = self.nx * self.ny;
        &self.maps[coil * n..(coil + 1) * n]
    }
    pub fn all(&self) -> &[C64] {
        &self.maps
    }

    /// Sum over coils of squared magnitudes, per pixel.
    pub fn sos(&self) -> Vec<f64> {
        let n = self.nx * self.ny;
        let mut out = vec![0.0; n];
        for c in 0..self.n_coils {
            for (o, v) in out.iter_mut().zip(self.map(c)) {
                *o += v.norm_sqr();
            }
        }
        out
    }
}

/// Dense pixel-unit displacement field (pull convention).
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    nx: usize,
    ny: usize,
    pub(crate) ux: Vec<f64>,
    pub(crate) uy: Vec<f64>,
}

impl DisplacementField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            ux: vec![0.0; nx * ny],
            uy: vec![0.0; nx * ny],
        }
    }

    pub fn new(nx: usize, ny: usize, ux: Vec<f64>, uy: Vec<f64>) -> Result<Self> {
        if ux.len() != nx * ny || uy.len() != nx * ny {
            return Err(Error::ShapeMismatch(format!(
                "field components of length {}/{} for {nx}x{ny}",
                ux.len(),
                uy.len()
            )));
        }
        if !ux.iter().chain(&uy).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "displacement field is not finite".into(),
            ));
        }
        Ok(Self { nx, ny, ux, uy })
    }

    pub fn constant(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        Self {
            nx,
            ny,
            ux: vec![dx; nx * ny],
            uy: vec![dy; nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn ux(&self) -> &[f64] {
        &self.ux
    }
    pub fn uy(&self) -> &[f64] {
        &self.uy
    }

    pub fn is_zero(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|&v| v == 0.0)
    }

    /// Largest displacement magnitude.
    pub fn max_norm(&self) -> f64 {
        self.ux
            .iter()
            .zip(&self.uy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Per-pixel endpoint error `|self - other|`.
    pub fn endpoint_errors(&self, other: &DisplacementField) -> Result<Vec<f64>> {
        if (self.nx, self.ny) != (other.nx, other.ny) {
            return Err(Error::ShapeMismatch(
                "displacement fields differ in size".into(),
            ));
        }
        Ok(self
            .ux
            .iter()
            .zip(&self.uy)
            .zip(other.ux.iter().zip(&other.uy))
            .map(|((a, b), (c, d))| (a - c).hypot(b - d))
            .collect())
    }
}

fn default_golden_fraction() -> f64 {
    0.618
}

/// Acquisition layout and simulation noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub nx: usize,
    pub ny: usize,
    pub n_coils: usize,
    pub n_shots: usize,
    pub n_center_lines: usize,
    pub n_periphery_lines_per_shot: usize,
    pub n_bins: usize,
    pub noise_std: f64,
    #[serde(default = "default_golden_fraction")]
    pub golden_fraction: f64,
}

impl Default for AcquisitionConfig {
    /// Desk-scale analogue of the first simulation protocol: 192x256,
    /// 4 shots of 32 center + 48 periphery lines, 8 coils.
    fn default() -> Self {
        Self {
            nx: 192,
            ny: 256,
            n_coils: 8,
            n_shots: 4,
            n_center_lines: 32,
            n_periphery_lines_per_shot: 48,
            n_bins: 4,
            noise_std: 0.005,
            golden_fraction: default_golden_fraction(),
        }
    }
}

impl AcquisitionConfig {
    /// Every violated invariant, with a message. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.nx < Image::MIN_DIM || self.ny < Image::MIN_DIM {
            v.push(format!(
                "grid {}x{} is smaller than {}x{}",
                self.nx,
                self.ny,
                Image::MIN_DIM,
                Image::MIN_DIM
            ));
        }
        if self.n_coils == 0 {
            v.push("n_coils must be at least 1".into());
        }
        if self.n_shots == 0 {
            v.push("n_shots must be at least 1".into());
        }
        if self.n_center_lines == 0 {
            v.push("n_center_lines must be at least 1".into());
        }
        if self.n_center_lines + self.n_periphery_lines_per_shot > self.nx {
            v.push(format!(
                "n_center_lines + n_periphery_lines_per_shot = {} exceeds nx = {}",
                self.n_center_lines + self.n_periphery_lines_per_shot,
                self.nx
            ));
        }
        if self.n_bins == 0 || self.n_bins > self.n_shots {
            v.push(format!(
                "n_bins = {} must be in [1, n_shots = {}]",
                self.n_bins, self.n_shots
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            v.push(format!(
                "noise_std = {} must be finite and >= 0",
                self.noise_std
            ));
        }
        if !(self.golden_fraction > 0.0 && self.golden_fraction < 1.0) {
            v.push(format!(
                "golden_fraction = {} must lie in (0, 1)",
                self.golden_fraction
            ));
        }
        v
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    pub fn lines_per_shot(&self) -> usize {
        self.n_center_lines + self.n_periphery_lines_per_shot
    }

    /// `nx / (center + periphery)`
    pub fn per_shot_acceleration(&self) -> f64 {
        self.nx as f64 / self.lines_per_shot() as f64
    }

    /// Acceleration of the peripheral region alone.
    pub fn periphery_acceleration(&self) -> f64 {
        (self.nx - self.n_center_lines) as f64 / self.n_periphery_lines_per_shot as f64
    }

    /// First line of the centered fully sampled block.
    pub fn center_start(&self) -> usize {
        (self.nx - self.n_center_lines) / 2
    }
}

fn default_lambda_scale() -> f64 {
    DEFAULT_LAMBDA_SCALE
}

/// Factor of the data-driven weight `lambda = scale * max|E^H s|`.
pub const DEFAULT_LAMBDA_SCALE: f64 = 1e-4;

fn default_step_safety() -> f64 {
    0.99
}

/// Parameters of the primal-dual Beltrami solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconParams {
    /// Regularization weight; `None` selects `lambda_scale * max|E^H s|` at solve time.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    pub beta: f64,
    pub max_iters: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
    #[serde(default = "default_step_safety")]
    pub step_safety: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            lambda: None,
            lambda_scale: default_lambda_scale(),
            beta: 25.0,
            max_iters: 1000,
            tol: 1e-9,
            step_safety: default_step_safety(),
        }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                v.push(format!("lambda = {l} must be > 0"));
            }
        }
        if !(self.lambda_scale.is_finite() && self.lambda_scale > 0.0) {
            v.push(format!("lambda_scale = {} must be > 0", self.lambda_scale));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            v.push(format!("beta = {} must be > 0", self.beta));
        }
        if self.max_iters == 0 {
            v.push("max_iters must be at least 1".into());
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            v.push(format!("tol = {} must lie in (0, 1)", self.tol));
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            v.push(format!(
                "step_safety = {} must lie in (0, 1)",
                self.step_safety
            ));
        }
        v
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inner_product_of_ones() {
        let a = vec![c(1.0, 0.0); 4];
        assert_eq!(inner_product(&a, &a).unwrap(), c(4.0, 0.0));
    }

    #[test]
    fn inner_product_with_zero_image() {
        let z = Image::zeros(8, 8).unwrap();
        let b = Image::from_fn(8, 8, |i, j| c(i as f64, j as f64 - 3.0)).unwrap();
        assert_eq!(inner_product(&z, &b).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn inner_product_shape_mismatch() {
        let a = Image::zeros(8, 8).unwrap();
        let b = Image::zeros(8, 9).unwrap();
        assert!(matches!(
            inner_product(&a, &b),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn image_rejects_small_and_nonfinite() {
        assert!(Image::zeros(4, 8).is_err());
        let mut v = vec![c(0.0, 0.0); 64];
        v[3] = c(f64::NAN, 0.0);
        assert!(Image::from_vec(8, 8, v).is_err());
    }

    #[test]
    fn table_one_accelerations() {
        let sim1 = AcquisitionConfig::default();
        assert!(sim1.validate().is_empty());
        assert_eq!(sim1.per_shot_acceleration(), 2.4);
        let in_vivo = AcquisitionConfig {
            n_shots: 15,
            n_center_lines: 17,
            n_periphery_lines_per_shot: 43,
            n_bins: 5,
            ..AcquisitionConfig::default()
        };
        assert!(in_vivo.validate().is_empty());
        assert!((in_vivo.per_shot_acceleration() - 3.2).abs() < 1e-12);
    }

    #[test]
    fn config_violations_are_reported() {
        let bad = AcquisitionConfig {
            n_center_lines: 150,
            n_periphery_lines_per_shot: 48,
            n_bins: 9,
            golden_fraction: 1.5,
            ..AcquisitionConfig::default()
        };
        let v = bad.validate();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].contains("exceeds nx"));
    }

    #[test]
    fn kspace_rejects_unsorted_lines() {
        assert!(KSpaceData::zeros(8, 8, 1, vec![vec![3, 1]]).is_err());
        assert!(KSpaceData::zeros(8, 8, 1, vec![vec![1, 1]]).is_err());
        assert!(KSpaceData::zeros(8, 8, 1, vec![vec![8]]).is_err());
        let k = KSpaceData::zeros(8, 10, 2, vec![vec![1, 2], vec![5]]).unwrap();
        assert_eq!(k.shot_samples(0).len(), 2 * 2 * 10);
        assert_eq!(k.shot_samples(1).len(), 2 * 10);
    }

    #[test]
    fn mask_union_semantics() {
        let m = SamplingMask::from_lines(8, &[0, 4]).unwrap();
        assert_eq!(m.count(), 2);
        assert_eq!(m.acceleration(), 4.0);
        assert!(SamplingMask::from_lines(8, &[]).is_err());
    }

    fn scalar_loop(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for (&(ar, ai), &(br, bi)) in a.iter().zip(b) {
            // conj(a) * b
            re += ar * br + ai * bi;
            im += ar * bi - ai * br;
        }
        (re, im)
    }

    proptest! {
        #[test]
        fn inner_product_matches_scalar_loop(
            pairs in proptest::collection::vec(((-1.0f64..1.0, -1.0f64..1.0), (-1.0f64..1.0, -1.0f64..1.0)), 64)
        ) {
            let a: Vec<_> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<_> = pairs.iter().map(|p| p.1).collect();
            let ia = Image::from_vec(8, 8, a.iter().map(|&(r, i)| c(r, i)).collect()).unwrap();
            let ib = Image::from_vec(8, 8, b.iter().map(|&(r, i)| c(r, i)).collect()).unwrap();
            let got = inner_product(&ia, &ib).unwrap();
            let (re, im) = scalar_loop(&a, &b);
            let scale = ia.norm() * ib.norm() + 1e-300;
            prop_assert!(((got.re - re).powi(2) + (got.im - im).powi(2)).sqrt() / scale < 1e-12);
            let self_ip = inner_product(&ia, &ia).unwrap();
            prop_assert!(self_ip.re >= 0.0 && self_ip.im == 0.0);
        }
    }
}
