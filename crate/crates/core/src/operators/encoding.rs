//! Encoding chain `E(u) = mask * F * coils * W(u)` and its adjoint.
//!
//! Shots are grouped into bins that share one displacement field. Every
//! shot keeps its own mask, so a line acquired by several shots enters the
//! data term once per acquisition.

use rustfft::FftDirection;

use super::fft::fft2c_inplace;
use super::warp::WarpPlan;
use crate::error::{Error, Result};
use crate::model::{CoilMaps, DisplacementField, Image, KSpaceData, SamplingMask, C64};

/// One motion state: a displacement field (or none for identity) and the masks of its shots.
#[derive(Clone, Debug)]
pub struct EncodingBin {
    pub field: Option<DisplacementField>,
    pub masks: Vec<SamplingMask>,
}

#[derive(Clone, Debug)]
struct PreparedBin {
    warp: Option<WarpPlan>,
    lines: Vec<Vec<usize>>,
    multiplicity: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EncodingOperator {
    coils: CoilMaps,
    bins: Vec<PreparedBin>,
    out_lines: Vec<Vec<usize>>,
}

impl EncodingOperator {
    pub fn new(coils: CoilMaps, bins: Vec<EncodingBin>) -> Result<Self> {
        let (nx, ny) = (coils.nx(), coils.ny());
        if bins.is_empty() {
            return Err(Error::InvalidArgument(
                "encoding operator needs at least one bin".into(),
            ));
        }
        let mut prepared = Vec::with_capacity(bins.len());
        let mut out_lines = Vec::new();
        for (b, bin) in bins.into_iter().enumerate() {
            if bin.masks.is_empty() {
                return Err(Error::InvalidArgument(format!("bin {b} has no shots")));
            }
            let mut multiplicity = vec![0.0; nx];
            let mut lines = Vec::with_capacity(bin.masks.len());
            for m in &bin.masks {
                if m.nx() != nx {
                    return Err(Error::ShapeMismatch(format!(
                        "bin {b}: mask with nx={} for coils with nx={nx}",
                        m.nx()
                    )));
                }
                let idx = m.indices();
                for &l in &idx {
                    multiplicity[l] += 1.0;
                }
                lines.push(idx);
            }
            let warp = match bin.field {
                Some(f) => {
                    if (f.nx(), f.ny()) != (nx, ny) {
                        return Err(Error::ShapeMismatch(format!("bin {b}: field size")));
                    }
                    (!f.is_zero()).then(|| WarpPlan::new(&f))
                }
                None => None,
            };
            out_lines.extend(lines.iter().cloned());
            prepared.push(PreparedBin {
                warp,
                lines,
                multiplicity,
            });
        }
        Ok(Self {
            coils,
            bins: prepared,
            out_lines,
        })
    }

    /// Identity motion, all shots in a single bin.
    pub fn without_motion(coils: CoilMaps, masks: Vec<SamplingMask>) -> Result<Self> {
        Self::new(coils, vec![EncodingBin { field: None, masks }])
    }

    pub fn nx(&self) -> usize {
        self.coils.nx()
    }
    pub fn ny(&self) -> usize {
        self.coils.ny()
    }
    pub fn coils(&self) -> &CoilMaps {
        &self.coils
    }
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }
    pub fn motion_enabled(&self) -> bool {
        self.bins.iter().any(|b| b.warp.is_some())
    }

    /// Line lists of the k-space produced by [`encode`](Self::encode): bin-major, then shot.
    pub fn output_lines(&self) -> &[Vec<usize>] {
        &self.out_lines
    }

    pub fn zero_kspace(&self) -> KSpaceData {
        KSpaceData::zeros(
            self.nx(),
            self.ny(),
            self.coils.n_coils(),
            self.out_lines.clone(),
        )
        .expect("layout validated at construction")
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.dims() != (self.nx(), self.ny()) {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} for operator {:?}",
                img.dims(),
                (self.nx(), self.ny())
            )));
        }
        Ok(())
    }

    fn warped(&self, bin: &PreparedBin, x: &[C64]) -> Vec<C64> {
        match &bin.warp {
            Some(plan) => {
                let mut out = vec![C64::new(0.0, 0.0); x.len()];
                plan.apply_slice(x, &mut out);
                out
            }
            None => x.to_vec(),
        }
    }

    pub fn encode(&self, img: &Image) -> Result<KSpaceData> {
        self.check_image(img)?;
        let mut ks = self.zero_kspace();
        self.encode_into(img.data(), &mut ks);
        Ok(ks)
    }

    pub(crate) fn encode_into(&self, x: &[C64], ks: &mut KSpaceData) {
        let (nx, ny) = (self.nx(), self.ny());
        let mut buf = vec![C64::new(0.0, 0.0); nx * ny];
        let mut shot0 = 0;
        for bin in &self.bins {
            let w = self.warped(bin, x);
            for c in 0..self.coils.n_coils() {
                for ((b, s), v) in buf.iter_mut().zip(self.coils.map(c)).zip(&w) {
                    *b = s * v;
                }
                fft2c_inplace(&mut buf, nx, ny, FftDirection::Forward);
                for (k, lines) in bin.lines.iter().enumerate() {
                    let n = lines.len();
                    let dst = ks.shot_samples_mut(shot0 + k);
                    for (pos, &l) in lines.iter().enumerate() {
                        let start = (c * n + pos) * ny;
                        dst[start..start + ny].copy_from_slice(&buf[l * ny..(l + 1) * ny]);
                    }
                }
            }
            shot0 += bin.lines.len();
        }
    }

    pub fn encode_adjoint(&self, ks: &KSpaceData) -> Result<Image> {
        if ks.nx() != self.nx()
            || ks.ny() != self.ny()
            || ks.n_coils() != self.coils.n_coils()
            || ks.all_lines() != self.out_lines.as_slice()
        {
            return Err(Error::ShapeMismatch(
                "k-space layout does not match the encoding operator".into(),
            ));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.nx() * self.ny()];
        self.adjoint_into(ks, &mut out);
        Ok(Image::from_raw(self.nx(), self.ny(), out))
    }

    pub(crate) fn adjoint_into(&self, ks: &KSpaceData, out: &mut [C64]) {
        let (nx, ny) = (self.nx(), self.ny());
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        let mut buf = vec![C64::new(0.0, 0.0); nx * ny];
        let mut acc = vec![C64::new(0.0, 0.0); nx * ny];
        let mut shot0 = 0;
        for bin in &self.bins {
            acc.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for c in 0..self.coils.n_coils() {
                buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for (k, lines) in bin.lines.iter().enumerate() {
                    let n = lines.len();
                    let src = ks.shot_samples(shot0 + k);
                    for (pos, &l) in lines.iter().enumerate() {
                        let start = (c * n + pos) * ny;
                        for (b, v) in buf[l * ny..(l + 1) * ny]
                            .iter_mut()
                            .zip(&src[start..start + ny])
                        {
                            *b += v;
                        }
                    }
                }
                fft2c_inplace(&mut buf, nx, ny, FftDirection::Inverse);
                for ((a, s), v) in acc.iter_mut().zip(self.coils.map(c)).zip(&buf) {
                    *a += s.conj() * v;
                }
            }
            self.add_unwarped(bin, &acc, out, &mut buf);
            shot0 += bin.lines.len();
        }
    }

    fn add_unwarped(&self, bin: &PreparedBin, acc: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        match &bin.warp {
            Some(plan) => {
                plan.adjoint_slice(acc, scratch);
                for (o, v) in out.iter_mut().zip(scratch.iter()) {
                    *o += v;
                }
            }
            None => {
                for (o, v) in out.iter_mut().zip(acc) {
                    *o += v;
                }
            }
        }
    }

    /// `E^H E x` without materializing k-space.
    pub fn normal(&self, img: &Image) -> Result<Image> {
        self.check_image(img)?;
        let mut out = vec![C64::new(0.0, 0.0); img.len()];
        self.normal_into(img.data(), &mut out);
        Ok(Image::from_raw(self.nx(), self.ny(), out))
    }

    pub(crate) fn normal_into(&self, x: &[C64], out: &mut [C64]) {
        let (nx, ny) = (self.nx(), self.ny());
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        let mut buf = vec![C64::new(0.0, 0.0); nx * ny];
        let mut acc = vec![C64::new(0.0, 0.0); nx * ny];
        for bin in &self.bins {
            let w = self.warped(bin, x);
            acc.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for c in 0..self.coils.n_coils() {
                let map = self.coils.map(c);
                for ((b, s), v) in buf.iter_mut().zip(map).zip(&w) {
                    *b = s * v;
                }
                fft2c_inplace(&mut buf, nx, ny, FftDirection::Forward);
                for (l, &m) in bin.multiplicity.iter().enumerate() {
                    for v in &mut buf[l * ny..(l + 1) * ny] {
                        *v *= m;
                    }
                }
                fft2c_inplace(&mut buf, nx, ny, FftDirection::Inverse);
                for ((a, s), v) in acc.iter_mut().zip(map).zip(&buf) {
                    *a += s.conj() * v;
                }
            }
            self.add_unwarped(bin, &acc, out, &mut buf);
        }
    }
}
