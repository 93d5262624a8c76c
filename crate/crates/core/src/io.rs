//! Dataset files, PNG export and the pipeline configuration.
//!
//! A dataset file is one line of JSON (the header), a `\n`, then a
//! little-endian payload of `f32` values. Complex numbers are stored as
//! interleaved `(re, im)` pairs. Payload order per kind:
//!
//! * `kspace`: shot, coil, line (as listed in `line_lists`), column
//! * `image`: shot, coil, row, column (coil maps are one shot with `n_coils` images)
//! * `field`: shot, then the `ux` plane followed by the `uy` plane
//! * `mask`: shot, then one 0/1 value per phase-encode line

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{
    AcquisitionConfig, CoilMaps, DisplacementField, Image, KSpaceData, ReconParams, SamplingMask,
    C64,
};
use crate::registration::RegistrationParams;
use crate::simulator::MotionConfig;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Kspace,
    Image,
    Field,
    Mask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C64,
    F32,
}

impl Dtype {
    fn bytes(self) -> usize {
        match self {
            Dtype::C64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u64,
    pub kind: DatasetKind,
    pub nx: usize,
    pub ny: usize,
    pub n_coils: usize,
    pub n_shots: usize,
    pub dtype: Dtype,
    #[serde(default)]
    pub line_lists: Vec<Vec<usize>>,
    #[serde(default)]
    pub provenance: Value,
}

impl DatasetHeader {
    fn payload_len(&self) -> usize {
        let per_shot = match self.kind {
            DatasetKind::Kspace => {
                // validated against n_shots beforehand
                return self.line_lists.iter().map(|l| l.len()).sum::<usize>()
                    * self.n_coils
                    * self.ny
                    * 8;
            }
            DatasetKind::Image => self.n_coils * self.nx * self.ny,
            DatasetKind::Field => 2 * self.nx * self.ny,
            DatasetKind::Mask => self.nx,
        };
        self.n_shots * per_shot * self.dtype.bytes()
    }

    fn check(&self) -> Result<()> {
        let dim = |m: String| Err(Error::DimensionMismatch(m));
        let want = match self.kind {
            DatasetKind::Kspace | DatasetKind::Image => Dtype::C64,
            DatasetKind::Field | DatasetKind::Mask => Dtype::F32,
        };
        if self.dtype != want {
            return dim(format!("{:?} data must be stored as {:?}", self.kind, want));
        }
        if self.nx == 0 || self.ny == 0 || self.n_shots == 0 || self.n_coils == 0 {
            return dim(format!(
                "empty dimensions nx={} ny={} n_coils={} n_shots={}",
                self.nx, self.ny, self.n_coils, self.n_shots
            ));
        }
        match self.kind {
            DatasetKind::Kspace | DatasetKind::Mask => {
                if self.line_lists.len() != self.n_shots {
                    return dim(format!(
                        "{} line lists for {} shots",
                        self.line_lists.len(),
                        self.n_shots
                    ));
                }
                if self.line_lists.iter().flatten().any(|&l| l >= self.nx) {
                    return dim(format!("line index outside 0..{}", self.nx));
                }
            }
            DatasetKind::Image | DatasetKind::Field => {
                if !self.line_lists.is_empty() {
                    return dim("line lists only belong to k-space and mask files".into());
                }
            }
        }
        if matches!(self.kind, DatasetKind::Field | DatasetKind::Mask) && self.n_coils != 1 {
            return dim(format!("{:?} files have n_coils = 1", self.kind));
        }
        Ok(())
    }
}

/// In-memory content of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Kspace(KSpaceData),
    /// `n_shots * n_coils` images, shot-major.
    Images {
        n_coils: usize,
        images: Vec<Image>,
    },
    Fields(Vec<DisplacementField>),
    Masks(Vec<SamplingMask>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub data: Dataset,
}

fn push_c64(buf: &mut Vec<u8>, v: &C64) {
    buf.extend_from_slice(&(v.re as f32).to_le_bytes());
    buf.extend_from_slice(&(v.im as f32).to_le_bytes());
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn header_for(data: &Dataset, provenance: &Value) -> Result<DatasetHeader> {
    let base = |kind, nx, ny, n_coils, n_shots, dtype, line_lists| DatasetHeader {
        format_version: FORMAT_VERSION,
        kind,
        nx,
        ny,
        n_coils,
        n_shots,
        dtype,
        line_lists,
        provenance: provenance.clone(),
    };
    Ok(match data {
        Dataset::Kspace(ks) => base(
            DatasetKind::Kspace,
            ks.nx(),
            ks.ny(),
            ks.n_coils(),
            ks.n_shots(),
            Dtype::C64,
            ks.all_lines().to_vec(),
        ),
        Dataset::Images { n_coils, images } => {
            let first = images
                .first()
                .ok_or_else(|| Error::InvalidArgument("no images to write".into()))?;
            if *n_coils == 0
                || images.len() % n_coils != 0
                || images.iter().any(|i| !i.same_shape(first))
            {
                return Err(Error::ShapeMismatch("inconsistent image stack".into()));
            }
            base(
                DatasetKind::Image,
                first.nx(),
                first.ny(),
                *n_coils,
                images.len() / n_coils,
                Dtype::C64,
                Vec::new(),
            )
        }
        Dataset::Fields(fields) => {
            let first = fields
                .first()
                .ok_or_else(|| Error::InvalidArgument("no fields to write".into()))?;
            if fields
                .iter()
                .any(|f| (f.nx(), f.ny()) != (first.nx(), first.ny()))
            {
                return Err(Error::ShapeMismatch("fields of different shapes".into()));
            }
            base(
                DatasetKind::Field,
                first.nx(),
                first.ny(),
                1,
                fields.len(),
                Dtype::F32,
                Vec::new(),
            )
        }
        Dataset::Masks(masks) => {
            let first = masks
                .first()
                .ok_or_else(|| Error::InvalidArgument("no masks to write".into()))?;
            if masks.iter().any(|m| m.nx() != first.nx()) {
                return Err(Error::ShapeMismatch("masks of different lengths".into()));
            }
            base(
                DatasetKind::Mask,
                first.nx(),
                1,
                1,
                masks.len(),
                Dtype::F32,
                masks.iter().map(|m| m.indices()).collect(),
            )
        }
    })
}

/// Serializes header line plus payload.
pub fn encode_dataset(data: &Dataset, provenance: &Value) -> Result<Vec<u8>> {
    let header = header_for(data, provenance)?;
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    buf.reserve(header.payload_len());
    match data {
        Dataset::Kspace(ks) => ks.samples().iter().for_each(|v| push_c64(&mut buf, v)),
        Dataset::Images { images, .. } => images
            .iter()
            .flat_map(|i| i.data())
            .for_each(|v| push_c64(&mut buf, v)),
        Dataset::Fields(fields) => {
            for f in fields {
                f.ux()
                    .iter()
                    .chain(f.uy())
                    .for_each(|&v| push_f32(&mut buf, v));
            }
        }
        Dataset::Masks(masks) => {
            for m in masks {
                m.as_bools()
                    .iter()
                    .for_each(|&b| push_f32(&mut buf, if b { 1.0 } else { 0.0 }));
            }
        }
    }
    Ok(buf)
}

fn f32_at(payload: &[u8], k: usize) -> f64 {
    let b = &payload[4 * k..4 * k + 4];
    f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64
}

fn c64s(payload: &[u8], start: usize, n: usize) -> Vec<C64> {
    (start..start + n)
        .map(|k| C64::new(f32_at(payload, 2 * k), f32_at(payload, 2 * k + 1)))
        .collect()
}

/// Parses a dataset from bytes.
pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetFile> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("no header line terminator".into()))?;
    let raw: Value = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    match raw.get("format_version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => {
            return Err(Error::MalformedHeader(
                "missing integer format_version".into(),
            ))
        }
    }
    let header: DatasetHeader =
        serde_json::from_value(raw).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    header.check()?;
    let payload = &bytes[newline + 1..];
    let expected = header.payload_len();
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::DimensionMismatch(format!(
            "payload has {} bytes, header describes {expected}",
            payload.len()
        )));
    }
    let (nx, ny) = (header.nx, header.ny);
    let data = match header.kind {
        DatasetKind::Kspace => {
            let n = expected / 8;
            Dataset::Kspace(KSpaceData::new(
                nx,
                ny,
                header.n_coils,
                header.line_lists.clone(),
                c64s(payload, 0, n),
            )?)
        }
        DatasetKind::Image => {
            let n = nx * ny;
            let images = (0..header.n_shots * header.n_coils)
                .map(|k| Image::from_vec(nx, ny, c64s(payload, k * n, n)))
                .collect::<Result<Vec<_>>>()?;
            Dataset::Images {
                n_coils: header.n_coils,
                images,
            }
        }
        DatasetKind::Field => {
            let n = nx * ny;
            let fields = (0..header.n_shots)
                .map(|s| {
                    let ux = (0..n).map(|k| f32_at(payload, 2 * s * n + k)).collect();
                    let uy = (0..n)
                        .map(|k| f32_at(payload, (2 * s + 1) * n + k))
                        .collect();
                    DisplacementField::new(nx, ny, ux, uy)
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::Fields(fields)
        }
        DatasetKind::Mask => {
            let masks = (0..header.n_shots)
                .map(|s| {
                    let bools: Vec<bool> = (0..nx)
                        .map(|k| f32_at(payload, s * nx + k) != 0.0)
                        .collect();
                    let mask = SamplingMask::from_bools(bools)?;
                    if mask.indices() != header.line_lists[s] {
                        return Err(Error::DimensionMismatch(format!(
                            "mask {s} disagrees with its line list"
                        )));
                    }
                    Ok(mask)
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::Masks(masks)
        }
    };
    Ok(DatasetFile { header, data })
}

pub fn write_dataset(path: &Path, data: &Dataset, provenance: &Value) -> Result<()> {
    let bytes = encode_dataset(data, provenance)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    decode_dataset(&fs::read(path)?)
}

fn wrong_kind(path: &Path, want: DatasetKind, got: DatasetKind) -> Error {
    Error::DimensionMismatch(format!(
        "{} holds {:?} data, expected {:?}",
        path.display(),
        got,
        want
    ))
}

pub fn write_image(path: &Path, img: &Image, provenance: &Value) -> Result<()> {
    write_dataset(
        path,
        &Dataset::Images {
            n_coils: 1,
            images: vec![img.clone()],
        },
        provenance,
    )
}

/// Reads a file holding exactly one image.
pub fn read_image(path: &Path) -> Result<Image> {
    let file = read_dataset(path)?;
    match file.data {
        Dataset::Images { mut images, .. } if images.len() == 1 => Ok(images.remove(0)),
        Dataset::Images { images, .. } => Err(Error::DimensionMismatch(format!(
            "{} holds {} images, expected one",
            path.display(),
            images.len()
        ))),
        _ => Err(wrong_kind(path, DatasetKind::Image, file.header.kind)),
    }
}

/// Several single-coil images (for instance one per bin) in one file.
pub fn write_images(path: &Path, images: &[Image], provenance: &Value) -> Result<()> {
    write_dataset(
        path,
        &Dataset::Images {
            n_coils: 1,
            images: images.to_vec(),
        },
        provenance,
    )
}

pub fn read_images(path: &Path) -> Result<Vec<Image>> {
    let file = read_dataset(path)?;
    match file.data {
        Dataset::Images { images, .. } => Ok(images),
        _ => Err(wrong_kind(path, DatasetKind::Image, file.header.kind)),
    }
}

pub fn write_coils(path: &Path, coils: &CoilMaps, provenance: &Value) -> Result<()> {
    let n = coils.nx() * coils.ny();
    let images = (0..coils.n_coils())
        .map(|c| {
            Image::from_vec(
                coils.nx(),
                coils.ny(),
                coils.all()[c * n..(c + 1) * n].to_vec(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(
        path,
        &Dataset::Images {
            n_coils: coils.n_coils(),
            images,
        },
        provenance,
    )
}

pub fn read_coils(path: &Path) -> Result<CoilMaps> {
    let file = read_dataset(path)?;
    match file.data {
        Dataset::Images { n_coils, images } if images.len() == n_coils => {
            let (nx, ny) = images[0].dims();
            let maps = images.into_iter().flat_map(Image::into_vec).collect();
            CoilMaps::new(n_coils, nx, ny, maps)
        }
        Dataset::Images { .. } => Err(Error::DimensionMismatch(format!(
            "{} holds more than one shot of coil maps",
            path.display()
        ))),
        _ => Err(wrong_kind(path, DatasetKind::Image, file.header.kind)),
    }
}

pub fn write_kspace(path: &Path, ks: &KSpaceData, provenance: &Value) -> Result<()> {
    write_dataset(path, &Dataset::Kspace(ks.clone()), provenance)
}

pub fn read_kspace(path: &Path) -> Result<KSpaceData> {
    let file = read_dataset(path)?;
    match file.data {
        Dataset::Kspace(ks) => Ok(ks),
        _ => Err(wrong_kind(path, DatasetKind::Kspace, file.header.kind)),
    }
}

pub fn write_fields(path: &Path, fields: &[DisplacementField], provenance: &Value) -> Result<()> {
    write_dataset(path, &Dataset::Fields(fields.to_vec()), provenance)
}

pub fn read_fields(path: &Path) -> Result<Vec<DisplacementField>> {
    let file = read_dataset(path)?;
    match file.data {
        Dataset::Fields(f) => Ok(f),
        _ => Err(wrong_kind(path, DatasetKind::Field, file.header.kind)),
    }
}

pub fn write_masks(path: &Path, masks: &[SamplingMask], provenance: &Value) -> Result<()> {
    write_dataset(path, &Dataset::Masks(masks.to_vec()), provenance)
}

pub fn read_masks(path: &Path) -> Result<Vec<SamplingMask>> {
    let file = read_dataset(path)?;
    match file.data {
        Dataset::Masks(m) => Ok(m),
        _ => Err(wrong_kind(path, DatasetKind::Mask, file.header.kind)),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub const DEFAULT_WINDOW: (f64, f64) = (1.0, 99.0);

/// 8-bit gray levels (row-major) of `|img|` windowed linearly between two
/// magnitude percentiles. A flat window maps everything to 128.
pub fn gray_levels(img: &Image, window: (f64, f64)) -> Result<Vec<u8>> {
    let (lo_pct, hi_pct) = window;
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::InvalidArgument(format!(
            "window percentiles {window:?}"
        )));
    }
    let mag = img.magnitude();
    let mut sorted = mag.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, lo_pct);
    let hi = percentile(&sorted, hi_pct);
    if hi <= lo {
        return Ok(vec![128; mag.len()]);
    }
    Ok(mag
        .iter()
        .map(|v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect())
}

fn write_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(pixels)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

/// Grayscale PNG with one image row per PNG row.
pub fn export_png(img: &Image, path: &Path, window: (f64, f64)) -> Result<()> {
    let pixels = gray_levels(img, window)?;
    write_gray_png(path, img.ny(), img.nx(), &pixels)
}

/// Line plot of a per-shot signal, black on white, min-max scaled.
pub fn export_signal_png(values: &[f64], path: &Path) -> Result<()> {
    const W: usize = 480;
    const H: usize = 160;
    const PAD: usize = 8;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "signal plot needs finite values".into(),
        ));
    }
    let mut pixels = vec![255u8; W * H];
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let point = |k: usize| -> (f64, f64) {
        let x = if values.len() == 1 {
            (W / 2) as f64
        } else {
            PAD as f64 + k as f64 * (W - 2 * PAD - 1) as f64 / (values.len() - 1) as f64
        };
        let t = if hi > lo {
            (values[k] - lo) / (hi - lo)
        } else {
            0.5
        };
        (x, (H - PAD - 1) as f64 - t * (H - 2 * PAD - 1) as f64)
    };
    let mut plot = |x: f64, y: f64| {
        let (c, r) = (x.round() as usize, y.round() as usize);
        if c < W && r < H {
            pixels[r * W + c] = 0;
        }
    };
    for k in 0..values.len() {
        let (x0, y0) = point(k);
        let (x1, y1) = point((k + 1).min(values.len() - 1));
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            plot(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        }
    }
    write_gray_png(path, W, H, &pixels)
}

/// Everything `run_pipeline` needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub recon: ReconParams,
    #[serde(default)]
    pub registration: RegistrationParams,
    #[serde(default)]
    pub motion: MotionConfig,
    /// Weight of the identity Tikhonov baseline; `None` scales `max|E^H s|` by `TIKHONOV_LAMBDA_SCALE`.
    #[serde(default)]
    pub tikhonov_lambda: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub experiment_name: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionConfig::default(),
            recon: ReconParams::default(),
            registration: RegistrationParams::default(),
            motion: MotionConfig::default(),
            tikhonov_lambda: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            experiment_name: "simulation".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Vec<String> {
        let prefixed = |p: &str, v: Vec<String>| {
            v.into_iter()
                .map(move |m| format!("{p}: {m}"))
                .collect::<Vec<_>>()
        };
        let mut v = prefixed("acquisition", self.acquisition.validate());
        v.extend(prefixed("recon", self.recon.validate()));
        v.extend(prefixed("registration", self.registration.validate()));
        v.extend(prefixed("motion", self.motion.validate()));
        if let Some(l) = self.tikhonov_lambda {
            if !(l.is_finite() && l >= 0.0) {
                v.push(format!("tikhonov_lambda = {l} must be >= 0"));
            }
        }
        if self.experiment_name.is_empty() {
            v.push("experiment_name must not be empty".into());
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

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_coil_maps, make_phantom, PhantomSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kspace(seed: u64) -> KSpaceData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lines = vec![vec![0, 3, 5], vec![1, 2, 3, 9], vec![7]];
        let n: usize = lines.iter().map(|l| l.len()).sum::<usize>() * 2 * 12;
        let samples = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        KSpaceData::new(10, 12, 2, lines, samples).unwrap()
    }

    fn close_f32(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-7 * a.abs().max(1.0)
    }

    #[test]
    fn kspace_round_trip() {
        let ks = random_kspace(1);
        let bytes = encode_dataset(&Dataset::Kspace(ks.clone()), &Value::Null).unwrap();
        let back = match decode_dataset(&bytes).unwrap().data {
            Dataset::Kspace(k) => k,
            other => panic!("{other:?}"),
        };
        assert!(back.same_layout(&ks));
        for (a, b) in back.samples().iter().zip(ks.samples()) {
            assert!(close_f32(a.re, b.re) && close_f32(a.im, b.im));
            assert_eq!(a.re, b.re as f32 as f64);
        }
        // a second round trip is exact
        let again = encode_dataset(&Dataset::Kspace(back), &Value::Null).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn header_is_one_json_line() {
        let bytes = encode_dataset(
            &Dataset::Kspace(random_kspace(2)),
            &serde_json::json!({"stage": "test"}),
        )
        .unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let h: Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(h["format_version"], 1);
        assert_eq!(h["kind"], "kspace");
        assert_eq!(h["dtype"], "c64");
        assert_eq!(h["provenance"]["stage"], "test");
        assert_eq!(bytes.len() - nl - 1, 8 * 2 * 12 * 8);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = encode_dataset(&Dataset::Kspace(random_kspace(3)), &Value::Null).unwrap();
        bytes.pop();
        assert!(matches!(
            decode_dataset(&bytes),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn version_two_is_rejected() {
        let bytes = encode_dataset(&Dataset::Kspace(random_kspace(4)), &Value::Null).unwrap();
        let text = String::from_utf8_lossy(&bytes).replacen(
            "\"format_version\":1",
            "\"format_version\":2",
            1,
        );
        assert!(matches!(
            decode_dataset(text.as_bytes()),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn dimension_problems_are_distinct() {
        let bytes = encode_dataset(&Dataset::Kspace(random_kspace(5)), &Value::Null).unwrap();
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(matches!(
            decode_dataset(&extra),
            Err(Error::DimensionMismatch(_))
        ));
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut h: Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        h["n_shots"] = 2.into();
        let mut edited = serde_json::to_vec(&h).unwrap();
        edited.extend_from_slice(&bytes[nl..]);
        assert!(matches!(
            decode_dataset(&edited),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            decode_dataset(b"not json\n"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn image_field_mask_and_coil_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = make_phantom(&PhantomSpec::cardiac(16, 20)).unwrap();
        write_image(&dir.path().join("a.img"), &img, &Value::Null).unwrap();
        let back = read_image(&dir.path().join("a.img")).unwrap();
        assert!(back
            .data()
            .iter()
            .zip(img.data())
            .all(|(a, b)| (a - b).norm() < 1e-6));

        let coils = make_coil_maps(3, 16, 20).unwrap();
        write_coils(&dir.path().join("c.img"), &coils, &Value::Null).unwrap();
        let cb = read_coils(&dir.path().join("c.img")).unwrap();
        assert_eq!(cb.n_coils(), 3);
        assert!(cb
            .all()
            .iter()
            .zip(coils.all())
            .all(|(a, b)| (a - b).norm() < 1e-6));

        let f = DisplacementField::new(
            16,
            20,
            (0..320).map(|k| k as f64 * 0.01).collect(),
            vec![-0.5; 320],
        )
        .unwrap();
        write_fields(
            &dir.path().join("f.fld"),
            std::slice::from_ref(&f),
            &Value::Null,
        )
        .unwrap();
        let fb = read_fields(&dir.path().join("f.fld")).unwrap();
        assert!(fb[0]
            .ux()
            .iter()
            .zip(f.ux())
            .all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(fb[0].uy(), f.uy());

        let m = vec![
            SamplingMask::from_lines(16, &[0, 4, 5]).unwrap(),
            SamplingMask::full(16),
        ];
        write_masks(&dir.path().join("m.mask"), &m, &Value::Null).unwrap();
        assert_eq!(read_masks(&dir.path().join("m.mask")).unwrap(), m);

        assert!(read_kspace(&dir.path().join("m.mask")).is_err());
    }

    #[test]
    fn constant_image_exports_uniform_gray() {
        let img = Image::from_real(8, 8, &[3.0; 64]).unwrap();
        assert!(gray_levels(&img, DEFAULT_WINDOW)
            .unwrap()
            .iter()
            .all(|&p| p == 128));
    }

    #[test]
    fn phantom_export_spans_full_range_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let img = make_phantom(&PhantomSpec::cardiac(64, 64)).unwrap();
        let levels = gray_levels(&img, DEFAULT_WINDOW).unwrap();
        assert_eq!(levels.iter().min(), Some(&0));
        assert_eq!(levels.iter().max(), Some(&255));
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        export_png(&img, &a, DEFAULT_WINDOW).unwrap();
        export_png(&img, &b, DEFAULT_WINDOW).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    #[test]
    fn pipeline_config_rejects_unknown_keys_and_collects_errors() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["surprise"] = 1.into();
        assert!(PipelineConfig::from_json(&v.to_string()).is_err());
        let mut bad = cfg.clone();
        bad.acquisition.n_coils = 0;
        bad.recon.beta = -1.0;
        assert!(bad.validate().len() >= 2);
    }
}
