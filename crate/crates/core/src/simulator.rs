//! Synthetic acquisition: ellipse phantoms with thin vessel-like lines,
//! Gaussian coil sensitivities, per-shot breathing motion and noisy
//! undersampled multi-coil k-space.
//!
//! Phantom geometry uses normalized coordinates: `u = (i - nx/2) / (nx/2)`
//! along rows and `v = (j - ny/2) / (ny/2)` along columns, so the grid
//! center pixel sits at `(0, 0)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{AcquisitionConfig, CoilMaps, DisplacementField, Image, KSpaceData, C64};
use crate::operators::{fft2c_inplace, warp};
use crate::sampling::TrajectoryPlan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    /// Rotation in radians.
    pub angle: f64,
    pub intensity: C64,
}

/// Thin line segment, used to emulate small vessels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFeature {
    pub start: (f64, f64),
    pub end: (f64, f64),
    /// Half width in pixels.
    pub half_width: f64,
    pub intensity: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub ellipses: Vec<Ellipse>,
    #[serde(default)]
    pub lines: Vec<LineFeature>,
}

fn ellipse(cx: f64, cy: f64, ax: f64, ay: f64, angle: f64, intensity: f64) -> Ellipse {
    Ellipse {
        center: (cx, cy),
        axes: (ax, ay),
        angle,
        intensity: C64::new(intensity, 0.0),
    }
}

fn vessel(start: (f64, f64), end: (f64, f64), intensity: f64) -> LineFeature {
    LineFeature {
        start,
        end,
        half_width: 0.75,
        intensity: C64::new(intensity, 0.0),
    }
}

impl PhantomSpec {
    /// Short-axis-like chest slice: body, lungs, left and right ventricles
    /// with myocardium and papillary muscles, liver, spine, aorta and a few
    /// thin vessels crossing the lungs.
    pub fn cardiac(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            ellipses: vec![
                ellipse(0.0, 0.0, 0.75, 0.85, 0.0, 0.3),
                ellipse(-0.1, -0.5, 0.42, 0.26, 0.2, -0.25),
                ellipse(-0.1, 0.5, 0.42, 0.26, -0.2, -0.25),
                ellipse(0.05, 0.05, 0.3, 0.28, 0.0, 0.25),
                ellipse(0.05, 0.05, 0.18, 0.16, 0.0, 0.4),
                ellipse(0.12, 0.0, 0.04, 0.03, 0.0, -0.35),
                ellipse(0.1, 0.12, 0.035, 0.03, 0.0, -0.35),
                ellipse(0.0, -0.3, 0.18, 0.09, 0.4, 0.3),
                ellipse(0.55, -0.2, 0.22, 0.4, 0.3, 0.25),
                ellipse(-0.62, 0.0, 0.09, 0.08, 0.0, 0.5),
                ellipse(-0.42, 0.18, 0.06, 0.05, 0.0, 0.55),
            ],
            lines: vec![
                vessel((-0.35, -0.62), (0.1, -0.38), 0.4),
                vessel((-0.3, 0.35), (0.15, 0.66), 0.4),
                vessel((-0.45, 0.48), (0.2, 0.45), 0.35),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ellipses.is_empty() {
            return Err(Error::InvalidArgument(
                "phantom needs at least one ellipse".into(),
            ));
        }
        let too_bright = self
            .ellipses
            .iter()
            .map(|e| e.intensity)
            .chain(self.lines.iter().map(|l| l.intensity))
            .any(|v| !(v.norm() <= 1.0));
        if too_bright {
            return Err(Error::InvalidArgument(
                "phantom intensities must satisfy |v| <= 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Image> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let (hx, hy) = (nx as f64 / 2.0, ny as f64 / 2.0);
    Image::from_fn(nx, ny, |i, j| {
        let u = (i as f64 - hx) / hx;
        let v = (j as f64 - hy) / hy;
        let mut value = C64::new(0.0, 0.0);
        for e in &spec.ellipses {
            let (du, dv) = (u - e.center.0, v - e.center.1);
            let (s, c) = e.angle.sin_cos();
            let a = (du * c + dv * s) / e.axes.0;
            let b = (-du * s + dv * c) / e.axes.1;
            if a * a + b * b <= 1.0 {
                value += e.intensity;
            }
        }
        for l in &spec.lines {
            let p0 = (l.start.0 * hx + hx, l.start.1 * hy + hy);
            let p1 = (l.end.0 * hx + hx, l.end.1 * hy + hy);
            if segment_distance((i as f64, j as f64), p0, p1) <= l.half_width {
                value += l.intensity;
            }
        }
        value
    })
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Gaussian coil profiles centered on the image border.
///
/// Coil `c` sits at angle `2 pi c / n_coils` on the border ellipse, has width
/// `max(nx, ny) / 2` and a linear phase ramp; the set is normalized so the
/// sum of squared magnitudes is 1 wherever it exceeds 1e-8.
pub fn make_coil_maps(n_coils: usize, nx: usize, ny: usize) -> Result<CoilMaps> {
    if n_coils == 0 {
        return Err(Error::InvalidArgument("need at least one coil".into()));
    }
    let (hx, hy) = (nx as f64 / 2.0, ny as f64 / 2.0);
    let width = nx.max(ny) as f64 / 2.0;
    let mut maps = Vec::with_capacity(n_coils * nx * ny);
    for c in 0..n_coils {
        let theta = 2.0 * PI * c as f64 / n_coils as f64;
        let (st, ct) = theta.sin_cos();
        let (px, py) = (hx + hx * ct, hy + hy * st);
        for i in 0..nx {
            for j in 0..ny {
                let d2 = (i as f64 - px).powi(2) + (j as f64 - py).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                let phase = theta
                    + 0.5
                        * PI
                        * ((i as f64 - hx) / nx as f64 * ct + (j as f64 - hy) / ny as f64 * st);
                maps.push(C64::from_polar(mag, phase));
            }
        }
    }
    let n = nx * ny;
    for p in 0..n {
        let sos: f64 = (0..n_coils).map(|c| maps[c * n + p].norm_sqr()).sum();
        if sos > 1e-8 {
            let s = 1.0 / sos.sqrt();
            for c in 0..n_coils {
                maps[c * n + p] *= s;
            }
        }
    }
    CoilMaps::new(n_coils, nx, ny, maps)
}

/// Smooth Gaussian displacement bump along the row (phase-encode) axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    /// Center in pixel coordinates.
    pub center: (f64, f64),
    /// Gaussian standard deviation in pixels.
    pub width: f64,
}

/// Motion of one shot: rigid translation plus an optional non-rigid bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MotionState {
    pub dx: f64,
    pub dy: f64,
    #[serde(default)]
    pub bump: Option<Bump>,
}

impl MotionState {
    pub fn translation(dx: f64, dy: f64) -> Self {
        Self { dx, dy, bump: None }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite()
            && self.dy.is_finite()
            && self.bump.as_ref().is_none_or(|b| {
                b.amplitude.is_finite()
                    && b.center.0.is_finite()
                    && b.center.1.is_finite()
                    && b.width.is_finite()
                    && b.width > 0.0
            })
    }

    /// Dense pull displacement of this state.
    pub fn field(&self, nx: usize, ny: usize) -> Result<DisplacementField> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument("motion state is not finite".into()));
        }
        let mut ux = vec![self.dx; nx * ny];
        let uy = vec![self.dy; nx * ny];
        if let Some(b) = &self.bump {
            for i in 0..nx {
                for j in 0..ny {
                    let d2 = (i as f64 - b.center.0).powi(2) + (j as f64 - b.center.1).powi(2);
                    ux[i * ny + j] += b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp();
                }
            }
        }
        DisplacementField::new(nx, ny, ux, uy)
    }
}

/// Breathing-like motion settings used to build per-shot motion traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    /// Peak translation along rows (superior-inferior), pixels.
    pub si_amplitude: f64,
    /// Peak translation along columns, pixels.
    pub ap_amplitude: f64,
    /// Peak amplitude of the non-rigid bump, pixels.
    pub bump_amplitude: f64,
    /// Bump center in normalized coordinates.
    pub bump_center: (f64, f64),
    /// Bump width as a fraction of `nx / 2`.
    pub bump_width: f64,
    /// Breathing period measured in shots.
    pub period_shots: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            si_amplitude: 4.0,
            ap_amplitude: 1.0,
            bump_amplitude: 1.5,
            bump_center: (0.05, 0.05),
            bump_width: 0.3,
            period_shots: 4.3,
        }
    }
}

impl MotionConfig {
    pub fn none() -> Self {
        Self {
            si_amplitude: 0.0,
            ap_amplitude: 0.0,
            bump_amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let vals = [
            self.si_amplitude,
            self.ap_amplitude,
            self.bump_amplitude,
            self.bump_center.0,
            self.bump_center.1,
        ];
        if vals.iter().any(|x| !x.is_finite()) {
            v.push("motion amplitudes must be finite".into());
        }
        if !(self.bump_width > 0.0 && self.bump_width.is_finite()) {
            v.push("bump_width must be > 0".into());
        }
        if !(self.period_shots > 0.0 && self.period_shots.is_finite()) {
            v.push("period_shots must be > 0".into());
        }
        v
    }

    /// Breathing position of shot `s` in [0, 1]: `(1 - cos(2 pi s / period)) / 2`.
    pub fn position(&self, shot: usize) -> f64 {
        0.5 * (1.0 - (2.0 * PI * shot as f64 / self.period_shots).cos())
    }

    pub fn trace(&self, n_shots: usize, nx: usize, ny: usize) -> MotionTrace {
        let (hx, hy) = (nx as f64 / 2.0, ny as f64 / 2.0);
        MotionTrace(
            (0..n_shots)
                .map(|s| {
                    let b = self.position(s);
                    MotionState {
                        dx: self.si_amplitude * b,
                        dy: self.ap_amplitude * b,
                        bump: (self.bump_amplitude != 0.0).then(|| Bump {
                            amplitude: self.bump_amplitude * b,
                            center: (hx + self.bump_center.0 * hx, hy + self.bump_center.1 * hy),
                            width: self.bump_width * hx,
                        }),
                    }
                })
                .collect(),
        )
    }
}

/// Per-shot motion states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionTrace(pub Vec<MotionState>);

impl MotionTrace {
    pub fn still(n_shots: usize) -> Self {
        Self(vec![MotionState::default(); n_shots])
    }

    /// Pure translation `dx = amplitude * sin(2 pi s / period)` along rows.
    pub fn sinusoidal(n_shots: usize, amplitude: f64, period_shots: f64) -> Self {
        Self(
            (0..n_shots)
                .map(|s| {
                    MotionState::translation(
                        amplitude * (2.0 * PI * s as f64 / period_shots).sin(),
                        0.0,
                    )
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn states(&self) -> &[MotionState] {
        &self.0
    }

    /// Row-axis translation per shot; the simplest respiratory surrogate.
    pub fn si_trace(&self) -> Vec<f64> {
        self.0.iter().map(|m| m.dx).collect()
    }

    pub fn fields(&self, nx: usize, ny: usize) -> Result<Vec<DisplacementField>> {
        self.0.iter().map(|m| m.field(nx, ny)).collect()
    }
}

/// Deform `img` by one shot's motion; returns the image and the exact field used.
pub fn apply_motion(img: &Image, motion: &MotionState) -> Result<(Image, DisplacementField)> {
    let field = motion.field(img.nx(), img.ny())?;
    let out = warp(img, &field)?;
    Ok((out, field))
}

/// Simulated multi-shot acquisition.
///
/// Each shot deforms the ground truth, applies every coil map, takes the
/// centered orthonormal FFT, keeps the shot's lines and adds complex
/// Gaussian noise drawn from a generator seeded with `seed + shot`.
pub fn acquire(
    ground_truth: &Image,
    coils: &CoilMaps,
    plan: &TrajectoryPlan,
    motion: &MotionTrace,
    noise_std: f64,
    seed: u64,
) -> Result<KSpaceData> {
    let (nx, ny) = ground_truth.dims();
    if (coils.nx(), coils.ny()) != (nx, ny) {
        return Err(Error::ShapeMismatch("coil maps vs ground truth".into()));
    }
    if motion.len() != plan.n_shots() {
        return Err(Error::ShapeMismatch(format!(
            "{} motion states for {} shots",
            motion.len(),
            plan.n_shots()
        )));
    }
    if plan.masks.iter().any(|m| m.nx() != nx) {
        return Err(Error::ShapeMismatch("trajectory vs ground truth".into()));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_std = {noise_std}")));
    }
    let lines: Vec<Vec<usize>> = plan.masks.iter().map(|m| m.indices()).collect();
    let mut ks = KSpaceData::zeros(nx, ny, coils.n_coils(), lines.clone())?;
    let mut buf = vec![C64::new(0.0, 0.0); nx * ny];
    for (s, state) in motion.states().iter().enumerate() {
        let (deformed, _) = apply_motion(ground_truth, state)?;
        let n = lines[s].len();
        let dst = ks.shot_samples_mut(s);
        for c in 0..coils.n_coils() {
            for ((b, m), v) in buf.iter_mut().zip(coils.map(c)).zip(deformed.data()) {
                *b = m * v;
            }
            fft2c_inplace(&mut buf, nx, ny, rustfft::FftDirection::Forward);
            for (pos, &l) in lines[s].iter().enumerate() {
                let start = (c * n + pos) * ny;
                dst[start..start + ny].copy_from_slice(&buf[l * ny..(l + 1) * ny]);
            }
        }
        if noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let normal = Normal::new(0.0, noise_std).expect("finite std");
            for v in dst.iter_mut() {
                let re = normal.sample(&mut rng);
                let im = normal.sample(&mut rng);
                *v += C64::new(re, im);
            }
        }
    }
    Ok(ks)
}

/// Everything a simulated experiment produces.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: AcquisitionConfig,
    pub truth: Image,
    pub coils: CoilMaps,
    pub plan: TrajectoryPlan,
    pub motion: MotionTrace,
    pub fields: Vec<DisplacementField>,
    pub kspace: KSpaceData,
}

/// Default cardiac phantom, Gaussian coils and breathing motion for `config`.
pub fn simulate(
    config: &AcquisitionConfig,
    motion: &MotionConfig,
    seed: u64,
) -> Result<Simulation> {
    config.check()?;
    let mv = motion.validate();
    if !mv.is_empty() {
        return Err(Error::InvalidConfig(mv));
    }
    let truth = make_phantom(&PhantomSpec::cardiac(config.nx, config.ny))?;
    let coils = make_coil_maps(config.n_coils, config.nx, config.ny)?;
    let plan = TrajectoryPlan::new(config)?;
    let trace = motion.trace(config.n_shots, config.nx, config.ny);
    let fields = trace.fields(config.nx, config.ny)?;
    let kspace = acquire(&truth, &coils, &plan, &trace, config.noise_std, seed)?;
    Ok(Simulation {
        config: config.clone(),
        truth,
        coils,
        plan,
        motion: trace,
        fields,
        kspace,
    })
}
