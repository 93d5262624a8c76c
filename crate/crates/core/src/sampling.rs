//! Hybrid Cartesian sampling: a fully sampled centered block of phase-encode
//! lines plus a golden-step undersampled periphery.
//!
//! Peripheral "slots" enumerate the lines outside the center block in
//! ascending order. The slot for global counter `n` is
//! `floor(frac((n + 1) * fraction) * n_slots)`; a slot already taken within
//! the current shot is skipped by advancing the counter. The counter keeps
//! running across shots so successive shots interleave.

use crate::error::{Error, Result};
use crate::model::{AcquisitionConfig, SamplingMask};

/// Slots produced for one shot plus the counter value to resume from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenStep {
    pub slots: Vec<usize>,
    pub next_counter: u64,
}

pub fn golden_step_lines(
    n_available: usize,
    n_wanted: usize,
    counter_start: u64,
    fraction: f64,
) -> Result<GoldenStep> {
    if n_wanted > n_available {
        return Err(Error::InvalidArgument(format!(
            "{n_wanted} peripheral lines requested, only {n_available} available"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "golden fraction {fraction} outside (0, 1)"
        )));
    }
    let mut taken = vec![false; n_available];
    let mut slots = Vec::with_capacity(n_wanted);
    let mut counter = counter_start;
    // A rational fraction may never reach some slots.
    let budget = counter_start + 64 * (n_available as u64 + 1) * (n_wanted as u64 + 1);
    while slots.len() < n_wanted {
        if counter >= budget {
            return Err(Error::InvalidArgument(format!(
                "fraction {fraction} cannot produce {n_wanted} distinct slots out of {n_available}"
            )));
        }
        let phase = ((counter + 1) as f64 * fraction).fract();
        let slot = ((phase * n_available as f64).floor() as usize).min(n_available - 1);
        counter += 1;
        if !taken[slot] {
            taken[slot] = true;
            slots.push(slot);
        }
    }
    Ok(GoldenStep {
        slots,
        next_counter: counter,
    })
}

/// Line indices of the centered fully sampled block.
pub fn center_block(config: &AcquisitionConfig) -> std::ops::Range<usize> {
    let start = config.center_start();
    start..start + config.n_center_lines
}

/// Sampling mask of one shot: center block plus golden-step periphery.
pub fn hybrid_mask(
    config: &AcquisitionConfig,
    _shot_index: usize,
    counter_start: u64,
) -> Result<(SamplingMask, u64)> {
    config.check()?;
    let center = center_block(config);
    let n_available = config.nx - config.n_center_lines;
    let step = golden_step_lines(
        n_available,
        config.n_periphery_lines_per_shot,
        counter_start,
        config.golden_fraction,
    )?;
    let mut lines = vec![false; config.nx];
    for l in center.clone() {
        lines[l] = true;
    }
    for &slot in &step.slots {
        lines[slot_to_line(slot, &center)] = true;
    }
    Ok((SamplingMask::from_bools(lines)?, step.next_counter))
}

fn slot_to_line(slot: usize, center: &std::ops::Range<usize>) -> usize {
    if slot < center.start {
        slot
    } else {
        slot + center.len()
    }
}

/// Logical OR of masks.
pub fn mask_union(masks: &[SamplingMask]) -> Result<SamplingMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("union of an empty mask list".into()))?;
    let nx = first.nx();
    let mut lines = vec![false; nx];
    for m in masks {
        if m.nx() != nx {
            return Err(Error::ShapeMismatch(format!(
                "mask union of nx={nx} and nx={}",
                m.nx()
            )));
        }
        for (o, &b) in lines.iter_mut().zip(m.as_bools()) {
            *o |= b;
        }
    }
    SamplingMask::from_bools(lines)
}

/// Per-shot masks of a whole acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPlan {
    pub config: AcquisitionConfig,
    pub masks: Vec<SamplingMask>,
    pub counter_start: u64,
}

impl TrajectoryPlan {
    pub fn new(config: &AcquisitionConfig) -> Result<Self> {
        Self::with_counter(config, 0)
    }

    pub fn with_counter(config: &AcquisitionConfig, counter_start: u64) -> Result<Self> {
        config.check()?;
        let mut masks = Vec::with_capacity(config.n_shots);
        let mut counter = counter_start;
        for shot in 0..config.n_shots {
            let (mask, next) = hybrid_mask(config, shot, counter)?;
            masks.push(mask);
            counter = next;
        }
        Ok(Self {
            config: config.clone(),
            masks,
            counter_start,
        })
    }

    pub fn n_shots(&self) -> usize {
        self.masks.len()
    }

    pub fn union(&self) -> Result<SamplingMask> {
        mask_union(&self.masks)
    }
}
