//! End-to-end run: simulate, self-navigate, bin, per-bin reconstruction,
//! registration, motion-compensated reconstruction, baselines, metrics.
//!
//! Every stage writes its artifacts into the output directory as soon as it
//! finishes, so a failing stage leaves the earlier outputs in place. The
//! summary holds only deterministic values; wall-clock times go to
//! `timings.json`.
//!
//! Randomness: the simulator seed of a run is `seed ^ fnv1a64("simulate")`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::{
    export_png, export_signal_png, write_coils, write_fields, write_image, write_images,
    write_json, write_kspace, write_masks, PipelineConfig, DEFAULT_WINDOW,
};
use crate::metrics::{
    line_profile, max_abs_derivative, psnr, signal_correlation, ssim, ProfileSpec,
};
use crate::model::{DisplacementField, Image};
use crate::operators::warp;
use crate::recon::{
    baseline_sos, baseline_zero_filled, default_lambda, motion_operator, rra_from_bin_images,
    solve_bsense, solve_mocobel, solve_tikhonov_with, SolveReport, TIKHONOV_LAMBDA_SCALE,
};
use crate::registration::register_bins;
use crate::selfnav::{
    bin_shots, extract_signal, navigator_images, BinAssignment, RespiratorySignal,
};
use crate::simulator::{simulate, Simulation};

/// 64-bit FNV-1a.
pub fn fnv1a64(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of a named stage.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    seed ^ fnv1a64(stage)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverEcho {
    pub lambda: f64,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub converged: bool,
    pub final_objective: f64,
}

impl From<&SolveReport> for SolverEcho {
    fn from(r: &SolveReport) -> Self {
        Self {
            lambda: r.lambda,
            iterations: r.iterations,
            rejected_steps: r.rejected_steps,
            converged: r.converged,
            final_objective: r.objective.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Deterministic record of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub experiment_name: String,
    pub config: PipelineConfig,
    pub simulation_seed: u64,
    pub respiratory_signal: Vec<f64>,
    /// Pearson r between the extracted signal and the simulated SI displacement.
    pub signal_vs_truth_r: Option<f64>,
    pub bin_of_shot: Vec<usize>,
    pub reference_bin: usize,
    /// Shot whose motion state defines the frame of the scoring truth.
    pub reference_shot: usize,
    pub bin_solves: Vec<SolverEcho>,
    pub mocobel_solve: SolverEcho,
    pub tikhonov_lambda: f64,
    /// Scores against the ground truth in the reference frame, keyed by method.
    pub scores: BTreeMap<String, MethodScore>,
    pub profile: ProfileSpec,
    /// Largest step of the line profile per method (edge sharpness).
    pub profile_max_step: BTreeMap<String, f64>,
}

/// Reconstructions kept in memory for callers that want more than the summary.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub summary: PipelineSummary,
    pub timings: BTreeMap<String, f64>,
    pub simulation: Simulation,
    pub signal: RespiratorySignal,
    pub bins: BinAssignment,
    pub bin_images: Vec<Image>,
    pub estimated_fields: Vec<DisplacementField>,
    pub reference_truth: Image,
    pub reconstructions: BTreeMap<String, Image>,
}

pub const METHODS: [&str; 5] = ["mocobel", "tikhonov", "rra", "sos", "zero_filled"];

struct Stages {
    timings: BTreeMap<String, f64>,
}

impl Stages {
    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(name));
        self.timings
            .insert(name.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

fn provenance(cfg: &PipelineConfig, stage: &str) -> Value {
    json!({"experiment": cfg.experiment_name, "stage": stage, "seed": cfg.seed})
}

/// Horizontal profile through the image center, spanning the middle half of the columns.
pub fn default_profile(nx: usize, ny: usize) -> ProfileSpec {
    let row = (nx / 2) as f64;
    ProfileSpec {
        start: (row, (ny / 4) as f64),
        end: (row, (3 * ny / 4) as f64),
        n_samples: ny / 2 + 1,
    }
}

/// Runs every stage, writes artifacts and the summary, returns everything.
pub fn run_pipeline_full(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.check()?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out)?;
    let mut st = Stages {
        timings: BTreeMap::new(),
    };
    let acq = &cfg.acquisition;
    let sim_seed = stage_seed(cfg.seed, "simulate");

    let sim = st.run("simulate", || {
        let sim = simulate(acq, &cfg.motion, sim_seed)?;
        let p = provenance(cfg, "simulate");
        write_image(&out.join("truth.img"), &sim.truth, &p)?;
        export_png(&sim.truth, &out.join("truth.png"), DEFAULT_WINDOW)?;
        write_coils(&out.join("coils.img"), &sim.coils, &p)?;
        write_kspace(&out.join("kspace.ks"), &sim.kspace, &p)?;
        write_masks(&out.join("masks.mask"), &sim.plan.masks, &p)?;
        write_fields(&out.join("true_fields.fld"), &sim.fields, &p)?;
        write_json(&out.join("motion.json"), &sim.motion)?;
        Ok(sim)
    })?;

    let signal = st.run("selfnav", || {
        let navs = navigator_images(&sim.kspace, acq.n_center_lines)?;
        // a single shot has no motion to resolve
        let signal = if navs.len() == 1 {
            RespiratorySignal { values: vec![0.0] }
        } else {
            extract_signal(&navs)?
        };
        write_json(&out.join("signal.json"), &signal)?;
        export_signal_png(&signal.values, &out.join("signal.png"))?;
        Ok(signal)
    })?;
    let signal_vs_truth_r = signal_correlation(&signal.values, &sim.motion.si_trace())
        .ok()
        .map(|c| c.pearson_r);

    let bins = st.run("bin", || {
        let bins = bin_shots(&signal, acq.n_bins)?;
        write_json(&out.join("bins.json"), &bins)?;
        Ok(bins)
    })?;

    let (bin_images, bin_reports) = st.run("bsense", || {
        let mut images = Vec::with_capacity(bins.n_bins);
        let mut reports = Vec::with_capacity(bins.n_bins);
        for b in 0..bins.n_bins {
            let ks_b = sim.kspace.select_shots(&bins.shots_in_bin(b))?;
            let (img, rep) = solve_bsense(&ks_b, &sim.coils, &cfg.recon)?;
            export_png(&img, &out.join(format!("bin_{b:02}.png")), DEFAULT_WINDOW)?;
            images.push(img);
            reports.push(rep);
        }
        write_images(
            &out.join("bin_images.img"),
            &images,
            &provenance(cfg, "bsense"),
        )?;
        write_json(&out.join("bin_reports.json"), &reports)?;
        Ok((images, reports))
    })?;

    let fields = st.run("register", || {
        let fields = register_bins(&bin_images, bins.reference_bin, &cfg.registration)?;
        write_fields(
            &out.join("estimated_fields.fld"),
            &fields,
            &provenance(cfg, "register"),
        )?;
        Ok(fields)
    })?;

    let mut recons = BTreeMap::new();
    let mocobel_report = st.run("mocobel", || {
        let (img, rep) = solve_mocobel(&sim.kspace, &sim.coils, &bins, &fields, &cfg.recon)?;
        write_image(&out.join("mocobel.img"), &img, &provenance(cfg, "mocobel"))?;
        export_png(&img, &out.join("mocobel.png"), DEFAULT_WINDOW)?;
        write_json(&out.join("mocobel_report.json"), &rep)?;
        recons.insert("mocobel".to_string(), img);
        Ok(rep)
    })?;

    let tikhonov_lambda = st.run("baselines", || {
        let (op, data) = motion_operator(&sim.kspace, &sim.coils, &bins, &fields)?;
        let lambda = match cfg.tikhonov_lambda {
            Some(l) => l,
            None => default_lambda(&op, &data, TIKHONOV_LAMBDA_SCALE)?,
        };
        let (tik, _) = solve_tikhonov_with(&op, &data, lambda)?;
        recons.insert("tikhonov".to_string(), tik);
        recons.insert(
            "rra".to_string(),
            rra_from_bin_images(&bin_images, bins.reference_bin, &cfg.registration)?,
        );
        recons.insert("sos".to_string(), baseline_sos(&sim.kspace, &sim.coils)?);
        recons.insert(
            "zero_filled".to_string(),
            baseline_zero_filled(&sim.kspace, &sim.coils)?,
        );
        for name in ["tikhonov", "rra", "sos", "zero_filled"] {
            let img = &recons[name];
            write_image(
                &out.join(format!("{name}.img")),
                img,
                &provenance(cfg, name),
            )?;
            export_png(img, &out.join(format!("{name}.png")), DEFAULT_WINDOW)?;
        }
        Ok(lambda)
    })?;

    let reference_shot = bins.shots_in_bin(bins.reference_bin)[0];
    let (reference_truth, scores, profile, profile_max_step) = st.run("metrics", || {
        let reference_truth = warp(&sim.truth, &sim.fields[reference_shot])?;
        write_image(
            &out.join("reference_truth.img"),
            &reference_truth,
            &provenance(cfg, "metrics"),
        )?;
        let profile = default_profile(acq.nx, acq.ny);
        let mut scores = BTreeMap::new();
        let mut steps = BTreeMap::new();
        for (name, img) in &recons {
            scores.insert(
                name.clone(),
                MethodScore {
                    psnr_db: psnr(img, &reference_truth)?,
                    ssim: ssim(img, &reference_truth)?,
                },
            );
            steps.insert(
                name.clone(),
                max_abs_derivative(&line_profile(img, &profile)?),
            );
        }
        Ok((reference_truth, scores, profile, steps))
    })?;

    let summary = PipelineSummary {
        experiment_name: cfg.experiment_name.clone(),
        config: cfg.clone(),
        simulation_seed: sim_seed,
        respiratory_signal: signal.values.clone(),
        signal_vs_truth_r,
        bin_of_shot: bins.bin_of_shot.clone(),
        reference_bin: bins.reference_bin,
        reference_shot,
        bin_solves: bin_reports.iter().map(SolverEcho::from).collect(),
        mocobel_solve: SolverEcho::from(&mocobel_report),
        tikhonov_lambda,
        scores,
        profile,
        profile_max_step,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timings.json"), &st.timings)?;

    Ok(PipelineOutput {
        summary,
        timings: st.timings,
        simulation: sim,
        signal,
        bins,
        bin_images,
        estimated_fields: fields,
        reference_truth,
        reconstructions: recons,
    })
}

/// Runs the pipeline and returns the summary.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    Ok(run_pipeline_full(cfg)?.summary)
}

/// Reads a summary written by a previous run.
pub fn read_summary(dir: &Path) -> Result<PipelineSummary> {
    crate::io::read_json(&dir.join("summary.json")).map_err(|e: Error| e.in_stage("summary"))
}
