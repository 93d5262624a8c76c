use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use freebreath::io::{
    export_png, export_signal_png, read_coils, read_fields, read_image, read_json, read_kspace,
    write_coils, write_fields, write_image, write_json, write_kspace, write_masks, PipelineConfig,
    DEFAULT_WINDOW,
};
use freebreath::metrics::{line_profile, psnr, ssim, ProfileSpec};
use freebreath::pipeline::{run_pipeline, stage_seed};
use freebreath::recon::{
    baseline_rra, baseline_sos, default_lambda, motion_operator, solve_bsense, solve_mocobel,
    solve_tikhonov_with, TIKHONOV_LAMBDA_SCALE,
};
use freebreath::registration::register_with_log;
use freebreath::selfnav::{bin_shots, extract_signal, navigator_images, BinAssignment};
use freebreath::simulator::simulate;
use freebreath::{Error, Image, Result};

/// Motion-compensated reconstruction of simulated free-breathing multi-shot MRI.
#[derive(Parser, Debug)]
#[command(name = "freebreath", version)]
struct Cli {
    /// Seed overriding the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory overriding the one in the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate phantom, coils, sampling, motion and k-space.
    Simulate,
    /// Extract the respiratory signal and bin the shots.
    Selfnav {
        #[arg(long)]
        kspace: PathBuf,
        /// Width of the fully sampled center block (default: from the configuration).
        #[arg(long)]
        n_center: Option<usize>,
        #[arg(long)]
        n_bins: Option<usize>,
    },
    /// Register the magnitude of one image onto another.
    Register {
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Beltrami SENSE of the shots of one bin.
    Binrecon {
        #[command(flatten)]
        data: DataArgs,
        /// Bin assignment JSON as written by `selfnav`.
        #[arg(long)]
        bins: Option<PathBuf>,
        /// Bin to reconstruct; all shots when no assignment is given.
        #[arg(long, default_value_t = 0)]
        bin: usize,
    },
    /// Motion-compensated Beltrami reconstruction over all shots.
    Mocorecon {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bins: PathBuf,
        #[arg(long)]
        fields: PathBuf,
    },
    /// Comparison reconstructions.
    Baseline {
        #[arg(value_enum)]
        method: BaselineMethod,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long)]
        fields: Option<PathBuf>,
        /// Tikhonov weight (default: a fixed fraction of max|E^H s|).
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// PSNR, SSIM and an optional line profile of a test image against a reference.
    Metrics {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// ProfileSpec JSON.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Full simulation and reconstruction run.
    Pipeline,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    kspace: PathBuf,
    #[arg(long)]
    coils: PathBuf,
    /// Output file stem inside the output directory.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineMethod {
    Sos,
    Rra,
    Tikhonov,
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output_dir = d.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn prov(cfg: &PipelineConfig, command: &str) -> Value {
    json!({"command": command, "seed": cfg.seed})
}

fn save_image(cfg: &PipelineConfig, stem: &str, img: &Image, command: &str) -> Result<()> {
    let out = &cfg.output_dir;
    write_image(&out.join(format!("{stem}.img")), img, &prov(cfg, command))?;
    export_png(img, &out.join(format!("{stem}.png")), DEFAULT_WINDOW)
}

fn load_bins(path: &Path) -> Result<BinAssignment> {
    let b: BinAssignment = read_json(path)?;
    // re-validate and recompute the reference bin
    BinAssignment::new(b.bin_of_shot, b.n_bins)
}

fn run(cli: &Cli) -> Result<Value> {
    let cfg = config(cli)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Simulate => {
            let sim = simulate(
                &cfg.acquisition,
                &cfg.motion,
                stage_seed(cfg.seed, "simulate"),
            )?;
            let p = prov(&cfg, "simulate");
            write_image(&out.join("truth.img"), &sim.truth, &p)?;
            export_png(&sim.truth, &out.join("truth.png"), DEFAULT_WINDOW)?;
            write_coils(&out.join("coils.img"), &sim.coils, &p)?;
            write_kspace(&out.join("kspace.ks"), &sim.kspace, &p)?;
            write_masks(&out.join("masks.mask"), &sim.plan.masks, &p)?;
            write_fields(&out.join("true_fields.fld"), &sim.fields, &p)?;
            write_json(&out.join("motion.json"), &sim.motion)?;
            Ok(json!({"n_shots": sim.kspace.n_shots(), "output_dir": out}))
        }
        Command::Selfnav {
            kspace,
            n_center,
            n_bins,
        } => {
            let ks = read_kspace(kspace)?;
            let navs = navigator_images(&ks, n_center.unwrap_or(cfg.acquisition.n_center_lines))?;
            let signal = extract_signal(&navs)?;
            let bins = bin_shots(&signal, n_bins.unwrap_or(cfg.acquisition.n_bins))?;
            write_json(&out.join("signal.json"), &signal)?;
            export_signal_png(&signal.values, &out.join("signal.png"))?;
            write_json(&out.join("bins.json"), &bins)?;
            Ok(json!({"signal": signal.values, "bins": bins}))
        }
        Command::Register { moving, reference } => {
            let reg = register_with_log(
                &read_image(moving)?,
                &read_image(reference)?,
                &cfg.registration,
            )?;
            write_fields(
                &out.join("field.fld"),
                std::slice::from_ref(&reg.field),
                &prov(&cfg, "register"),
            )?;
            write_json(&out.join("registration_log.json"), &reg.levels)?;
            Ok(json!({"max_displacement": reg.field.max_norm(), "levels": reg.levels}))
        }
        Command::Binrecon { data, bins, bin } => {
            let ks = read_kspace(&data.kspace)?;
            let coils = read_coils(&data.coils)?;
            let ks_b = match bins {
                Some(p) => {
                    let b = load_bins(p)?;
                    if *bin >= b.n_bins {
                        return Err(Error::InvalidArgument(format!("bin {bin} of {}", b.n_bins)));
                    }
                    ks.select_shots(&b.shots_in_bin(*bin))?
                }
                None => ks,
            };
            let (img, rep) = solve_bsense(&ks_b, &coils, &cfg.recon)?;
            let stem = data
                .name
                .clone()
                .unwrap_or_else(|| format!("bsense_{bin:02}"));
            save_image(&cfg, &stem, &img, "binrecon")?;
            write_json(&out.join(format!("{stem}_report.json")), &rep)?;
            Ok(json!({"iterations": rep.iterations, "lambda": rep.lambda}))
        }
        Command::Mocorecon { data, bins, fields } => {
            let ks = read_kspace(&data.kspace)?;
            let coils = read_coils(&data.coils)?;
            let (img, rep) = solve_mocobel(
                &ks,
                &coils,
                &load_bins(bins)?,
                &read_fields(fields)?,
                &cfg.recon,
            )?;
            let stem = data.name.clone().unwrap_or_else(|| "mocobel".into());
            save_image(&cfg, &stem, &img, "mocorecon")?;
            write_json(&out.join(format!("{stem}_report.json")), &rep)?;
            Ok(json!({"iterations": rep.iterations, "lambda": rep.lambda}))
        }
        Command::Baseline {
            method,
            data,
            bins,
            fields,
            lambda,
        } => {
            let ks = read_kspace(&data.kspace)?;
            let coils = read_coils(&data.coils)?;
            let need_bins = || -> Result<BinAssignment> {
                match bins {
                    Some(p) => load_bins(p),
                    None => Err(Error::InvalidArgument("this baseline needs --bins".into())),
                }
            };
            let (stem, img, extra) = match method {
                BaselineMethod::Sos => ("sos", baseline_sos(&ks, &coils)?, Value::Null),
                BaselineMethod::Rra => {
                    let r =
                        baseline_rra(&ks, &coils, &need_bins()?, &cfg.recon, &cfg.registration)?;
                    ("rra", r.image, Value::Null)
                }
                BaselineMethod::Tikhonov => {
                    let b = need_bins()?;
                    let f = match fields {
                        Some(p) => read_fields(p)?,
                        None => {
                            return Err(Error::InvalidArgument("tikhonov needs --fields".into()))
                        }
                    };
                    let (op, d) = motion_operator(&ks, &coils, &b, &f)?;
                    let l = match lambda.or(cfg.tikhonov_lambda) {
                        Some(l) => l,
                        None => default_lambda(&op, &d, TIKHONOV_LAMBDA_SCALE)?,
                    };
                    let (img, rep) = solve_tikhonov_with(&op, &d, l)?;
                    ("tikhonov", img, serde_json::to_value(rep)?)
                }
            };
            let stem = data.name.clone().unwrap_or_else(|| stem.into());
            save_image(&cfg, &stem, &img, "baseline")?;
            Ok(json!({"output": out.join(format!("{stem}.img")), "solver": extra}))
        }
        Command::Metrics {
            test,
            reference,
            profile,
        } => {
            let (t, r) = (read_image(test)?, read_image(reference)?);
            let mut m = json!({"psnr_db": psnr(&t, &r)?, "ssim": ssim(&t, &r)?});
            if let Some(p) = profile {
                let spec: ProfileSpec = read_json(p)?;
                m["profile_test"] = json!(line_profile(&t, &spec)?);
                m["profile_reference"] = json!(line_profile(&r, &spec)?);
            }
            write_json(&out.join("metrics.json"), &m)?;
            Ok(m)
        }
        Command::Pipeline => {
            let summary = run_pipeline(&cfg)?;
            Ok(json!({"scores": summary.scores, "output_dir": out}))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
