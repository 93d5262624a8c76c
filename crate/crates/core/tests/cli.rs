use std::path::Path;
use std::process::{Command, Output};

use freebreath::io::{read_image, read_kspace, write_kspace, PipelineConfig};
use freebreath::metrics::psnr;
use freebreath::model::{KSpaceData, C64};
use freebreath::selfnav::BinAssignment;
use freebreath::{AcquisitionConfig, ReconParams};
use serde_json::Value;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freebreath"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let cfg = PipelineConfig {
        acquisition: AcquisitionConfig {
            nx: 40,
            ny: 40,
            n_coils: 4,
            n_shots: 4,
            n_center_lines: 8,
            n_periphery_lines_per_shot: 10,
            n_bins: 2,
            noise_std: 0.005,
            ..AcquisitionConfig::default()
        },
        recon: ReconParams {
            max_iters: 80,
            ..ReconParams::default()
        },
        output_dir: dir.join("unused"),
        experiment_name: "cli".into(),
        seed: 5,
        ..PipelineConfig::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn subcommands_chain_into_a_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    let c = ["--config", cfg.as_str()];

    let sim = stdout_json(&bin(d, &[&c[..], &["simulate"]].concat()));
    assert_eq!(sim["n_shots"], 4);
    let (ks, coils) = (p(d, "kspace.ks"), p(d, "coils.img"));

    let nav = stdout_json(&bin(d, &[&c[..], &["selfnav", "--kspace", &ks]].concat()));
    assert_eq!(nav["signal"].as_array().unwrap().len(), 4);
    let bins: BinAssignment =
        serde_json::from_str(&std::fs::read_to_string(d.join("bins.json")).unwrap()).unwrap();
    assert_eq!(bins.n_bins, 2);
    let bins_path = p(d, "bins.json");

    for b in ["0", "1"] {
        let args = [
            "binrecon", "--kspace", &ks, "--coils", &coils, "--bins", &bins_path, "--bin", b,
        ];
        let r = stdout_json(&bin(d, &[&c[..], &args].concat()));
        assert!(r["iterations"].as_u64().unwrap() > 0);
    }
    let (b0, b1) = (p(d, "bsense_00.img"), p(d, "bsense_01.img"));
    assert!(read_image(Path::new(&b0)).is_ok());

    let moving = if bins.reference_bin == 0 { &b1 } else { &b0 };
    let reference = if bins.reference_bin == 0 { &b0 } else { &b1 };
    let reg = stdout_json(&bin(
        d,
        &[
            &c[..],
            &["register", "--moving", moving, "--reference", reference],
        ]
        .concat(),
    ));
    assert!(reg["max_displacement"].as_f64().unwrap().is_finite());
    assert!(d.join("registration_log.json").exists());

    // the pipeline writes the per-bin fields that mocorecon and the baselines consume
    let out = stdout_json(&bin(d, &[&c[..], &["pipeline"]].concat()));
    assert!(out["scores"]["mocobel"]["psnr_db"].is_number());
    let fields = p(d, "estimated_fields.fld");
    let m = stdout_json(&bin(
        d,
        &[
            &c[..],
            &[
                "mocorecon",
                "--kspace",
                &ks,
                "--coils",
                &coils,
                "--bins",
                &bins_path,
                "--fields",
                &fields,
                "--name",
                "again",
            ],
        ]
        .concat(),
    ));
    assert!(m["lambda"].as_f64().unwrap() > 0.0);
    // same parameters as the pipeline run; only the f32 storage of the k-space differs
    let agree = psnr(
        &read_image(&d.join("again.img")).unwrap(),
        &read_image(&d.join("mocobel.img")).unwrap(),
    )
    .unwrap();
    assert!(agree > 60.0, "{agree} dB");

    for method in ["sos", "rra", "tikhonov"] {
        let args = [
            "baseline",
            method,
            "--kspace",
            &ks,
            "--coils",
            &coils,
            "--bins",
            &bins_path,
            "--fields",
            &fields,
            "--name",
            &format!("cli_{method}"),
        ];
        stdout_json(&bin(d, &[&c[..], &args].concat()));
        assert!(d.join(format!("cli_{method}.png")).exists());
    }

    let met = stdout_json(&bin(
        d,
        &[
            &c[..],
            &[
                "metrics",
                "--test",
                &p(d, "again.img"),
                "--reference",
                &p(d, "reference_truth.img"),
            ],
        ]
        .concat(),
    ));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    let (a, b) = (
        met["psnr_db"].as_f64().unwrap(),
        summary["scores"]["mocobel"]["psnr_db"].as_f64().unwrap(),
    );
    assert!((a - b).abs() < 0.05, "{a} vs {b}");
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(bin(d, &[]).status.code(), Some(1));
    assert_eq!(bin(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(bin(d, &["selfnav"]).status.code(), Some(1));
    assert_eq!(bin(d, &["--help"]).status.code(), Some(0));

    let bad = d.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"acquisition": {"nx": 64, "ny": 64, "n_coils": 4, "n_shots": 4,
            "n_center_lines": 8, "n_periphery_lines_per_shot": 10, "n_bins": 9,
            "noise_std": 0.0}, "output_dir": "x", "experiment_name": "bad"}"#,
    )
    .unwrap();
    let o = bin(d, &["--config", bad.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_bins"));
}

#[test]
fn unreadable_inputs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let junk = d.join("junk.ks");
    std::fs::write(&junk, b"definitely not k-space").unwrap();
    let o = bin(d, &["selfnav", "--kspace", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = d.join("missing.img");
    let o = bin(
        d,
        &[
            "metrics",
            "--test",
            missing.to_str().unwrap(),
            "--reference",
            missing.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let garbled = d.join("garbled.json");
    std::fs::write(&garbled, "{ nope").unwrap();
    let o = bin(d, &["--config", garbled.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_finite_data_reports_divergence_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    stdout_json(&bin(d, &["--config", &cfg, "simulate"]));
    let ks = read_kspace(&d.join("kspace.ks")).unwrap();
    let mut samples = ks.samples().to_vec();
    samples[3] = C64::new(f64::NAN, 0.0);
    let poisoned = KSpaceData::new(
        ks.nx(),
        ks.ny(),
        ks.n_coils(),
        ks.all_lines().to_vec(),
        samples,
    )
    .unwrap();
    write_kspace(&d.join("nan.ks"), &poisoned, &Value::Null).unwrap();
    let o = bin(
        d,
        &[
            "--config",
            &cfg,
            "binrecon",
            "--kspace",
            &p(d, "nan.ks"),
            "--coils",
            &p(d, "coils.img"),
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
