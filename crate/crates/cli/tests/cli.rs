//! End-to-end tests of the CLI commands, both in-process and through the
//! binary (for exit codes).

use std::path::PathBuf;
use std::process::Command;
use trajsim_cli::commands::{
    cmd_run, cmd_trajectories, PrecisionOpt, RunOptions, TrajOptions,
};

fn write_bell(dir: &std::path::Path) -> PathBuf {
    // H(0), H(1), CZ, H(1) builds (|00> + |11>)/sqrt(2).
    let doc = r#"{
        "n_qubits": 2,
        "moments": [
            [{"gate": "H", "qubits": [0]}, {"gate": "H", "qubits": [1]}],
            [{"gate": "CZ", "qubits": [0, 1]}],
            [{"gate": "H", "qubits": [1]}]
        ]
    }"#;
    let path = dir.join("bell.json");
    std::fs::write(&path, doc).unwrap();
    path
}

#[test]
fn run_bell_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        circuit: write_bell(dir.path()),
        ..Default::default()
    };
    let out = cmd_run(&opts).unwrap();
    let amps = out.amplitudes.unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!((amps[0][0] - s).abs() < 1e-6);
    assert!(amps[1][0].abs() < 1e-6 && amps[2][0].abs() < 1e-6);
    assert!((amps[3][0] - s).abs() < 1e-6);
}

#[test]
fn run_bell_samples_only_00_and_11() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        circuit: write_bell(dir.path()),
        amps_threshold: 0,
        shots: 500,
        seed: 7,
        ..Default::default()
    };
    let out = cmd_run(&opts).unwrap();
    let samples = out.samples.unwrap();
    assert_eq!(samples.len(), 500);
    assert!(samples.iter().all(|s| s == "00" || s == "11"));
    let ones = samples.iter().filter(|s| *s == "11").count();
    assert!(ones > 150 && ones < 350);
}

#[test]
fn fuse_size_does_not_change_samples() {
    let dir = tempfile::tempdir().unwrap();
    let spec = trajsim_cli::randcirc::RandomCircuitSpec {
        qubits: 11,
        depth: 12,
        seed: 3,
        gate_set: trajsim_cli::randcirc::TwoQubitGate::SqrtIswap,
    };
    let circuit = trajsim_cli::randcirc::random_circuit(&spec);
    let path = dir.path().join("c.json");
    std::fs::write(&path, circuit.to_json()).unwrap();
    let run = |f: usize| {
        cmd_run(&RunOptions {
            circuit: path.clone(),
            max_fuse_size: f,
            seed: 11,
            amps_threshold: 0,
            shots: 64,
            ..Default::default()
        })
        .unwrap()
        .samples
        .unwrap()
    };
    // Same seed, different fusion: sampling sees the same distribution and
    // the same rng stream, so identical samples are expected.
    assert_eq!(run(2), run(4));
}

#[test]
fn double_precision_matches_single() {
    let dir = tempfile::tempdir().unwrap();
    let spec = trajsim_cli::randcirc::RandomCircuitSpec {
        qubits: 8,
        depth: 16,
        seed: 5,
        gate_set: trajsim_cli::randcirc::TwoQubitGate::Cz,
    };
    let circuit = trajsim_cli::randcirc::random_circuit(&spec);
    let path = dir.path().join("c.json");
    std::fs::write(&path, circuit.to_json()).unwrap();
    let amps = |precision: PrecisionOpt| {
        cmd_run(&RunOptions {
            circuit: path.clone(),
            precision,
            ..Default::default()
        })
        .unwrap()
        .amplitudes
        .unwrap()
    };
    let single = amps(PrecisionOpt::Single);
    let double = amps(PrecisionOpt::Double);
    for (a, b) in single.iter().zip(&double) {
        assert!((a[0] - b[0]).abs() < 1e-4 && (a[1] - b[1]).abs() < 1e-4);
    }
}

#[test]
fn trajectories_single_record_has_no_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrajOptions {
        circuit: write_bell(dir.path()),
        trajectories: 1,
        workers: 1,
        out_dir: dir.path().join("out"),
        ..Default::default()
    };
    let summary = cmd_trajectories(&opts).unwrap();
    assert_eq!(summary.trajectories, 1);
    for est in summary.observables.values() {
        assert_eq!(est.r, 1);
        assert!(est.stderr.is_none());
    }
    let text = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert!(!text.contains("stderr"));
}

#[test]
fn trajectories_worker_count_invariant_summaries() {
    let dir = tempfile::tempdir().unwrap();
    // A circuit with actual noise so trajectories differ.
    let doc = r#"{
        "n_qubits": 2,
        "moments": [
            [{"gate": "H", "qubits": [0]}],
            [{"channel": "amplitude_damp", "qubits": [0], "params": {"gamma": 0.2}}],
            [{"gate": "CZ", "qubits": [0, 1]}]
        ]
    }"#;
    let path = dir.path().join("noisy.json");
    std::fs::write(&path, doc).unwrap();
    let summary_bytes = |workers: usize, out: &str| {
        let opts = TrajOptions {
            circuit: path.clone(),
            trajectories: 200,
            seed: 9,
            workers,
            chunk: 31,
            out_dir: dir.path().join(out),
            ..Default::default()
        };
        cmd_trajectories(&opts).unwrap();
        std::fs::read(dir.path().join(out).join("summary.json")).unwrap()
    };
    let one = summary_bytes(1, "o1");
    let eight = summary_bytes(8, "o8");
    assert_eq!(one, eight);
}

#[test]
fn modes_agree_within_combined_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"{
        "n_qubits": 2,
        "moments": [
            [{"gate": "H", "qubits": [0]}, {"gate": "H", "qubits": [1]}],
            [{"channel": "amplitude_damp", "qubits": [0], "params": {"gamma": 0.3}},
             {"channel": "phase_damp", "qubits": [1], "params": {"gamma": 0.2}}],
            [{"gate": "CZ", "qubits": [0, 1]}]
        ]
    }"#;
    let path = dir.path().join("c.json");
    std::fs::write(&path, doc).unwrap();
    let run = |mode: trajsim_core::SamplingMode, out: &str| {
        cmd_trajectories(&TrajOptions {
            circuit: path.clone(),
            trajectories: 4000,
            seed: 21,
            workers: 2,
            mode,
            out_dir: dir.path().join(out),
            ..Default::default()
        })
        .unwrap()
    };
    let delayed = run(trajsim_core::SamplingMode::Delayed, "d");
    let conventional = run(trajsim_core::SamplingMode::Conventional, "c");
    for (key, d) in &delayed.observables {
        let c = &conventional.observables[key];
        let combined = (d.stderr.unwrap().powi(2) + c.stderr.unwrap().powi(2)).sqrt();
        assert!(
            (d.mean - c.mean).abs() < 4.0 * combined,
            "{key}: {} vs {} (combined stderr {combined})",
            d.mean,
            c.mean
        );
    }
}

#[test]
fn trajectories_with_calibration_and_resampling() {
    let dir = tempfile::tempdir().unwrap();
    let cal = r#"{
        "qubits": {
            "0": {"t1_us": 20.0, "tphi_us": 30.0, "p00_err": 0.01, "p11_err": 0.05},
            "1": {"t1_us": 25.0, "tphi_us": 35.0, "p00_err": 0.01, "p11_err": 0.05}
        },
        "pairs": {
            "0-1": {"dtheta_rad": 0.02, "dphi_rad": 0.03,
                     "zphase_mean_rad": 0.01, "zphase_std_rad": 0.004,
                     "xeb_pauli_err": 0.01}
        },
        "durations_ns": {"1q": 25, "2q": 32, "measure": 4000}
    }"#;
    let cal_path = dir.path().join("cal.json");
    std::fs::write(&cal_path, cal).unwrap();

    let circuit = r#"{
        "n_qubits": 2,
        "moments": [
            [{"gate": "H", "qubits": [0]}],
            [{"gate": "SQRT_ISWAP", "qubits": [0, 1]}],
            [{"measure": [0, 1], "key": "m"}]
        ]
    }"#;
    let path = dir.path().join("c.json");
    std::fs::write(&path, circuit).unwrap();

    for (resample, out) in [(false, "fixed"), (true, "resampled")] {
        let opts = TrajOptions {
            circuit: path.clone(),
            calibration: Some(cal_path.clone()),
            trajectories: 50,
            workers: 2,
            chunk: 16,
            out_dir: dir.path().join(out),
            resample_zphases: resample,
            ..Default::default()
        };
        let summary = cmd_trajectories(&opts).unwrap();
        assert_eq!(summary.trajectories, 50);
    }
}

#[test]
fn histogram_shots_merge_into_summary() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrajOptions {
        circuit: write_bell(dir.path()),
        trajectories: 20,
        histogram_shots: Some(8),
        workers: 2,
        chunk: 7,
        out_dir: dir.path().join("out"),
        ..Default::default()
    };
    let summary = cmd_trajectories(&opts).unwrap();
    let hist = summary.histogram.unwrap();
    assert_eq!(hist.values().sum::<u64>(), 20 * 8);
    assert!(hist.keys().all(|k| k == "00" || k == "11"));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajsim"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Usage error: unknown flag.
    let status = bin().arg("--wat").status().unwrap();
    assert_eq!(status.code(), Some(1));

    // Validation error: missing circuit file.
    let status = bin().args(["run", "/nonexistent.json"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Validation error: malformed circuit.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n_qubits\": 1, \"moments\": [[{\"gate\": \"NOPE\", \"qubits\": [0]}]]}")
        .unwrap();
    let status = bin().args(["run"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Resource guard: 30-qubit state against a 1 KiB budget.
    let spec = dir.path().join("bench.json");
    std::fs::write(
        &spec,
        r#"{"axis": "qubits", "values": [30],
            "circuit": {"qubits": 30, "depth": 2, "seed": 0}}"#,
    )
    .unwrap();
    let status = bin()
        .env("TRAJSIM_MEM_BUDGET_BYTES", "1024")
        .args(["bench"])
        .arg(&spec)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Success path.
    let bell = write_bell(dir.path());
    let output = bin().args(["run"]).arg(&bell).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(parsed["n_qubits"], 2);
}

#[test]
fn bench_csv_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bench.json");
    std::fs::write(
        &spec,
        r#"{"axis": "fuse_size", "values": [2, 3], "repetitions": 2,
            "circuit": {"qubits": 6, "depth": 6, "seed": 2}}"#,
    )
    .unwrap();
    let output = bin().args(["bench"]).arg(&spec).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8(output.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis,value,rep,wall_s,gates_raw,gates_fused,inner_products,deferral_fraction"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn state_dump_roundtrip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let bell = write_bell(dir.path());
    let dump = dir.path().join("state.qsv");
    let plan = dir.path().join("plan.json");
    cmd_run(&RunOptions {
        circuit: bell,
        dump_state: Some(dump.clone()),
        dump_fusion_plan: Some(plan.clone()),
        ..Default::default()
    })
    .unwrap();
    let bytes = std::fs::read(&dump).unwrap();
    assert_eq!(&bytes[0..4], b"QSV1");
    let mut cursor = std::io::Cursor::new(bytes);
    let state: trajsim_core::StateVector<f32> =
        trajsim_core::StateVector::load(&mut cursor).unwrap();
    assert_eq!(state.n_qubits(), 2);
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert!(!plan.as_array().unwrap().is_empty());
}
