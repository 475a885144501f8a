//! Benchmark harness: sweep one axis, time the simulation, emit CSV.
//!
//! Wall time covers fusion and gate application (trajectory sampling when
//! noise is involved), never parsing or setup. A memory guard refuses
//! sweeps whose largest state would not fit the configured budget.

use crate::commands::{simulate_noiseless, CliError};
use crate::randcirc::{random_circuit, RandomCircuitSpec};
use serde::Deserialize;
use std::time::Instant;
use trajsim_core::channels;
use trajsim_core::circuit::QubitId;
use trajsim_core::fusion::FuseConfig;
use trajsim_core::noise::{with_noise, PerGateChannelModel};
use trajsim_core::trajectory::{run_trajectory, PreparedCircuit, TrajectoryConfig};
use trajsim_core::{Circuit, SamplingMode};

pub const CSV_HEADER: &str =
    "axis,value,rep,wall_s,gates_raw,gates_fused,inner_products,deferral_fraction";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Qubits,
    Depth,
    NoiseStrength,
    FuseSize,
    Threads,
    Mode,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Qubits => "qubits",
            Axis::Depth => "depth",
            Axis::NoiseStrength => "noise_strength",
            Axis::FuseSize => "fuse_size",
            Axis::Threads => "threads",
            Axis::Mode => "mode",
        }
    }
}

/// One sweep: the axis, its values, and the base circuit parameters.
#[derive(Clone, Debug, Deserialize)]
pub struct BenchSpec {
    pub axis: Axis,
    pub values: Vec<serde_json::Value>,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub circuit: RandomCircuitSpec,
    #[serde(default = "default_fuse")]
    pub fuse_size: usize,
    #[serde(default = "default_mode")]
    pub mode: SamplingMode,
    /// Phase-damping strength for the noisy axes.
    #[serde(default)]
    pub noise_strength: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lanes")]
    pub lanes: usize,
}

fn one() -> usize {
    1
}
fn default_fuse() -> usize {
    4
}
fn default_mode() -> SamplingMode {
    SamplingMode::Delayed
}
fn default_lanes() -> usize {
    8
}

impl BenchSpec {
    pub fn from_json(text: &str) -> Result<BenchSpec, CliError> {
        let spec: BenchSpec = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("bad bench spec: {e}")))?;
        if spec.values.is_empty() {
            return Err(CliError::Validation("bench values must be non-empty".into()));
        }
        if spec.repetitions == 0 {
            return Err(CliError::Validation("repetitions must be at least 1".into()));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug)]
pub struct BenchRecord {
    pub axis: &'static str,
    pub value: String,
    pub rep: usize,
    pub wall_s: f64,
    pub gates_raw: usize,
    pub gates_fused: usize,
    pub inner_products: u64,
    pub deferral_fraction: f64,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.axis,
            self.value,
            self.rep,
            self.wall_s,
            self.gates_raw,
            self.gates_fused,
            self.inner_products,
            self.deferral_fraction
        )
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn value_u64(v: &serde_json::Value) -> Result<u64, CliError> {
    v.as_u64()
        .ok_or_else(|| CliError::Validation(format!("expected integer axis value, got {v}")))
}

fn value_f64(v: &serde_json::Value) -> Result<f64, CliError> {
    v.as_f64()
        .ok_or_else(|| CliError::Validation(format!("expected numeric axis value, got {v}")))
}

/// Largest state the sweep will allocate, times two when trajectory noise
/// requires scratch (phase damping is not a unitary mixture).
fn peak_memory_bytes(spec: &BenchSpec) -> Result<u64, CliError> {
    let mut max_qubits = spec.circuit.qubits as u64;
    if spec.axis == Axis::Qubits {
        for v in &spec.values {
            max_qubits = max_qubits.max(value_u64(v)?);
        }
    }
    let noisy = matches!(spec.axis, Axis::NoiseStrength | Axis::Mode) || spec.noise_strength.is_some();
    let state = 8u64 << max_qubits;
    Ok(if noisy { state * 2 } else { state })
}

/// Noisy phase-damping circuit for the trajectory-timed axes.
fn noisy_circuit(base: &Circuit, gamma: f64) -> Result<Circuit, CliError> {
    let model = PerGateChannelModel::new(
        channels::phase_damp(gamma, QubitId(0))
            .map_err(|e| CliError::Validation(e.to_string()))?,
    );
    with_noise(base, &model).map_err(|e| CliError::Validation(e.to_string()))
}

fn timed_noiseless(
    circuit: &Circuit,
    fuse_size: usize,
    lanes: usize,
) -> Result<(f64, usize, usize), CliError> {
    let cfg = FuseConfig::new(fuse_size).map_err(|e| CliError::Validation(e.to_string()))?;
    let (_, stats) = simulate_noiseless::<f32>(circuit, cfg, lanes)?;
    Ok((stats.wall_s, stats.gates_raw, stats.gates_fused))
}

/// Time one trajectory of a noisy circuit; returns (wall_s, stats).
fn timed_trajectory(
    circuit: &Circuit,
    spec: &BenchSpec,
    mode: SamplingMode,
    rep: usize,
) -> Result<(f64, trajsim_core::trajectory::TrajStats), CliError> {
    let cfg = TrajectoryConfig {
        trajectories: 1,
        base_seed: spec.seed,
        mode,
        observables: Vec::new(),
        histogram_shots: None,
        fuse: FuseConfig::new(spec.fuse_size).map_err(|e| CliError::Validation(e.to_string()))?,
        lanes: spec.lanes,
    };
    let prepared = PreparedCircuit::new(circuit);
    let start = Instant::now();
    let record = run_trajectory::<f32>(&prepared, &cfg, rep)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((start.elapsed().as_secs_f64(), record.stats))
}

/// Run the sweep. One record per (axis value, repetition).
pub fn run_bench(spec: &BenchSpec, budget_bytes: u64) -> Result<Vec<BenchRecord>, CliError> {
    let required = peak_memory_bytes(spec)?;
    if required > budget_bytes {
        return Err(CliError::Resource(format!(
            "sweep needs {required} bytes for its largest state, budget is {budget_bytes} \
             (set TRAJSIM_MEM_BUDGET_BYTES)"
        )));
    }
    let mut records = Vec::new();
    for value in &spec.values {
        for rep in 0..spec.repetitions {
            let record = match spec.axis {
                Axis::Qubits => {
                    let n = value_u64(value)? as usize;
                    let circuit = random_circuit(&RandomCircuitSpec {
                        qubits: n,
                        ..spec.circuit
                    });
                    let (wall_s, raw, fused) =
                        timed_noiseless(&circuit, spec.fuse_size, spec.lanes)?;
                    base_record(spec.axis, n.to_string(), rep, wall_s, raw, fused)
                }
                Axis::Depth => {
                    let depth = value_u64(value)? as usize;
                    let circuit = random_circuit(&RandomCircuitSpec {
                        depth,
                        ..spec.circuit
                    });
                    let (wall_s, raw, fused) =
                        timed_noiseless(&circuit, spec.fuse_size, spec.lanes)?;
                    base_record(spec.axis, depth.to_string(), rep, wall_s, raw, fused)
                }
                Axis::FuseSize => {
                    let f = value_u64(value)? as usize;
                    let circuit = random_circuit(&spec.circuit);
                    let (wall_s, raw, fused) = timed_noiseless(&circuit, f, spec.lanes)?;
                    base_record(spec.axis, f.to_string(), rep, wall_s, raw, fused)
                }
                Axis::Threads => {
                    let t = value_u64(value)? as usize;
                    let circuit = random_circuit(&spec.circuit);
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(t.max(1))
                        .build()
                        .map_err(|e| CliError::Validation(e.to_string()))?;
                    let (wall_s, raw, fused) =
                        pool.install(|| timed_noiseless(&circuit, spec.fuse_size, spec.lanes))?;
                    base_record(spec.axis, t.to_string(), rep, wall_s, raw, fused)
                }
                Axis::NoiseStrength => {
                    let gamma = value_f64(value)?;
                    let base = random_circuit(&spec.circuit);
                    let circuit = noisy_circuit(&base, gamma)?;
                    let (wall_s, stats) = timed_trajectory(&circuit, spec, spec.mode, rep)?;
                    noisy_record(spec.axis, format!("{gamma}"), rep, wall_s, &base, stats)
                }
                Axis::Mode => {
                    let mode = match value.as_str() {
                        Some("delayed") => SamplingMode::Delayed,
                        Some("conventional") => SamplingMode::Conventional,
                        other => {
                            return Err(CliError::Validation(format!(
                                "bad mode axis value {other:?}"
                            )))
                        }
                    };
                    let gamma = spec.noise_strength.unwrap_or(0.01);
                    let base = random_circuit(&spec.circuit);
                    let circuit = noisy_circuit(&base, gamma)?;
                    let (wall_s, stats) = timed_trajectory(&circuit, spec, mode, rep)?;
                    noisy_record(
                        spec.axis,
                        value.as_str().unwrap().to_string(),
                        rep,
                        wall_s,
                        &base,
                        stats,
                    )
                }
            };
            records.push(record);
        }
    }
    Ok(records)
}

fn base_record(
    axis: Axis,
    value: String,
    rep: usize,
    wall_s: f64,
    gates_raw: usize,
    gates_fused: usize,
) -> BenchRecord {
    BenchRecord {
        axis: axis.name(),
        value,
        rep,
        wall_s,
        gates_raw,
        gates_fused,
        inner_products: 0,
        deferral_fraction: 0.0,
    }
}

fn noisy_record(
    axis: Axis,
    value: String,
    rep: usize,
    wall_s: f64,
    base: &Circuit,
    stats: trajsim_core::trajectory::TrajStats,
) -> BenchRecord {
    BenchRecord {
        axis: axis.name(),
        value,
        rep,
        wall_s,
        gates_raw: base.count_gates(),
        gates_fused: stats.fused_applied as usize,
        inner_products: stats.inner_products,
        deferral_fraction: stats.deferral_fraction(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randcirc::TwoQubitGate;

    fn small_spec(axis: Axis, values: Vec<serde_json::Value>) -> BenchSpec {
        BenchSpec {
            axis,
            values,
            repetitions: 2,
            circuit: RandomCircuitSpec {
                qubits: 6,
                depth: 8,
                seed: 5,
                gate_set: TwoQubitGate::SqrtIswap,
            },
            fuse_size: 4,
            mode: SamplingMode::Delayed,
            noise_strength: None,
            seed: 3,
            lanes: 8,
        }
    }

    #[test]
    fn row_count_and_header() {
        let spec = small_spec(
            Axis::Qubits,
            vec![serde_json::json!(4), serde_json::json!(6)],
        );
        let records = run_bench(&spec, u64::MAX).unwrap();
        assert_eq!(records.len(), 4); // |range| × repetitions
        let csv = to_csv(&records);
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn memory_guard_boundary() {
        let spec = small_spec(Axis::Qubits, vec![serde_json::json!(10)]);
        // 8·2^10 = 8192 bytes: exactly at budget passes, one below refuses.
        assert!(run_bench(&spec, 8192).is_ok());
        let err = run_bench(&spec, 8191).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn memory_guard_doubles_for_noise() {
        let spec = small_spec(Axis::NoiseStrength, vec![serde_json::json!(0.01)]);
        // Noisy sweeps need 2 × 8·2^6 = 1024 bytes.
        assert!(run_bench(&spec, 1024).is_ok());
        assert_eq!(run_bench(&spec, 1023).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn noise_axis_reports_deferral() {
        let spec = small_spec(
            Axis::NoiseStrength,
            vec![serde_json::json!(0.001), serde_json::json!(0.5)],
        );
        let records = run_bench(&spec, u64::MAX).unwrap();
        // Deferral fraction decreases as the noise grows.
        assert!(records[0].deferral_fraction > records[2].deferral_fraction);
        assert!(records[2].inner_products > 0);
    }

    #[test]
    fn mode_axis_parses_strings() {
        let mut spec = small_spec(
            Axis::Mode,
            vec![
                serde_json::json!("delayed"),
                serde_json::json!("conventional"),
            ],
        );
        spec.noise_strength = Some(0.05);
        spec.repetitions = 1;
        let records = run_bench(&spec, u64::MAX).unwrap();
        assert_eq!(records[0].value, "delayed");
        assert_eq!(records[1].value, "conventional");
        // Conventional mode always computes inner products.
        assert!(records[1].inner_products >= records[0].inner_products);
    }

    #[test]
    fn spec_json_parsing() {
        let text = r#"{
            "axis": "depth",
            "values": [10, 20],
            "circuit": {"qubits": 5, "depth": 10, "seed": 1}
        }"#;
        let spec = BenchSpec::from_json(text).unwrap();
        assert_eq!(spec.axis, Axis::Depth);
        assert_eq!(spec.repetitions, 1);
        assert_eq!(spec.fuse_size, 4);
        assert!(BenchSpec::from_json("{\"axis\": \"depth\"}").is_err());
    }
}
