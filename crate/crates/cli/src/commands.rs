//! Implementations behind the CLI subcommands, separated from argument
//! parsing so the test suites can drive them directly.

use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;
use trajsim_core::circuit::Operation;
use trajsim_core::farm::{
    self, job_memory_bytes, partition, FarmConfig, FarmSummary, JobExecutor,
};
use trajsim_core::fusion::{fuse, plan_json, FuseConfig, FusibleGate};
use trajsim_core::kernel::apply_gate;
use trajsim_core::noise::with_noise;
use trajsim_core::qcs::{build_noise_model, CalibrationData, QcsNoiseModel, QcsOptions, ZPhaseCadence};
use trajsim_core::state::{Layout, Real};
use trajsim_core::trajectory::{run_range, PreparedCircuit, TrajectoryRecord};
use trajsim_core::{Circuit, PauliString, StateVector, TrajectoryConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum PrecisionOpt {
    #[default]
    Single,
    Double,
}

impl PrecisionOpt {
    pub fn bytes(self) -> usize {
        match self {
            PrecisionOpt::Single => 4,
            PrecisionOpt::Double => 8,
        }
    }
}

pub fn load_circuit(path: &Path) -> Result<Circuit, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Circuit::from_json(&text).map_err(validation)
}

pub fn load_calibration(path: &Path) -> Result<CalibrationData, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    CalibrationData::from_json(&text).map_err(validation)
}

/// The memory budget for state allocations, from TRAJSIM_MEM_BUDGET_BYTES
/// (default 4 GiB).
pub fn memory_budget_bytes() -> u64 {
    std::env::var("TRAJSIM_MEM_BUDGET_BYTES")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(4 << 30)
}

#[derive(Clone, Debug, Default)]
pub struct SimStats {
    pub gates_raw: usize,
    pub gates_fused: usize,
    pub wall_s: f64,
    pub plan: serde_json::Value,
}

/// Noiseless fused simulation of a circuit's gates. Measurements are
/// ignored (the final state is reported instead); channels are rejected.
/// Timing covers fusion and gate application, not parsing or state setup.
pub fn simulate_noiseless<P: Real>(
    circuit: &Circuit,
    fuse_cfg: FuseConfig,
    lanes: usize,
) -> Result<(StateVector<P>, SimStats), CliError> {
    let mut gates = Vec::new();
    for moment in &circuit.moments {
        for op in &moment.operations {
            match op {
                Operation::Gate(g) => gates.push(FusibleGate {
                    id: gates.len(),
                    qubits: g.qubits.iter().map(|q| q.0).collect(),
                    matrix: Arc::new(g.matrix.clone()),
                }),
                Operation::Channel(_) => {
                    return Err(CliError::Validation(
                        "circuit contains channels; use the `trajectories` command".into(),
                    ))
                }
                Operation::Measure(_) => {}
            }
        }
    }
    let layout = Layout::blocked(lanes).map_err(validation)?;
    let mut state: StateVector<P> = StateVector::zero_state(circuit.n_qubits, layout);
    let start = Instant::now();
    let fused = fuse(&gates, &fuse_cfg).map_err(validation)?;
    for fg in &fused {
        apply_gate(&mut state, &fg.matrix(), &fg.qubits).map_err(validation)?;
    }
    let wall_s = start.elapsed().as_secs_f64();
    Ok((
        state,
        SimStats {
            gates_raw: gates.len(),
            gates_fused: fused.len(),
            wall_s,
            plan: plan_json(&fused),
        },
    ))
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub circuit: PathBuf,
    pub shots: usize,
    pub seed: u64,
    pub precision: PrecisionOpt,
    pub max_fuse_size: usize,
    pub lanes: usize,
    /// Print amplitudes when n is at most this; otherwise sample.
    pub amps_threshold: usize,
    pub dump_state: Option<PathBuf>,
    pub dump_fusion_plan: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            circuit: PathBuf::new(),
            shots: 1000,
            seed: 0,
            precision: PrecisionOpt::Single,
            max_fuse_size: 4,
            lanes: 8,
            amps_threshold: 10,
            dump_state: None,
            dump_fusion_plan: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutput {
    pub n_qubits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<String>>,
    pub gates_raw: usize,
    pub gates_fused: usize,
    pub wall_s: f64,
}

pub fn cmd_run(opts: &RunOptions) -> Result<RunOutput, CliError> {
    let circuit = load_circuit(&opts.circuit)?;
    let required = 2 * opts.precision.bytes() as u64 * (1u64 << circuit.n_qubits);
    let budget = memory_budget_bytes();
    if required > budget {
        return Err(CliError::Resource(format!(
            "state needs {required} bytes, budget is {budget} (set TRAJSIM_MEM_BUDGET_BYTES)"
        )));
    }
    let fuse_cfg = FuseConfig::new(opts.max_fuse_size).map_err(validation)?;
    match opts.precision {
        PrecisionOpt::Single => run_with::<f32>(&circuit, opts, fuse_cfg),
        PrecisionOpt::Double => run_with::<f64>(&circuit, opts, fuse_cfg),
    }
}

fn run_with<P: Real>(
    circuit: &Circuit,
    opts: &RunOptions,
    fuse_cfg: FuseConfig,
) -> Result<RunOutput, CliError> {
    let (state, stats) = simulate_noiseless::<P>(circuit, fuse_cfg, opts.lanes)?;
    if let Some(path) = &opts.dump_fusion_plan {
        std::fs::write(path, serde_json::to_string_pretty(&stats.plan).unwrap())
            .map_err(validation)?;
    }
    if let Some(path) = &opts.dump_state {
        let mut file = std::fs::File::create(path).map_err(validation)?;
        state.dump(&mut file).map_err(validation)?;
    }
    let mut output = RunOutput {
        n_qubits: circuit.n_qubits,
        amplitudes: None,
        samples: None,
        gates_raw: stats.gates_raw,
        gates_fused: stats.gates_fused,
        wall_s: stats.wall_s,
    };
    if circuit.n_qubits <= opts.amps_threshold {
        output.amplitudes = Some(
            state
                .amplitudes()
                .iter()
                .map(|a| [a.re, a.im])
                .collect(),
        );
    } else {
        let mut rng = trajsim_core::trajectory::trajectory_rng(opts.seed, 0);
        output.samples = Some(
            state
                .sample_bitstrings(opts.shots, &mut rng)
                .map_err(validation)?,
        );
    }
    Ok(output)
}

#[derive(Clone, Debug)]
pub struct TrajOptions {
    pub circuit: PathBuf,
    pub calibration: Option<PathBuf>,
    pub trajectories: usize,
    pub seed: u64,
    pub workers: usize,
    pub mode: trajsim_core::SamplingMode,
    /// Comma-separated Pauli strings; defaults to Z on every qubit.
    pub observables: Option<String>,
    pub histogram_shots: Option<usize>,
    pub max_fuse_size: usize,
    pub lanes: usize,
    pub precision: PrecisionOpt,
    pub chunk: usize,
    pub out_dir: PathBuf,
    /// Redraw pair Z-phase errors for every trajectory.
    pub resample_zphases: bool,
    /// Farm configuration JSON ({limit, chunk, tick_ms, retries});
    /// --workers and --chunk override its limit and chunk.
    pub farm_config: Option<PathBuf>,
}

impl Default for TrajOptions {
    fn default() -> Self {
        TrajOptions {
            circuit: PathBuf::new(),
            calibration: None,
            trajectories: 1000,
            seed: 0,
            workers: 4,
            mode: trajsim_core::SamplingMode::Delayed,
            observables: None,
            histogram_shots: None,
            max_fuse_size: 4,
            lanes: 8,
            precision: PrecisionOpt::Single,
            chunk: 256,
            out_dir: PathBuf::from("out"),
            resample_zphases: false,
            farm_config: None,
        }
    }
}

pub fn parse_observables(spec: Option<&str>, n_qubits: usize) -> Result<Vec<PauliString>, CliError> {
    match spec {
        Some(text) => text
            .split(',')
            .map(|s| PauliString::parse(s.trim()).map_err(validation))
            .collect(),
        None => (0..n_qubits)
            .map(|q| PauliString::parse(&format!("Z{q}")).map_err(validation))
            .collect(),
    }
}

/// Executor that rebuilds the noisy circuit per trajectory with freshly
/// sampled Z phases (the per-trajectory cadence of the noise model).
struct ResamplingExecutor<P: Real> {
    clean: Circuit,
    model: QcsNoiseModel,
    cfg: TrajectoryConfig,
    _marker: std::marker::PhantomData<P>,
}

impl<P: Real> JobExecutor for ResamplingExecutor<P> {
    fn run(&self, job: &farm::Job) -> Result<Vec<TrajectoryRecord>, String> {
        let mut records = Vec::with_capacity(job.len());
        for index in job.start..job.end {
            let zphase_seed = self
                .cfg
                .base_seed
                .wrapping_add((index as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let model = self.model.resampled(zphase_seed).map_err(|e| e.to_string())?;
            let noisy = with_noise(&self.clean, &model).map_err(|e| e.to_string())?;
            let prepared = PreparedCircuit::new(&noisy);
            records.extend(
                run_range::<P>(&prepared, &self.cfg, index..index + 1)
                    .map_err(|e| e.to_string())?,
            );
        }
        Ok(records)
    }
}

pub fn cmd_trajectories(opts: &TrajOptions) -> Result<FarmSummary, CliError> {
    let clean = load_circuit(&opts.circuit)?;
    let model = match &opts.calibration {
        Some(path) => {
            let cal = load_calibration(path)?;
            let cadence = if opts.resample_zphases {
                ZPhaseCadence::PerTrajectory
            } else {
                ZPhaseCadence::FixedPerCalibration
            };
            Some(
                build_noise_model(
                    &cal,
                    QcsOptions {
                        zphase_seed: opts.seed,
                        cadence,
                    },
                )
                .map_err(validation)?,
            )
        }
        None => None,
    };
    let circuit = match &model {
        Some(m) => with_noise(&clean, m).map_err(validation)?,
        None => clean.clone(),
    };

    let observables = parse_observables(opts.observables.as_deref(), circuit.n_qubits)?;
    let cfg = TrajectoryConfig {
        trajectories: opts.trajectories,
        base_seed: opts.seed,
        mode: opts.mode,
        observables,
        histogram_shots: opts.histogram_shots,
        fuse: FuseConfig::new(opts.max_fuse_size).map_err(validation)?,
        lanes: opts.lanes,
    };
    let base_farm = match &opts.farm_config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Validation(format!("cannot read {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("bad farm config: {e}")))?
        }
        None => FarmConfig {
            tick_ms: 5,
            ..Default::default()
        },
    };
    let farm_cfg = FarmConfig {
        limit: opts.workers.max(1),
        chunk: opts.chunk,
        ..base_farm
    };

    let summary = if opts.resample_zphases {
        let model = model.ok_or_else(|| {
            CliError::Usage("--resample-zphases requires --calibration".into())
        })?;
        let jobs = partition(
            cfg.trajectories,
            farm_cfg.chunk,
            job_memory_bytes(&circuit, opts.precision.bytes()),
        );
        let observables = cfg.observables.clone();
        let executor: Arc<dyn JobExecutor> = match opts.precision {
            PrecisionOpt::Single => Arc::new(ResamplingExecutor::<f32> {
                clean,
                model,
                cfg,
                _marker: std::marker::PhantomData,
            }),
            PrecisionOpt::Double => Arc::new(ResamplingExecutor::<f64> {
                clean,
                model,
                cfg,
                _marker: std::marker::PhantomData,
            }),
        };
        farm::run_farm_with_executor(jobs, executor, &farm_cfg, &observables, &opts.out_dir)
    } else {
        match opts.precision {
            PrecisionOpt::Single => farm::run_farm::<f32>(&circuit, &cfg, &farm_cfg, &opts.out_dir),
            PrecisionOpt::Double => farm::run_farm::<f64>(&circuit, &cfg, &farm_cfg, &opts.out_dir),
        }
    }
    .map_err(validation)?;
    Ok(summary)
}
