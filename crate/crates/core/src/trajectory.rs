//! Quantum-trajectory simulation with delayed inner products.
//!
//! A trajectory applies one sampled Kraus operator per channel. Sampling
//! uses a per-operator lower bound: the smallest singular value squared of
//! K_i bounds the selection probability p_i = ⟨Ψ|K_i†K_i|Ψ⟩ from below for
//! every state. When the random draw lands inside the summed lower bounds,
//! the operator is chosen without computing any inner product and its
//! application is deferred into the pending gate stream, where fusion picks
//! it up. Only when the draw lands in the residual mass do we flush the
//! pending stream and fall back to the conventional pass over exact
//! probabilities. For mixtures of unitaries the bounds sum to one and every
//! channel defers.

use crate::circuit::{ChannelOp, Circuit, Operation, ReadoutError};
use crate::fusion::{fuse, FuseConfig, FusibleGate, FusionError};
use crate::kernel::{apply_gate, expectation_kkdag};
use crate::matrix::{hermitian_eigenvalues, CMatrix};
use crate::pauli::PauliString;
use crate::state::{EngineError, Layout, Real, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Residual probability mass tolerated before a failed Kraus selection is
/// treated as an error rather than floating-point leakage.
pub const LEAK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("kraus sampling leaked probability {residual:.3e} (exceeds {LEAK_TOLERANCE:.0e})")]
    NumericalLeak { residual: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// σ_min(K)²: the smallest singular value squared, a state-independent lower
/// bound on ⟨Ψ|K†K|Ψ⟩. Closed form for 2x2, cyclic Jacobi on K†K above.
pub fn kraus_lower_bound(k: &CMatrix) -> f64 {
    match k.dim() {
        1 => k[(0, 0)].norm_sqr(),
        2 => {
            let t: f64 = k.data().iter().map(|c| c.norm_sqr()).sum();
            let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
            let d = det.norm_sqr();
            let disc = (t * t - 4.0 * d).max(0.0).sqrt();
            ((t - disc) / 2.0).max(0.0)
        }
        _ => hermitian_eigenvalues(&k.dagger().matmul(k))[0].max(0.0),
    }
}

/// A channel with precomputed sampling lower bounds.
#[derive(Clone, Debug)]
pub struct BoundedKraus {
    pub channel: Arc<ChannelOp>,
    /// p̄_i per operator.
    pub lower_bounds: Vec<f64>,
    /// Σ p̄_i; equals 1 (within 1e-9) for mixtures of unitaries.
    pub s: f64,
    /// K_i / √p̄_i, the deferred form (exactly unitary for unitary
    /// mixtures); `None` for operators with a vanishing bound, which can
    /// never be picked by the deferred branch.
    rescaled: Vec<Option<Arc<CMatrix>>>,
}

impl BoundedKraus {
    pub fn new(channel: ChannelOp) -> Self {
        let lower_bounds: Vec<f64> = channel.kraus.iter().map(kraus_lower_bound).collect();
        let s = lower_bounds.iter().sum();
        let rescaled = channel
            .kraus
            .iter()
            .zip(&lower_bounds)
            .map(|(k, &pb)| {
                (pb > 0.0).then(|| {
                    Arc::new(k.scale(num_complex::Complex64::new(1.0 / pb.sqrt(), 0.0)))
                })
            })
            .collect();
        BoundedKraus {
            channel: Arc::new(channel),
            lower_bounds,
            s,
            rescaled,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Delayed,
    Conventional,
}

/// What to compute over the trajectories.
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    /// Number of trajectories r.
    pub trajectories: usize,
    pub base_seed: u64,
    pub mode: SamplingMode,
    pub observables: Vec<PauliString>,
    /// Sample this many bitstrings from each trajectory's final state.
    pub histogram_shots: Option<usize>,
    pub fuse: FuseConfig,
    /// Lane count of the blocked state layout.
    pub lanes: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            trajectories: 1,
            base_seed: 0,
            mode: SamplingMode::Delayed,
            observables: Vec::new(),
            histogram_shots: None,
            fuse: FuseConfig::default(),
            lanes: 8,
        }
    }
}

/// Instrumentation counters for one or many trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrajStats {
    pub channel_events: u64,
    /// Channel events resolved purely from lower bounds.
    pub deferrals: u64,
    /// ⟨Ψ|K†K|Ψ⟩ evaluations.
    pub inner_products: u64,
    /// Pending-stream flushes (fuse + apply).
    pub flushes: u64,
    pub gates_seen: u64,
    pub fused_applied: u64,
}

impl TrajStats {
    pub fn add(&mut self, other: &TrajStats) {
        self.channel_events += other.channel_events;
        self.deferrals += other.deferrals;
        self.inner_products += other.inner_products;
        self.flushes += other.flushes;
        self.gates_seen += other.gates_seen;
        self.fused_applied += other.fused_applied;
    }

    pub fn deferral_fraction(&self) -> f64 {
        if self.channel_events == 0 {
            0.0
        } else {
            self.deferrals as f64 / self.channel_events as f64
        }
    }
}

/// Everything recorded by a single trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    /// Measurement key → one bit vector per occurrence.
    pub measurements: BTreeMap<String, Vec<Vec<u8>>>,
    /// Channel key → sampled Kraus index per occurrence.
    pub kraus_indices: BTreeMap<String, Vec<usize>>,
    /// Values of the configured observables on the final state.
    pub observables: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<String>>,
    #[serde(skip)]
    pub stats: TrajStats,
}

/// Monte Carlo estimate of one observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimate {
    pub mean: f64,
    /// Sample standard deviation / √r; absent when r < 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub r: usize,
}

/// A circuit compiled for repeated trajectory runs: operations flattened in
/// time order with per-channel bounds precomputed once.
pub struct PreparedCircuit {
    pub n_qubits: usize,
    ops: Vec<PreparedOp>,
}

enum PreparedOp {
    Gate {
        qubits: Vec<usize>,
        matrix: Arc<CMatrix>,
    },
    Channel(BoundedKraus),
    Measure {
        qubits: Vec<usize>,
        key: String,
        readout: Option<Vec<ReadoutError>>,
    },
}

impl PreparedCircuit {
    pub fn new(circuit: &Circuit) -> Self {
        let mut ops = Vec::new();
        for moment in &circuit.moments {
            for op in &moment.operations {
                match op {
                    Operation::Gate(g) => ops.push(PreparedOp::Gate {
                        qubits: g.qubits.iter().map(|q| q.0).collect(),
                        matrix: Arc::new(g.matrix.clone()),
                    }),
                    Operation::Channel(c) => {
                        ops.push(PreparedOp::Channel(BoundedKraus::new(c.clone())))
                    }
                    Operation::Measure(m) => ops.push(PreparedOp::Measure {
                        qubits: m.qubits.iter().map(|q| q.0).collect(),
                        key: m.key.clone(),
                        readout: m.readout.clone(),
                    }),
                }
            }
        }
        PreparedCircuit {
            n_qubits: circuit.n_qubits,
            ops,
        }
    }
}

/// Flip recorded bits through the readout misclassification channel.
/// The underlying state is untouched; this is a classification error.
pub fn apply_readout_error<R: Rng>(
    bits: &[u8],
    params: &[ReadoutError],
    rng: &mut R,
) -> Vec<u8> {
    bits.iter()
        .zip(params)
        .map(|(&b, p)| {
            let flip_prob = if b == 0 { p.p0_as_1 } else { p.p1_as_0 };
            if rng.random::<f64>() < flip_prob {
                1 - b
            } else {
                b
            }
        })
        .collect()
}

/// Mutable state of one running trajectory.
pub struct TrajectoryRunner<P: Real> {
    state: StateVector<P>,
    pending: Vec<FusibleGate>,
    next_id: usize,
    fuse_cfg: FuseConfig,
    mode: SamplingMode,
    pub stats: TrajStats,
}

impl<P: Real> TrajectoryRunner<P> {
    pub fn new(n_qubits: usize, cfg: &TrajectoryConfig) -> Result<Self, TrajectoryError> {
        let layout = Layout::blocked(cfg.lanes).map_err(TrajectoryError::Engine)?;
        Ok(TrajectoryRunner {
            state: StateVector::zero_state(n_qubits, layout),
            pending: Vec::new(),
            next_id: 0,
            fuse_cfg: cfg.fuse,
            mode: cfg.mode,
            stats: TrajStats::default(),
        })
    }

    pub fn state(&self) -> &StateVector<P> {
        &self.state
    }

    fn push_pending(&mut self, qubits: Vec<usize>, matrix: Arc<CMatrix>) {
        self.pending.push(FusibleGate {
            id: self.next_id,
            qubits,
            matrix,
        });
        self.next_id += 1;
    }

    /// Fuse and apply everything pending, then renormalize. Deferred Kraus
    /// operators enter rescaled by 1/√p̄, so the state direction is correct
    /// and the renormalization restores unit norm exactly where the
    /// conventional pass would have divided by √p.
    pub fn flush(&mut self) -> Result<(), TrajectoryError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let fused = fuse(&self.pending, &self.fuse_cfg)?;
        self.stats.flushes += 1;
        for fg in &fused {
            apply_gate(&mut self.state, &fg.matrix(), &fg.qubits)?;
            self.stats.fused_applied += 1;
        }
        self.pending.clear();
        self.state.normalize()?;
        Ok(())
    }

    pub fn on_gate(&mut self, qubits: Vec<usize>, matrix: Arc<CMatrix>) {
        self.stats.gates_seen += 1;
        self.push_pending(qubits, matrix);
    }

    /// Sample one Kraus operator for a channel and leave the state (or the
    /// pending stream) reflecting its application. Returns the index.
    pub fn sample_channel<R: Rng>(
        &mut self,
        bk: &BoundedKraus,
        rng: &mut R,
    ) -> Result<usize, TrajectoryError> {
        self.stats.channel_events += 1;
        let qubits: Vec<usize> = bk.channel.qubits.iter().map(|q| q.0).collect();
        let count = bk.channel.kraus.len();
        let mut r = rng.random::<f64>();

        if self.mode == SamplingMode::Delayed {
            for i in 0..count {
                if r < bk.lower_bounds[i] {
                    // Pick K_i on lower bounds alone: no inner product, and
                    // the application is deferred into the fusion stream.
                    self.stats.deferrals += 1;
                    let matrix = bk.rescaled[i].as_ref().unwrap().clone();
                    self.push_pending(qubits, matrix);
                    return Ok(i);
                }
                r -= bk.lower_bounds[i];
            }
        }

        // Residual (or conventional) pass over exact probabilities.
        self.flush()?;
        let mut last_p = 0.0;
        for i in 0..count {
            let p = expectation_kkdag(&self.state, &bk.channel.kraus[i], &qubits)?;
            self.stats.inner_products += 1;
            last_p = p;
            let threshold = match self.mode {
                SamplingMode::Delayed => p - bk.lower_bounds[i],
                SamplingMode::Conventional => p,
            };
            if r < threshold {
                self.select(bk, i, p, &qubits)?;
                return Ok(i);
            }
            r -= threshold;
        }
        if r > LEAK_TOLERANCE {
            return Err(TrajectoryError::NumericalLeak { residual: r });
        }
        // Within tolerance: attribute the leak to rounding and pick the
        // last operator.
        let i = count - 1;
        self.select(bk, i, last_p.max(f64::MIN_POSITIVE), &qubits)?;
        Ok(i)
    }

    fn select(
        &mut self,
        bk: &BoundedKraus,
        i: usize,
        p: f64,
        qubits: &[usize],
    ) -> Result<(), TrajectoryError> {
        apply_gate(&mut self.state, &bk.channel.kraus[i], qubits)?;
        self.state.scale(1.0 / p.sqrt());
        Ok(())
    }

    /// Measure, collapse, and apply any configured readout error to the
    /// recorded bits (never to the state).
    pub fn measure<R: Rng>(
        &mut self,
        qubits: &[usize],
        readout: Option<&[ReadoutError]>,
        rng: &mut R,
    ) -> Result<Vec<u8>, TrajectoryError> {
        self.flush()?;
        let bits = self.state.measure_collapse(qubits, rng)?;
        Ok(match readout {
            Some(params) => apply_readout_error(&bits, params, rng),
            None => bits,
        })
    }
}

/// Per-trajectory random stream: one ChaCha stream per trajectory index,
/// so results are independent of scheduling and worker placement.
pub fn trajectory_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64);
    rng
}

/// Run one trajectory of a prepared circuit.
pub fn run_trajectory<P: Real>(
    prepared: &PreparedCircuit,
    cfg: &TrajectoryConfig,
    index: usize,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let mut rng = trajectory_rng(cfg.base_seed, index);
    let mut runner: TrajectoryRunner<P> = TrajectoryRunner::new(prepared.n_qubits, cfg)?;
    let mut measurements: BTreeMap<String, Vec<Vec<u8>>> = BTreeMap::new();
    let mut kraus_indices: BTreeMap<String, Vec<usize>> = BTreeMap::new();

    for op in &prepared.ops {
        match op {
            PreparedOp::Gate { qubits, matrix } => {
                runner.on_gate(qubits.clone(), matrix.clone());
            }
            PreparedOp::Channel(bk) => {
                let idx = runner.sample_channel(bk, &mut rng)?;
                if let Some(key) = &bk.channel.measurement_key {
                    kraus_indices.entry(key.clone()).or_default().push(idx);
                }
            }
            PreparedOp::Measure {
                qubits,
                key,
                readout,
            } => {
                let bits = runner.measure(qubits, readout.as_deref(), &mut rng)?;
                measurements.entry(key.clone()).or_default().push(bits);
            }
        }
    }
    runner.flush()?;

    let observables = cfg
        .observables
        .iter()
        .map(|p| runner.state.expectation_pauli(p))
        .collect::<Result<Vec<f64>, _>>()?;
    let samples = match cfg.histogram_shots {
        Some(shots) => Some(runner.state.sample_bitstrings(shots, &mut rng)?),
        None => None,
    };

    Ok(TrajectoryRecord {
        index,
        measurements,
        kraus_indices,
        observables,
        samples,
        stats: runner.stats,
    })
}

/// Run a contiguous range of trajectory indices, in order.
pub fn run_range<P: Real>(
    prepared: &PreparedCircuit,
    cfg: &TrajectoryConfig,
    range: std::ops::Range<usize>,
) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    range
        .map(|i| run_trajectory::<P>(prepared, cfg, i))
        .collect()
}

/// Pool per-trajectory observable values into estimates.
///
/// Records must be sorted by trajectory index; the reduction is a fixed
/// left-to-right sum, so the result is bitwise independent of how the
/// records were produced or partitioned.
pub fn aggregate_observables(
    records: &[TrajectoryRecord],
    observables: &[PauliString],
) -> BTreeMap<String, ObservableEstimate> {
    let r = records.len();
    let mut out = BTreeMap::new();
    for (oi, name) in observables.iter().enumerate() {
        let values: Vec<f64> = records.iter().map(|rec| rec.observables[oi]).collect();
        let mean = values.iter().sum::<f64>() / r.max(1) as f64;
        let stderr = (r >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (r - 1) as f64;
            (var / r as f64).sqrt()
        });
        out.insert(
            name.to_string(),
            ObservableEstimate {
                mean,
                stderr,
                r,
            },
        );
    }
    out
}

/// Full single-process estimate: r trajectories, pooled.
pub struct EstimateResult {
    pub estimates: BTreeMap<String, ObservableEstimate>,
    pub records: Vec<TrajectoryRecord>,
    pub stats: TrajStats,
}

pub fn estimate<P: Real>(
    circuit: &Circuit,
    cfg: &TrajectoryConfig,
) -> Result<EstimateResult, TrajectoryError> {
    let prepared = PreparedCircuit::new(circuit);
    let mut records: Vec<TrajectoryRecord> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| run_trajectory::<P>(&prepared, cfg, i))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|rec| rec.index);
    let estimates = aggregate_observables(&records, &cfg.observables);
    let mut stats = TrajStats::default();
    for rec in &records {
        stats.add(&rec.stats);
    }
    Ok(EstimateResult {
        estimates,
        records,
        stats,
    })
}
