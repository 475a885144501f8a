//! Trajectory farm: distributes trajectory index ranges over a pool of
//! workers with a submit queue, a matchmaking negotiator, and an autoscaler.
//!
//! Workers here are local threads behind the [`JobExecutor`] interface; the
//! same controller logic would front remote nodes. Per-trajectory seeding
//! makes the aggregate a pure function of (circuit, config): results are
//! byte-identical regardless of worker count, scheduling, or retried
//! failures.

use crate::circuit::Circuit;
use crate::state::Real;
use crate::trajectory::{
    aggregate_observables, run_range, ObservableEstimate, PreparedCircuit, TrajectoryConfig,
    TrajectoryError, TrajectoryRecord,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FarmError {
    #[error("trajectory ranges lost after retry limit: {0:?}")]
    RetriesExhausted(Vec<(usize, usize)>),
    #[error("jobs {0:?} exceed every worker's capacity")]
    Unmatchable(Vec<usize>),
    #[error("bad partial coverage: {0}")]
    BadCoverage(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One schedulable unit: a contiguous range of trajectory indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: usize,
    /// Trajectory index range [start, end).
    pub start: usize,
    pub end: usize,
    /// Resource requirement: state bytes × scratch factor.
    pub memory_bytes: u64,
}

impl Job {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Split r trajectories into ⌈r/chunk⌉ jobs covering 0..r exactly once.
pub fn partition(r: usize, chunk: usize, memory_bytes: u64) -> Vec<Job> {
    assert!(chunk >= 1, "chunk must be at least 1");
    let mut jobs = Vec::new();
    let mut start = 0;
    while start < r {
        let end = (start + chunk).min(r);
        jobs.push(Job {
            id: jobs.len(),
            start,
            end,
            memory_bytes,
        });
        start = end;
    }
    jobs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkerStatus {
    Idle,
    Busy,
}

#[derive(Clone, Debug)]
pub struct WorkerInfo {
    pub id: usize,
    pub capacity: u64,
    pub status: WorkerStatus,
    /// Tick at which the worker last became idle.
    pub idle_since: u64,
}

/// Controller view of the pool: registered workers and the submit queue.
#[derive(Clone, Debug, Default)]
pub struct PoolState {
    pub workers: Vec<WorkerInfo>,
    pub queue: Vec<Job>,
    pub limit: usize,
}

impl PoolState {
    pub fn idle_count(&self) -> usize {
        self.workers
            .iter()
            .filter(|w| w.status == WorkerStatus::Idle)
            .count()
    }
}

/// Autoscaler parameters. The tick interval is a desk-scale stand-in for a
/// scheduler running on a fixed cadence.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AutoscalerConfig {
    pub tick_ms: u64,
    pub scale_up_batch: usize,
    pub idle_timeout_ticks: u64,
}

impl Default for AutoscalerConfig {
    fn default() -> Self {
        AutoscalerConfig {
            tick_ms: 100,
            scale_up_batch: 4,
            idle_timeout_ticks: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScaleAction {
    None,
    /// Request this many new workers.
    Spawn(usize),
    /// Retire these workers (idle past the timeout with an empty queue).
    Retire(Vec<usize>),
}

/// One autoscaler decision: scale up when jobs outnumber idle workers and
/// the limit allows, retire idlers when the queue is empty. Never exceeds
/// the pool limit.
pub fn autoscale_tick(pool: &PoolState, cfg: &AutoscalerConfig, now_tick: u64) -> ScaleAction {
    let pending = pool.queue.len();
    let idle = pool.idle_count();
    if pending > idle && pool.workers.len() < pool.limit {
        let want = (pending - idle).min(cfg.scale_up_batch);
        let allowed = pool.limit - pool.workers.len();
        return ScaleAction::Spawn(want.min(allowed));
    }
    if pending == 0 {
        let victims: Vec<usize> = pool
            .workers
            .iter()
            .filter(|w| {
                w.status == WorkerStatus::Idle
                    && now_tick.saturating_sub(w.idle_since) >= cfg.idle_timeout_ticks
            })
            .map(|w| w.id)
            .collect();
        if !victims.is_empty() {
            return ScaleAction::Retire(victims);
        }
    }
    ScaleAction::None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub worker: usize,
    pub job_id: usize,
}

#[derive(Clone, Debug, Default)]
pub struct NegotiationOutcome {
    pub assignments: Vec<Assignment>,
    /// Jobs whose requirement exceeds every worker's capacity.
    pub unmatchable: Vec<usize>,
}

/// Matchmaking: walk the queue in submission order and hand each job to the
/// first idle worker whose capacity covers its requirement, at most one job
/// per worker per round.
pub fn negotiate(pool: &PoolState) -> NegotiationOutcome {
    let mut outcome = NegotiationOutcome::default();
    let mut taken: Vec<usize> = Vec::new();
    for job in &pool.queue {
        let fits_any = pool.workers.iter().any(|w| w.capacity >= job.memory_bytes);
        if !fits_any && !pool.workers.is_empty() {
            outcome.unmatchable.push(job.id);
            continue;
        }
        if let Some(w) = pool.workers.iter().find(|w| {
            w.status == WorkerStatus::Idle
                && w.capacity >= job.memory_bytes
                && !taken.contains(&w.id)
        }) {
            taken.push(w.id);
            outcome.assignments.push(Assignment {
                worker: w.id,
                job_id: job.id,
            });
        }
    }
    outcome
}

/// Farm parameters; the JSON form is {limit, chunk, tick_ms, retries}.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FarmConfig {
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default = "default_chunk")]
    pub chunk: usize,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default = "default_batch")]
    pub scale_up_batch: usize,
    #[serde(default = "default_idle_timeout")]
    pub idle_timeout_ticks: u64,
    /// Memory capacity advertised by each spawned worker.
    #[serde(default = "default_capacity")]
    pub worker_capacity_bytes: u64,
}

fn default_limit() -> usize {
    20
}
fn default_chunk() -> usize {
    256
}
fn default_tick_ms() -> u64 {
    100
}
fn default_retries() -> usize {
    3
}
fn default_batch() -> usize {
    4
}
fn default_idle_timeout() -> u64 {
    10
}
fn default_capacity() -> u64 {
    u64::MAX
}

impl Default for FarmConfig {
    fn default() -> Self {
        FarmConfig {
            limit: default_limit(),
            chunk: default_chunk(),
            tick_ms: default_tick_ms(),
            retries: default_retries(),
            scale_up_batch: default_batch(),
            idle_timeout_ticks: default_idle_timeout(),
            worker_capacity_bytes: default_capacity(),
        }
    }
}

impl FarmConfig {
    fn autoscaler(&self) -> AutoscalerConfig {
        AutoscalerConfig {
            tick_ms: self.tick_ms,
            scale_up_batch: self.scale_up_batch,
            idle_timeout_ticks: self.idle_timeout_ticks,
        }
    }
}

/// Executes one job; implementations run trajectories or inject faults.
pub trait JobExecutor: Send + Sync {
    fn run(&self, job: &Job) -> Result<Vec<TrajectoryRecord>, String>;
}

/// The production executor: runs the job's trajectory range.
pub struct TrajectoryExecutor<P: Real> {
    pub prepared: Arc<PreparedCircuit>,
    pub cfg: TrajectoryConfig,
    _marker: std::marker::PhantomData<P>,
}

impl<P: Real> TrajectoryExecutor<P> {
    pub fn new(prepared: Arc<PreparedCircuit>, cfg: TrajectoryConfig) -> Self {
        TrajectoryExecutor {
            prepared,
            cfg,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<P: Real> JobExecutor for TrajectoryExecutor<P> {
    fn run(&self, job: &Job) -> Result<Vec<TrajectoryRecord>, String> {
        run_range::<P>(&self.prepared, &self.cfg, job.start..job.end).map_err(|e| e.to_string())
    }
}

/// An executor wrapper that fails selected (job, attempt) pairs, standing in
/// for workers dying mid-job.
pub struct FaultInjector<E> {
    pub inner: E,
    /// Fail the first `fail_attempts` attempts of job `fail_job`.
    pub fail_job: usize,
    pub fail_attempts: usize,
    attempts: AtomicUsize,
}

impl<E> FaultInjector<E> {
    pub fn new(inner: E, fail_job: usize, fail_attempts: usize) -> Self {
        FaultInjector {
            inner,
            fail_job,
            fail_attempts,
            attempts: AtomicUsize::new(0),
        }
    }
}

impl<E: JobExecutor> JobExecutor for FaultInjector<E> {
    fn run(&self, job: &Job) -> Result<Vec<TrajectoryRecord>, String> {
        if job.id == self.fail_job {
            let attempt = self.attempts.fetch_add(1, Ordering::SeqCst);
            if attempt < self.fail_attempts {
                return Err(format!("injected failure on job {} attempt {attempt}", job.id));
            }
        }
        self.inner.run(job)
    }
}

/// Completed job output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobPartial {
    pub job_id: usize,
    pub start: usize,
    pub end: usize,
    pub records: Vec<TrajectoryRecord>,
}

/// Pool observable estimates from disjoint partials.
///
/// Partials are keyed and sorted by trajectory index before a fixed
/// left-to-right reduction, so the merge is order-invariant bit for bit.
pub fn merge(
    partials: &[JobPartial],
    observables: &[crate::pauli::PauliString],
) -> Result<BTreeMap<String, ObservableEstimate>, FarmError> {
    let mut sorted: Vec<&JobPartial> = partials.iter().collect();
    sorted.sort_by_key(|p| p.start);
    let mut expected = 0usize;
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    for p in sorted {
        if p.start < expected {
            return Err(FarmError::BadCoverage(format!(
                "range [{}, {}) overlaps previous coverage ending at {expected}",
                p.start, p.end
            )));
        }
        if p.start > expected {
            return Err(FarmError::BadCoverage(format!(
                "missing trajectories [{expected}, {})",
                p.start
            )));
        }
        expected = p.end;
        records.extend(p.records.iter().cloned());
    }
    Ok(aggregate_observables(&records, observables))
}

/// Aggregate results of a farm run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FarmSummary {
    pub trajectories: usize,
    pub observables: BTreeMap<String, ObservableEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BTreeMap<String, u64>>,
}

impl FarmSummary {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).unwrap();
        text.push('\n');
        text
    }
}

enum WorkerMsg {
    Done {
        worker: usize,
        job: Job,
        result: Result<Vec<TrajectoryRecord>, String>,
    },
}

struct WorkerHandle {
    sender: mpsc::Sender<Job>,
    join: std::thread::JoinHandle<()>,
}

/// Run a farm over local worker threads and write partials plus
/// `summary.json` into `out_dir`.
pub fn run_farm_with_executor(
    jobs: Vec<Job>,
    executor: Arc<dyn JobExecutor>,
    farm: &FarmConfig,
    observables: &[crate::pauli::PauliString],
    out_dir: &Path,
) -> Result<FarmSummary, FarmError> {
    std::fs::create_dir_all(out_dir)?;
    let total_jobs = jobs.len();
    let trajectories = jobs.iter().map(Job::len).sum();
    let asc = farm.autoscaler();

    let mut pool = PoolState {
        workers: Vec::new(),
        queue: jobs,
        limit: farm.limit.max(1),
    };
    let (results_tx, results_rx) = mpsc::channel::<WorkerMsg>();
    let mut handles: BTreeMap<usize, WorkerHandle> = BTreeMap::new();
    let mut next_worker_id = 0usize;
    let mut attempts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut lost: Vec<(usize, usize)> = Vec::new();
    let mut partials: Vec<JobPartial> = Vec::new();
    let mut tick = 0u64;

    let handle_msg = |msg: WorkerMsg,
                          pool: &mut PoolState,
                          handles: &mut BTreeMap<usize, WorkerHandle>,
                          partials: &mut Vec<JobPartial>,
                          attempts: &mut BTreeMap<usize, usize>,
                          lost: &mut Vec<(usize, usize)>,
                          tick: u64| {
        match msg {
            WorkerMsg::Done {
                worker,
                job,
                result,
            } => match result {
                Ok(records) => {
                    partials.push(JobPartial {
                        job_id: job.id,
                        start: job.start,
                        end: job.end,
                        records,
                    });
                    if let Some(w) = pool.workers.iter_mut().find(|w| w.id == worker) {
                        w.status = WorkerStatus::Idle;
                        w.idle_since = tick;
                    }
                }
                Err(reason) => {
                    // Treat a failed job as a dead worker: deregister it and
                    // requeue the job unless its retry budget is spent.
                    log::warn!("worker {worker} failed job {}: {reason}", job.id);
                    pool.workers.retain(|w| w.id != worker);
                    if let Some(h) = handles.remove(&worker) {
                        drop(h.sender);
                        let _ = h.join.join();
                    }
                    let tries = attempts.entry(job.id).or_insert(0);
                    *tries += 1;
                    if *tries > farm.retries {
                        lost.push((job.start, job.end));
                    } else {
                        pool.queue.push(job);
                    }
                }
            },
        }
    };

    while partials.len() < total_jobs {
        if !lost.is_empty() {
            break;
        }
        while let Ok(msg) = results_rx.try_recv() {
            handle_msg(
                msg,
                &mut pool,
                &mut handles,
                &mut partials,
                &mut attempts,
                &mut lost,
                tick,
            );
        }

        match autoscale_tick(&pool, &asc, tick) {
            ScaleAction::Spawn(n) => {
                for _ in 0..n {
                    let id = next_worker_id;
                    next_worker_id += 1;
                    let (job_tx, job_rx) = mpsc::channel::<Job>();
                    let tx = results_tx.clone();
                    let exec = executor.clone();
                    let join = std::thread::spawn(move || {
                        while let Ok(job) = job_rx.recv() {
                            let result = exec.run(&job);
                            if tx.send(WorkerMsg::Done {
                                worker: id,
                                job,
                                result,
                            })
                            .is_err()
                            {
                                break;
                            }
                        }
                    });
                    handles.insert(
                        id,
                        WorkerHandle {
                            sender: job_tx,
                            join,
                        },
                    );
                    pool.workers.push(WorkerInfo {
                        id,
                        capacity: farm.worker_capacity_bytes,
                        status: WorkerStatus::Idle,
                        idle_since: tick,
                    });
                }
            }
            ScaleAction::Retire(ids) => {
                for id in ids {
                    pool.workers.retain(|w| w.id != id);
                    if let Some(h) = handles.remove(&id) {
                        drop(h.sender);
                        let _ = h.join.join();
                    }
                }
            }
            ScaleAction::None => {}
        }

        let outcome = negotiate(&pool);
        if !outcome.unmatchable.is_empty() && pool.workers.len() >= pool.limit.min(1) {
            // Workers are homogeneous here, so an unmatchable job can never
            // be placed; fail fast rather than spin.
            for h in handles.into_values() {
                drop(h.sender);
                let _ = h.join.join();
            }
            return Err(FarmError::Unmatchable(outcome.unmatchable));
        }
        for a in outcome.assignments {
            let pos = pool.queue.iter().position(|j| j.id == a.job_id).unwrap();
            let job = pool.queue.remove(pos);
            if let Some(w) = pool.workers.iter_mut().find(|w| w.id == a.worker) {
                w.status = WorkerStatus::Busy;
            }
            handles[&a.worker].sender.send(job).expect("worker alive");
        }

        if partials.len() < total_jobs && lost.is_empty() {
            if let Ok(msg) = results_rx.recv_timeout(Duration::from_millis(asc.tick_ms)) {
                handle_msg(
                    msg,
                    &mut pool,
                    &mut handles,
                    &mut partials,
                    &mut attempts,
                    &mut lost,
                    tick,
                );
            }
        }
        tick += 1;
    }

    for h in handles.into_values() {
        drop(h.sender);
        let _ = h.join.join();
    }
    if !lost.is_empty() {
        lost.sort_unstable();
        return Err(FarmError::RetriesExhausted(lost));
    }

    partials.sort_by_key(|p| p.start);
    for p in &partials {
        let path = out_dir.join(format!("{}.json", p.job_id));
        std::fs::write(&path, serde_json::to_string_pretty(p).unwrap())?;
    }
    let estimates = merge(&partials, observables)?;
    let histogram = merge_histograms(&partials);
    let summary = FarmSummary {
        trajectories,
        observables: estimates,
        histogram,
    };
    std::fs::write(out_dir.join("summary.json"), summary.to_json())?;
    Ok(summary)
}

fn merge_histograms(partials: &[JobPartial]) -> Option<BTreeMap<String, u64>> {
    let mut hist: BTreeMap<String, u64> = BTreeMap::new();
    let mut any = false;
    for p in partials {
        for rec in &p.records {
            if let Some(samples) = &rec.samples {
                any = true;
                for s in samples {
                    *hist.entry(s.clone()).or_insert(0) += 1;
                }
            }
        }
    }
    any.then_some(hist)
}

/// Memory requirement for one trajectory of a circuit: amplitude storage
/// (8·2^n bytes single, 16·2^n double) times two when any channel is not a
/// mixture of unitaries (those need a scratch pass).
pub fn job_memory_bytes(circuit: &Circuit, precision_bytes: usize) -> u64 {
    let amp_bytes = (2 * precision_bytes) as u64;
    let state = amp_bytes << circuit.n_qubits;
    if circuit.all_channels_unitary_mixtures() {
        state
    } else {
        state * 2
    }
}

/// Full production farm run over a circuit.
pub fn run_farm<P: Real>(
    circuit: &Circuit,
    cfg: &TrajectoryConfig,
    farm: &FarmConfig,
    out_dir: &Path,
) -> Result<FarmSummary, FarmError> {
    let jobs = partition(
        cfg.trajectories,
        farm.chunk,
        job_memory_bytes(circuit, P::PRECISION.bytes()),
    );
    let prepared = Arc::new(PreparedCircuit::new(circuit));
    let executor: Arc<dyn JobExecutor> =
        Arc::new(TrajectoryExecutor::<P>::new(prepared, cfg.clone()));
    run_farm_with_executor(jobs, executor, farm, &cfg.observables, out_dir)
}

// ---------------------------------------------------------------------------
// Virtual-time pool simulation (deterministic autoscaler/liveness tests)
// ---------------------------------------------------------------------------

pub mod sim {
    use super::*;

    /// A deterministic, virtual-time simulation of the pool: jobs take a
    /// fixed number of ticks, workers spawn and retire instantly.
    pub struct PoolSim {
        pub pool: PoolState,
        pub cfg: AutoscalerConfig,
        pub job_duration_ticks: u64,
        pub worker_capacity: u64,
        running: Vec<(usize, Job, u64)>,
        next_worker_id: usize,
        pub tick: u64,
        pub completed: Vec<Job>,
        pub max_workers_seen: usize,
    }

    impl PoolSim {
        pub fn new(jobs: Vec<Job>, limit: usize, cfg: AutoscalerConfig) -> Self {
            PoolSim {
                pool: PoolState {
                    workers: Vec::new(),
                    queue: jobs,
                    limit,
                },
                cfg,
                job_duration_ticks: 5,
                worker_capacity: u64::MAX,
                running: Vec::new(),
                next_worker_id: 0,
                tick: 0,
                completed: Vec::new(),
                max_workers_seen: 0,
            }
        }

        pub fn inject(&mut self, job: Job) {
            self.pool.queue.push(job);
        }

        /// Trajectories accounted for across queue, running, and done.
        pub fn conserved_total(&self) -> usize {
            self.pool.queue.iter().map(Job::len).sum::<usize>()
                + self.running.iter().map(|(_, j, _)| j.len()).sum::<usize>()
                + self.completed.iter().map(Job::len).sum::<usize>()
        }

        pub fn step(&mut self) {
            // Finish jobs due this tick.
            let due: Vec<usize> = self
                .running
                .iter()
                .enumerate()
                .filter(|(_, (_, _, t))| *t <= self.tick)
                .map(|(i, _)| i)
                .collect();
            for i in due.into_iter().rev() {
                let (worker, job, _) = self.running.remove(i);
                self.completed.push(job);
                if let Some(w) = self.pool.workers.iter_mut().find(|w| w.id == worker) {
                    w.status = WorkerStatus::Idle;
                    w.idle_since = self.tick;
                }
            }
            match autoscale_tick(&self.pool, &self.cfg, self.tick) {
                ScaleAction::Spawn(n) => {
                    for _ in 0..n {
                        self.pool.workers.push(WorkerInfo {
                            id: self.next_worker_id,
                            capacity: self.worker_capacity,
                            status: WorkerStatus::Idle,
                            idle_since: self.tick,
                        });
                        self.next_worker_id += 1;
                    }
                }
                ScaleAction::Retire(ids) => {
                    self.pool.workers.retain(|w| !ids.contains(&w.id));
                }
                ScaleAction::None => {}
            }
            let outcome = negotiate(&self.pool);
            for a in outcome.assignments {
                let pos = self
                    .pool
                    .queue
                    .iter()
                    .position(|j| j.id == a.job_id)
                    .unwrap();
                let job = self.pool.queue.remove(pos);
                if let Some(w) = self.pool.workers.iter_mut().find(|w| w.id == a.worker) {
                    w.status = WorkerStatus::Busy;
                }
                self.running
                    .push((a.worker, job, self.tick + self.job_duration_ticks));
            }
            self.max_workers_seen = self.max_workers_seen.max(self.pool.workers.len());
            assert!(
                self.pool.workers.len() <= self.pool.limit,
                "worker limit exceeded at tick {}",
                self.tick
            );
            self.tick += 1;
        }

        /// Step until queue and running set drain; panics after `max_ticks`.
        pub fn run_until_drained(&mut self, max_ticks: u64) -> u64 {
            let start = self.tick;
            while !self.pool.queue.is_empty() || !self.running.is_empty() {
                assert!(
                    self.tick - start < max_ticks,
                    "farm failed to drain within {max_ticks} ticks"
                );
                self.step();
            }
            self.tick - start
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels;
    use crate::circuit::{Moment, Operation, QubitId};
    use crate::gates;
    use crate::pauli::PauliString;
    use crate::trajectory::SamplingMode;

    #[test]
    fn partition_examples() {
        let jobs = partition(10, 10, 0);
        assert_eq!(jobs.len(), 1);
        assert_eq!((jobs[0].start, jobs[0].end), (0, 10));

        let jobs = partition(10, 3, 0);
        let ranges: Vec<(usize, usize)> = jobs.iter().map(|j| (j.start, j.end)).collect();
        assert_eq!(ranges, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
    }

    #[test]
    fn partition_covers_exactly() {
        for r in [0usize, 1, 7, 100, 101] {
            for chunk in [1usize, 3, 7, 100] {
                let jobs = partition(r, chunk, 0);
                let mut seen = vec![false; r];
                for j in &jobs {
                    for i in j.start..j.end {
                        assert!(!seen[i], "index {i} covered twice");
                        seen[i] = true;
                    }
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    fn idle_worker(id: usize, capacity: u64, idle_since: u64) -> WorkerInfo {
        WorkerInfo {
            id,
            capacity,
            status: WorkerStatus::Idle,
            idle_since,
        }
    }

    #[test]
    fn autoscale_rules() {
        let cfg = AutoscalerConfig::default();
        // Empty queue, fresh idle workers: no-op.
        let pool = PoolState {
            workers: vec![idle_worker(0, 100, 0)],
            queue: vec![],
            limit: 20,
        };
        assert_eq!(autoscale_tick(&pool, &cfg, 1), ScaleAction::None);
        // ...but after the idle timeout they retire.
        assert_eq!(
            autoscale_tick(&pool, &cfg, 11),
            ScaleAction::Retire(vec![0])
        );

        // 5 pending, 0 workers, limit 20, batch 4 → spawn 4.
        let jobs = partition(5, 1, 10);
        let pool = PoolState {
            workers: vec![],
            queue: jobs,
            limit: 20,
        };
        assert_eq!(autoscale_tick(&pool, &cfg, 0), ScaleAction::Spawn(4));

        // At the limit: no-op regardless of backlog.
        let pool = PoolState {
            workers: (0..20).map(|i| idle_worker(i, 100, 0)).collect(),
            queue: partition(100, 1, 10),
            limit: 20,
        };
        assert_eq!(autoscale_tick(&pool, &cfg, 0), ScaleAction::None);
    }

    #[test]
    fn negotiate_rules() {
        // Homogeneous workers, 3 jobs, 5 idle: first three workers assigned.
        let pool = PoolState {
            workers: (0..5).map(|i| idle_worker(i, 1000, 0)).collect(),
            queue: partition(3, 1, 10),
            limit: 20,
        };
        let outcome = negotiate(&pool);
        assert_eq!(outcome.assignments.len(), 3);
        assert_eq!(
            outcome
                .assignments
                .iter()
                .map(|a| a.worker)
                .collect::<Vec<_>>(),
            vec![0, 1, 2]
        );

        // A job bigger than every capacity stays queued and is reported.
        let big = 8u64 << 30;
        let pool = PoolState {
            workers: (0..2).map(|i| idle_worker(i, 1024, 0)).collect(),
            queue: partition(1, 1, big),
            limit: 20,
        };
        let outcome = negotiate(&pool);
        assert!(outcome.assignments.is_empty());
        assert_eq!(outcome.unmatchable, vec![0]);

        // Heterogeneous pool: placement only on a worker that fits.
        let pool = PoolState {
            workers: vec![idle_worker(0, 16, 0), idle_worker(1, 1024, 0)],
            queue: partition(1, 1, 512),
            limit: 20,
        };
        let outcome = negotiate(&pool);
        assert_eq!(outcome.assignments, vec![Assignment { worker: 1, job_id: 0 }]);
    }

    fn noisy_test_circuit() -> Circuit {
        let mut c = Circuit::new(2);
        c.push(Moment::new(vec![Operation::Gate(gates::h(QubitId(0)))]).unwrap());
        c.push(
            Moment::new(vec![Operation::Gate(gates::cz(QubitId(0), QubitId(1)))]).unwrap(),
        );
        c.push(
            Moment::new(vec![Operation::Channel(
                channels::amplitude_damp(0.1, QubitId(0)).unwrap(),
            )])
            .unwrap(),
        );
        c
    }

    fn test_cfg(r: usize) -> TrajectoryConfig {
        TrajectoryConfig {
            trajectories: r,
            base_seed: 11,
            mode: SamplingMode::Delayed,
            observables: vec![
                PauliString::parse("Z0").unwrap(),
                PauliString::parse("Z1").unwrap(),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn merge_matches_unpartitioned_estimate() {
        let circuit = noisy_test_circuit();
        let cfg = test_cfg(1000);
        let whole = crate::trajectory::estimate::<f32>(&circuit, &cfg).unwrap();

        let prepared = PreparedCircuit::new(&circuit);
        let halves = [
            JobPartial {
                job_id: 0,
                start: 0,
                end: 500,
                records: run_range::<f32>(&prepared, &cfg, 0..500).unwrap(),
            },
            JobPartial {
                job_id: 1,
                start: 500,
                end: 1000,
                records: run_range::<f32>(&prepared, &cfg, 500..1000).unwrap(),
            },
        ];
        // Merge must be order-invariant and bitwise equal to the whole run.
        for order in [[0usize, 1], [1, 0]] {
            let partials = vec![halves[order[0]].clone(), halves[order[1]].clone()];
            let merged = merge(&partials, &cfg.observables).unwrap();
            for (k, v) in &whole.estimates {
                assert_eq!(&merged[k], v);
            }
        }
    }

    #[test]
    fn merge_rejects_overlap_and_gap() {
        let rec = |i: usize| TrajectoryRecord {
            index: i,
            measurements: BTreeMap::new(),
            kraus_indices: BTreeMap::new(),
            observables: vec![],
            samples: None,
            stats: Default::default(),
        };
        let p = |job_id: usize, start: usize, end: usize| JobPartial {
            job_id,
            start,
            end,
            records: (start..end).map(rec).collect(),
        };
        assert!(matches!(
            merge(&[p(0, 0, 5), p(1, 3, 8)], &[]),
            Err(FarmError::BadCoverage(_))
        ));
        assert!(matches!(
            merge(&[p(0, 0, 5), p(1, 6, 8)], &[]),
            Err(FarmError::BadCoverage(_))
        ));
        assert!(merge(&[p(0, 0, 5), p(1, 5, 8)], &[]).is_ok());
    }

    #[test]
    fn single_partial_merges_to_itself() {
        let circuit = noisy_test_circuit();
        let cfg = test_cfg(64);
        let prepared = PreparedCircuit::new(&circuit);
        let records = run_range::<f32>(&prepared, &cfg, 0..64).unwrap();
        let partial = JobPartial {
            job_id: 0,
            start: 0,
            end: 64,
            records: records.clone(),
        };
        let merged = merge(&[partial], &cfg.observables).unwrap();
        let direct = aggregate_observables(&records, &cfg.observables);
        assert_eq!(merged, direct);
    }

    #[test]
    fn farm_deterministic_across_worker_counts() {
        let circuit = noisy_test_circuit();
        let cfg = test_cfg(300);
        let mut outputs = Vec::new();
        for limit in [1usize, 2, 8] {
            let dir = tempfile::tempdir().unwrap();
            let farm = FarmConfig {
                limit,
                chunk: 37,
                tick_ms: 1,
                ..Default::default()
            };
            run_farm::<f32>(&circuit, &cfg, &farm, dir.path()).unwrap();
            outputs.push(std::fs::read(dir.path().join("summary.json")).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }

    #[test]
    fn farm_survives_one_worker_failure() {
        let circuit = noisy_test_circuit();
        let cfg = test_cfg(200);
        let baseline_dir = tempfile::tempdir().unwrap();
        let farm = FarmConfig {
            limit: 4,
            chunk: 50,
            tick_ms: 1,
            ..Default::default()
        };
        let baseline = run_farm::<f32>(&circuit, &cfg, &farm, baseline_dir.path()).unwrap();

        let prepared = Arc::new(PreparedCircuit::new(&circuit));
        let jobs = partition(
            cfg.trajectories,
            farm.chunk,
            job_memory_bytes(&circuit, 4),
        );
        let executor: Arc<dyn JobExecutor> = Arc::new(FaultInjector::new(
            TrajectoryExecutor::<f32>::new(prepared, cfg.clone()),
            1,
            1,
        ));
        let dir = tempfile::tempdir().unwrap();
        let summary =
            run_farm_with_executor(jobs, executor, &farm, &cfg.observables, dir.path()).unwrap();
        assert_eq!(summary.to_json(), baseline.to_json());
    }

    #[test]
    fn farm_reports_lost_ranges_after_retries() {
        let circuit = noisy_test_circuit();
        let cfg = test_cfg(100);
        let farm = FarmConfig {
            limit: 2,
            chunk: 50,
            tick_ms: 1,
            retries: 2,
            ..Default::default()
        };
        let prepared = Arc::new(PreparedCircuit::new(&circuit));
        let jobs = partition(cfg.trajectories, farm.chunk, 0);
        let executor: Arc<dyn JobExecutor> = Arc::new(FaultInjector::new(
            TrajectoryExecutor::<f32>::new(prepared, cfg.clone()),
            0,
            usize::MAX,
        ));
        let dir = tempfile::tempdir().unwrap();
        let err = run_farm_with_executor(jobs, executor, &farm, &cfg.observables, dir.path())
            .unwrap_err();
        match err {
            FarmError::RetriesExhausted(ranges) => assert_eq!(ranges, vec![(0, 50)]),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn farm_zero_trajectories_is_empty() {
        let circuit = noisy_test_circuit();
        let cfg = test_cfg(0);
        let farm = FarmConfig {
            tick_ms: 1,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let summary = run_farm::<f32>(&circuit, &cfg, &farm, dir.path()).unwrap();
        assert_eq!(summary.trajectories, 0);
        assert!(summary.observables["Z0"].r == 0);
    }

    #[test]
    fn sim_drains_with_one_worker() {
        let cfg = AutoscalerConfig {
            tick_ms: 1,
            scale_up_batch: 4,
            idle_timeout_ticks: 5,
        };
        let mut sim = sim::PoolSim::new(partition(50, 1, 10), 1, cfg);
        let ticks = sim.run_until_drained(10_000);
        assert!(ticks > 0);
        assert_eq!(sim.completed.len(), 50);
        assert_eq!(sim.max_workers_seen, 1);
    }

    #[test]
    fn sim_drains_and_respects_limit() {
        let cfg = AutoscalerConfig {
            tick_ms: 1,
            scale_up_batch: 4,
            idle_timeout_ticks: 5,
        };
        let jobs = partition(200, 2, 10);
        let mut sim = sim::PoolSim::new(jobs, 8, cfg);
        let total = sim.conserved_total();
        let mut steps = 0;
        while !sim.pool.queue.is_empty() || sim.completed.len() < 100 {
            assert_eq!(sim.conserved_total(), total);
            sim.step();
            steps += 1;
            assert!(steps < 10_000);
        }
        assert!(sim.max_workers_seen <= 8);
    }

    #[test]
    fn memory_requirement_scratch_factor() {
        // Unitary-mixture-only noise: plain state bytes.
        let mut c = Circuit::new(3);
        c.push(
            Moment::new(vec![Operation::Channel(
                channels::depolarize(0.1, vec![QubitId(0)]).unwrap(),
            )])
            .unwrap(),
        );
        assert_eq!(job_memory_bytes(&c, 4), 8 << 3);
        // Amplitude damping forces the factor-two scratch.
        let mut c2 = Circuit::new(3);
        c2.push(
            Moment::new(vec![Operation::Channel(
                channels::amplitude_damp(0.1, QubitId(0)).unwrap(),
            )])
            .unwrap(),
        );
        assert_eq!(job_memory_bytes(&c2, 4), 2 * (8 << 3));
    }
}
