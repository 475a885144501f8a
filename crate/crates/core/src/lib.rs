//! Full state-vector quantum circuit simulator with quantum-trajectory
//! noise sampling.
//!
//! The pieces, bottom up:
//!
//! - [`circuit`]: the circuit IR (gates, channels, measurements, moments)
//!   with a canonical JSON serialization and validation.
//! - [`state`] / [`kernel`]: the 2^n-amplitude state and the gate kernels.
//!   The blocked kernel processes lane groups of k amplitudes at a time
//!   with intra-group permutations, mirroring a SIMD register scheme in
//!   portable code; the naive kernel is the reference it must match.
//! - [`fusion`]: combines gates close in space and time into gates of
//!   bounded arity before they hit the kernels.
//! - [`trajectory`]: noisy simulation by quantum trajectories, sampling one
//!   Kraus operator per channel. Lower bounds on the selection
//!   probabilities let low-noise channels defer into the fusion stream
//!   without computing inner products.
//! - [`qcs`]: an approximate hardware noise model built from calibration
//!   data: decay/dephasing, coherent fSim errors, residual depolarizing
//!   channels, and readout errors.
//! - [`farm`]: distributes trajectory ranges over a worker pool with a
//!   submit queue, matchmaking, and an autoscaler; merges results
//!   deterministically.
//! - [`oracle`]: slow independent reference implementations used by tests.
//!
//! Memory rule of thumb: a state of n qubits takes 8·2^n bytes in single
//! precision (16·2^n in double), and noisy simulation needs twice that when
//! any channel is not a mixture of unitaries.

pub mod channels;
pub mod circuit;
pub mod farm;
pub mod fusion;
pub mod gates;
pub mod kernel;
pub mod matrix;
pub mod noise;
pub mod oracle;
pub mod pauli;
pub mod qcs;
pub mod state;
pub mod trajectory;

pub use circuit::{Circuit, Moment, Operation, QubitId};
pub use matrix::CMatrix;
pub use pauli::PauliString;
pub use state::{Layout, Precision, StateVector};
pub use trajectory::{SamplingMode, TrajectoryConfig};
