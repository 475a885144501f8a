//! Noise models: rules that rewrite a clean circuit into a noisy one.
//!
//! A model works in one of three modes: per operation, per moment, or on
//! the whole circuit. Applying a model never reorders or removes the
//! original gates; `with_noise` enforces this by checking that stripping
//! channels from the output recovers the gate content of the input.

use crate::circuit::{ChannelOp, Circuit, CircuitError, Measurement, Moment, Operation, QubitId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("noise model has no rule for operation kind `{0}`")]
    MissingRule(String),
    #[error("missing calibration entry for {0}")]
    MissingCalibration(String),
    #[error("noise model produced an invalid circuit: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    PerOperation,
    PerMoment,
    WholeCircuit,
}

/// Insertions around a single operation.
#[derive(Debug, Default)]
pub struct OpNoise {
    /// Placed before the operation. Must act only on the operation's qubits.
    pub before: Vec<Operation>,
    /// Placed after the operation, in order; ops on the same qubit land in
    /// successive moments.
    pub after: Vec<Operation>,
    /// Replacement for the operation itself (used to attach readout errors
    /// to measurements). Must keep qubits and gate content unchanged.
    pub replace: Option<Operation>,
}

pub trait NoiseModel: Send + Sync {
    fn mode(&self) -> NoiseMode;

    /// Per-operation rule. Required when `mode()` is `PerOperation`.
    fn noisy_operation(&self, _op: &Operation) -> Result<OpNoise, NoiseError> {
        Err(NoiseError::MissingRule("operation".into()))
    }

    /// Per-moment rule: moments replacing the original (which must appear,
    /// gate-for-gate, within them). Required when `mode()` is `PerMoment`.
    fn noisy_moment(&self, _moment: &Moment, _n_qubits: usize) -> Result<Vec<Moment>, NoiseError> {
        Err(NoiseError::MissingRule("moment".into()))
    }

    /// Whole-circuit rule. Required when `mode()` is `WholeCircuit`.
    fn noisy_circuit(&self, _circuit: &Circuit) -> Result<Circuit, NoiseError> {
        Err(NoiseError::MissingRule("circuit".into()))
    }
}

/// Pack ordered operations into the fewest moments that keep per-qubit order.
pub(crate) fn pack_into_moments(ops: Vec<Operation>) -> Vec<Moment> {
    let mut moments: Vec<Vec<Operation>> = Vec::new();
    let mut last_of_qubit: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for op in ops {
        let slot = op
            .qubits()
            .iter()
            .filter_map(|q| last_of_qubit.get(&q.0).map(|&m| m + 1))
            .max()
            .unwrap_or(0);
        if slot == moments.len() {
            moments.push(Vec::new());
        }
        for q in op.qubits() {
            last_of_qubit.insert(q.0, slot);
        }
        moments[slot].push(op);
    }
    moments
        .into_iter()
        .map(|operations| Moment { operations })
        .collect()
}

/// Apply a noise model to a circuit.
///
/// The output contains every original gate in order; removing all channels
/// (and readout annotations) recovers the input's gate content exactly.
pub fn with_noise(circuit: &Circuit, model: &dyn NoiseModel) -> Result<Circuit, NoiseError> {
    let noisy = match model.mode() {
        NoiseMode::PerOperation => {
            let mut moments = Vec::new();
            for moment in &circuit.moments {
                let mut before = Vec::new();
                let mut main = Vec::new();
                let mut after = Vec::new();
                for op in &moment.operations {
                    let noise = model.noisy_operation(op)?;
                    before.extend(noise.before);
                    main.push(noise.replace.unwrap_or_else(|| op.clone()));
                    after.extend(noise.after);
                }
                moments.extend(pack_into_moments(before));
                moments.push(Moment { operations: main });
                moments.extend(pack_into_moments(after));
            }
            Circuit::with_moments(circuit.n_qubits, moments)
        }
        NoiseMode::PerMoment => {
            let mut moments = Vec::new();
            for moment in &circuit.moments {
                moments.extend(model.noisy_moment(moment, circuit.n_qubits)?);
            }
            Circuit::with_moments(circuit.n_qubits, moments)
        }
        NoiseMode::WholeCircuit => model.noisy_circuit(circuit)?,
    };
    let original = circuit.strip_channels();
    let recovered = noisy.strip_channels();
    if recovered != original {
        return Err(NoiseError::InvariantViolation(
            "stripping channels does not recover the input gates".into(),
        ));
    }
    Ok(noisy)
}

/// The trivial model: no noise anywhere.
pub struct NoNoiseModel;

impl NoiseModel for NoNoiseModel {
    fn mode(&self) -> NoiseMode {
        NoiseMode::PerOperation
    }
    fn noisy_operation(&self, _op: &Operation) -> Result<OpNoise, NoiseError> {
        Ok(OpNoise::default())
    }
}

/// Re-target a one-qubit channel template onto a specific qubit.
pub(crate) fn retarget_1q(template: &ChannelOp, qubit: QubitId) -> ChannelOp {
    let mut ch = template.clone();
    ch.qubits = vec![qubit];
    ch
}

/// Applies a fixed one-qubit channel to every qubit at the start of each
/// moment.
pub struct ConstantQubitNoiseModel {
    template: ChannelOp,
}

impl ConstantQubitNoiseModel {
    /// `template` must be a one-qubit channel.
    pub fn new(template: ChannelOp) -> Self {
        assert_eq!(template.n_qubits(), 1, "template must act on one qubit");
        ConstantQubitNoiseModel { template }
    }
}

impl NoiseModel for ConstantQubitNoiseModel {
    fn mode(&self) -> NoiseMode {
        NoiseMode::PerMoment
    }

    fn noisy_moment(&self, moment: &Moment, n_qubits: usize) -> Result<Vec<Moment>, NoiseError> {
        let channels: Vec<Operation> = (0..n_qubits)
            .map(|q| Operation::Channel(retarget_1q(&self.template, QubitId(q))))
            .collect();
        Ok(vec![Moment { operations: channels }, moment.clone()])
    }
}

/// Applies a fixed one-qubit channel to every qubit touched by each gate,
/// immediately after the gate. Channels and measurements pass through.
pub struct PerGateChannelModel {
    template: ChannelOp,
}

impl PerGateChannelModel {
    pub fn new(template: ChannelOp) -> Self {
        assert_eq!(template.n_qubits(), 1, "template must act on one qubit");
        PerGateChannelModel { template }
    }
}

impl NoiseModel for PerGateChannelModel {
    fn mode(&self) -> NoiseMode {
        NoiseMode::PerOperation
    }

    fn noisy_operation(&self, op: &Operation) -> Result<OpNoise, NoiseError> {
        let mut noise = OpNoise::default();
        if let Operation::Gate(g) = op {
            for &q in &g.qubits {
                noise
                    .after
                    .push(Operation::Channel(retarget_1q(&self.template, q)));
            }
        }
        Ok(noise)
    }
}

/// Attach readout error parameters to every measurement; everything else is
/// untouched.
pub struct ReadoutNoiseModel {
    pub p0_as_1: f64,
    pub p1_as_0: f64,
}

impl NoiseModel for ReadoutNoiseModel {
    fn mode(&self) -> NoiseMode {
        NoiseMode::PerOperation
    }

    fn noisy_operation(&self, op: &Operation) -> Result<OpNoise, NoiseError> {
        let mut noise = OpNoise::default();
        if let Operation::Measure(m) = op {
            let mut annotated = Measurement::new(m.qubits.clone(), &m.key)?;
            annotated.readout = Some(
                m.qubits
                    .iter()
                    .map(|_| crate::circuit::ReadoutError {
                        p0_as_1: self.p0_as_1,
                        p1_as_0: self.p1_as_0,
                    })
                    .collect(),
            );
            noise.replace = Some(Operation::Measure(annotated));
        }
        Ok(noise)
    }
}
