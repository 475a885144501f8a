//! Circuit intermediate representation: gates, channels, measurements,
//! moments, and the canonical JSON serialization.
//!
//! A circuit is an ordered list of moments; each moment is a set of
//! operations on disjoint qubits. Gate matrices are stored explicitly even
//! for named gates, so the engine only ever consumes matrices. Circuits are
//! immutable once built and safe to share across threads.

use crate::matrix::CMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::BTreeSet;
use thiserror::Error;

/// Default operation durations, overridable per op or via calibration data.
pub const DEFAULT_1Q_NS: f64 = 25.0;
pub const DEFAULT_2Q_NS: f64 = 32.0;
pub const DEFAULT_MEASURE_NS: f64 = 4000.0;

/// Unitarity / trace-preservation tolerance applied to user-supplied
/// matrices during validation.
pub const VALIDATE_TOL: f64 = 1e-6;
/// Tolerance met by all built-in gate and channel constructors.
pub const BUILTIN_TOL: f64 = 1e-12;

/// Maximum number of qubits a single gate (or fused gate) may touch.
pub const MAX_GATE_QUBITS: usize = 6;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unknown gate name `{name}` (moment {moment}, op {op})")]
    UnknownGate {
        name: String,
        moment: usize,
        op: usize,
    },
    #[error("unknown channel name `{name}` (moment {moment}, op {op})")]
    UnknownChannel {
        name: String,
        moment: usize,
        op: usize,
    },
    #[error("arity mismatch: `{name}` expects {expected} qubit(s), got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("gate touches {got} qubits, maximum is {MAX_GATE_QUBITS}")]
    TooManyQubits { got: usize },
    #[error("duplicate qubit {qubit} in moment {moment}")]
    DuplicateQubitInMoment { qubit: usize, moment: usize },
    #[error("duplicate qubit {qubit} in operation")]
    DuplicateQubitInOp { qubit: usize },
    #[error("qubit {qubit} out of range for {n_qubits}-qubit circuit")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("bad matrix: {0}")]
    BadMatrix(String),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("kraus set is not trace-preserving (defect {0:.3e})")]
    NotTracePreserving(f64),
    #[error("circuit failed validation: {0:?}")]
    Invalid(Vec<String>),
}

/// Index of a qubit within a circuit. Indices are 0..n_qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QubitId(pub usize);

impl QubitId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for QubitId {
    fn from(i: usize) -> Self {
        QubitId(i)
    }
}

/// Symbolic tag of a gate. The matrix is always materialized alongside.
#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    X,
    Y,
    Z,
    H,
    Rz(f64),
    Cz,
    ISwap,
    SqrtISwap,
    FSim { theta: f64, phi: f64 },
    /// Arbitrary unitary supplied as an explicit matrix.
    U,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::Rz(_) => "RZ",
            GateKind::Cz => "CZ",
            GateKind::ISwap => "ISWAP",
            GateKind::SqrtISwap => "SQRT_ISWAP",
            GateKind::FSim { .. } => "FSIM",
            GateKind::U => "U",
        }
    }
}

/// A unitary gate applied to an ordered list of qubits.
///
/// Matrix convention: bit `j` of the row/column index corresponds to
/// `qubits[j]`, with `qubits[0]` the least significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub qubits: Vec<QubitId>,
    pub matrix: CMatrix,
    pub duration_ns: Option<f64>,
}

impl GateOp {
    pub fn new(
        kind: GateKind,
        qubits: Vec<QubitId>,
        matrix: CMatrix,
        duration_ns: Option<f64>,
    ) -> Result<Self, CircuitError> {
        check_distinct(&qubits)?;
        if qubits.len() > MAX_GATE_QUBITS {
            return Err(CircuitError::TooManyQubits { got: qubits.len() });
        }
        if matrix.dim() != 1 << qubits.len() {
            return Err(CircuitError::BadMatrix(format!(
                "matrix dim {} does not match {} qubit(s)",
                matrix.dim(),
                qubits.len()
            )));
        }
        Ok(GateOp {
            kind,
            qubits,
            matrix,
            duration_ns,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    /// Effective duration: explicit value, else the per-class default.
    pub fn duration_or_default(&self) -> f64 {
        self.duration_ns.unwrap_or(if self.n_qubits() == 1 {
            DEFAULT_1Q_NS
        } else {
            DEFAULT_2Q_NS
        })
    }
}

/// Symbolic tag of a channel.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelKind {
    Depolarize(f64),
    PhaseDamp(f64),
    AmplitudeDamp(f64),
    BitFlip(f64),
    MixedUnitary,
    Kraus,
}

impl ChannelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::Depolarize(_) => "depolarize",
            ChannelKind::PhaseDamp(_) => "phase_damp",
            ChannelKind::AmplitudeDamp(_) => "amplitude_damp",
            ChannelKind::BitFlip(_) => "bit_flip",
            ChannelKind::MixedUnitary => "mixed_unitary",
            ChannelKind::Kraus => "kraus",
        }
    }
}

/// A quantum channel given by its Kraus operators.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelOp {
    pub kind: ChannelKind,
    pub kraus: Vec<CMatrix>,
    pub qubits: Vec<QubitId>,
    /// When set, the sampled Kraus index is recorded under this key.
    pub measurement_key: Option<String>,
    /// Every operator is a scalar multiple of a unitary.
    pub is_unitary_mixture: bool,
}

impl ChannelOp {
    pub fn new(
        kind: ChannelKind,
        kraus: Vec<CMatrix>,
        qubits: Vec<QubitId>,
        measurement_key: Option<String>,
        is_unitary_mixture: bool,
    ) -> Result<Self, CircuitError> {
        check_distinct(&qubits)?;
        let dim = 1usize << qubits.len();
        for k in &kraus {
            if k.dim() != dim {
                return Err(CircuitError::BadMatrix(format!(
                    "kraus dim {} does not match {} qubit(s)",
                    k.dim(),
                    qubits.len()
                )));
            }
        }
        Ok(ChannelOp {
            kind,
            kraus,
            qubits,
            measurement_key,
            is_unitary_mixture,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    /// Max absolute entry of `Σ K†K − I`.
    pub fn completeness_defect(&self) -> f64 {
        let dim = 1usize << self.qubits.len();
        let mut sum = CMatrix::zeros(dim);
        for k in &self.kraus {
            sum = sum.add(&k.dagger().matmul(k));
        }
        sum.max_abs_diff(&CMatrix::identity(dim))
    }

    pub fn with_key(mut self, key: &str) -> Self {
        self.measurement_key = Some(key.to_string());
        self
    }
}

/// Per-qubit readout misclassification probabilities.
///
/// `p0_as_1` is the probability a true 0 is recorded as 1 (the p00 error of
/// device calibrations), `p1_as_0` that a true 1 is recorded as 0 (p11).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutError {
    pub p0_as_1: f64,
    pub p1_as_0: f64,
}

/// A computational-basis measurement of a list of qubits, recorded under a key.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub qubits: Vec<QubitId>,
    pub key: String,
    /// Readout errors, one per measured qubit, attached by a noise model.
    pub readout: Option<Vec<ReadoutError>>,
}

impl Measurement {
    pub fn new(qubits: Vec<QubitId>, key: &str) -> Result<Self, CircuitError> {
        check_distinct(&qubits)?;
        Ok(Measurement {
            qubits,
            key: key.to_string(),
            readout: None,
        })
    }

    /// Copy without readout-error annotations.
    pub fn clean(&self) -> Measurement {
        Measurement {
            qubits: self.qubits.clone(),
            key: self.key.clone(),
            readout: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operation {
    Gate(GateOp),
    Channel(ChannelOp),
    Measure(Measurement),
}

impl Operation {
    pub fn qubits(&self) -> &[QubitId] {
        match self {
            Operation::Gate(g) => &g.qubits,
            Operation::Channel(c) => &c.qubits,
            Operation::Measure(m) => &m.qubits,
        }
    }

    pub fn duration_or_default(&self) -> f64 {
        match self {
            Operation::Gate(g) => g.duration_or_default(),
            // Channels are instantaneous insertions; they carry no time.
            Operation::Channel(_) => 0.0,
            Operation::Measure(_) => DEFAULT_MEASURE_NS,
        }
    }
}

/// A time slice of operations acting on disjoint qubits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moment {
    pub operations: Vec<Operation>,
}

impl Moment {
    pub fn new(operations: Vec<Operation>) -> Result<Self, CircuitError> {
        let mut seen = BTreeSet::new();
        for op in &operations {
            for q in op.qubits() {
                if !seen.insert(q.0) {
                    return Err(CircuitError::DuplicateQubitInMoment {
                        qubit: q.0,
                        moment: 0,
                    });
                }
            }
        }
        Ok(Moment { operations })
    }

    pub fn qubits_used(&self) -> BTreeSet<usize> {
        self.operations
            .iter()
            .flat_map(|op| op.qubits().iter().map(|q| q.0))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }
}

/// An n-qubit circuit: an ordered list of moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub moments: Vec<Moment>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            moments: Vec::new(),
        }
    }

    pub fn with_moments(n_qubits: usize, moments: Vec<Moment>) -> Self {
        Circuit { n_qubits, moments }
    }

    pub fn push(&mut self, moment: Moment) {
        self.moments.push(moment);
    }

    /// All invariant violations, as human-readable strings. Empty iff valid.
    pub fn validate(&self) -> Vec<String> {
        self.validate_with(VALIDATE_TOL)
    }

    pub fn validate_with(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (mi, moment) in self.moments.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (oi, op) in moment.operations.iter().enumerate() {
                let mut op_seen = BTreeSet::new();
                for q in op.qubits() {
                    if q.0 >= self.n_qubits {
                        out.push(format!(
                            "qubit {} out of range at moment {mi}, op {oi}",
                            q.0
                        ));
                    }
                    if !op_seen.insert(q.0) {
                        out.push(format!(
                            "duplicate qubit {} within op at moment {mi}, op {oi}",
                            q.0
                        ));
                    }
                    if !seen.insert(q.0) {
                        out.push(format!(
                            "duplicate qubit {} in moment {mi} (op {oi})",
                            q.0
                        ));
                    }
                }
                match op {
                    Operation::Gate(g) => {
                        if g.qubits.len() > MAX_GATE_QUBITS {
                            out.push(format!(
                                "gate arity {} exceeds {MAX_GATE_QUBITS} at moment {mi}, op {oi}",
                                g.qubits.len()
                            ));
                        }
                        let defect = g.matrix.unitarity_defect();
                        if defect > tol {
                            out.push(format!(
                                "non-unitary matrix at moment {mi}, op {oi} (defect {defect:.3e})"
                            ));
                        }
                    }
                    Operation::Channel(c) => {
                        let defect = c.completeness_defect();
                        if defect > tol {
                            out.push(format!(
                                "non-trace-preserving channel at moment {mi}, op {oi} (defect {defect:.3e})"
                            ));
                        }
                    }
                    Operation::Measure(_) => {}
                }
            }
        }
        out
    }

    /// Remove all channels and readout annotations, dropping moments that
    /// become empty. Recovers the clean circuit a noise model was applied to.
    pub fn strip_channels(&self) -> Circuit {
        let moments = self
            .moments
            .iter()
            .map(|m| Moment {
                operations: m
                    .operations
                    .iter()
                    .filter_map(|op| match op {
                        Operation::Channel(_) => None,
                        Operation::Measure(m) => Some(Operation::Measure(m.clean())),
                        g => Some(g.clone()),
                    })
                    .collect(),
            })
            .filter(|m| !m.is_empty())
            .collect();
        Circuit {
            n_qubits: self.n_qubits,
            moments,
        }
    }

    pub fn count_gates(&self) -> usize {
        self.moments
            .iter()
            .flat_map(|m| &m.operations)
            .filter(|op| matches!(op, Operation::Gate(_)))
            .count()
    }

    pub fn count_channels(&self) -> usize {
        self.moments
            .iter()
            .flat_map(|m| &m.operations)
            .filter(|op| matches!(op, Operation::Channel(_)))
            .count()
    }

    /// True if every channel in the circuit is a mixture of unitaries, in
    /// which case trajectory simulation needs no scratch state.
    pub fn all_channels_unitary_mixtures(&self) -> bool {
        self.moments
            .iter()
            .flat_map(|m| &m.operations)
            .all(|op| match op {
                Operation::Channel(c) => c.is_unitary_mixture,
                _ => true,
            })
    }

    /// Parse the canonical JSON circuit format and validate the result.
    pub fn from_json(text: &str) -> Result<Circuit, CircuitError> {
        let doc: CircuitDoc = serde_json::from_str(text)?;
        let circuit = doc.into_circuit()?;
        let violations = circuit.validate();
        if !violations.is_empty() {
            return Err(CircuitError::Invalid(violations));
        }
        Ok(circuit)
    }

    /// Serialize to the canonical JSON circuit format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CircuitDoc::from_circuit(self)).unwrap()
    }
}

fn check_distinct(qubits: &[QubitId]) -> Result<(), CircuitError> {
    let mut seen = BTreeSet::new();
    for q in qubits {
        if !seen.insert(q.0) {
            return Err(CircuitError::DuplicateQubitInOp { qubit: q.0 });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON wire format
// ---------------------------------------------------------------------------

pub(crate) fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    m.data().iter().map(|c| [c.re, c.im]).collect()
}

pub(crate) fn pairs_to_matrix(pairs: &[[f64; 2]]) -> Result<CMatrix, CircuitError> {
    let len = pairs.len();
    let dim = (len as f64).sqrt().round() as usize;
    if dim * dim != len {
        return Err(CircuitError::BadMatrix(format!(
            "matrix entry count {len} is not a perfect square"
        )));
    }
    let data: Vec<Complex64> = pairs
        .iter()
        .map(|&[re, im]| Complex64::new(re, im))
        .collect();
    Ok(CMatrix::from_rows(dim, &data))
}

#[derive(Serialize, Deserialize)]
struct CircuitDoc {
    n_qubits: usize,
    moments: Vec<Vec<OpRepr>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OpRepr {
    Gate {
        gate: String,
        qubits: Vec<usize>,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        params: Map<String, Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ns: Option<f64>,
    },
    Channel {
        channel: String,
        qubits: Vec<usize>,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        params: Map<String, Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<String>,
    },
    Measure {
        measure: Vec<usize>,
        key: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        readout: Option<Vec<[f64; 2]>>,
    },
}

pub(crate) fn get_param_f64(params: &Map<String, Value>, name: &str) -> Result<f64, CircuitError> {
    params
        .get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| CircuitError::MissingParam(name.to_string()))
}

pub(crate) fn get_param_pairs(value: &Value) -> Result<Vec<[f64; 2]>, CircuitError> {
    serde_json::from_value(value.clone())
        .map_err(|e| CircuitError::BadMatrix(format!("bad matrix encoding: {e}")))
}

impl CircuitDoc {
    fn into_circuit(self) -> Result<Circuit, CircuitError> {
        let mut moments = Vec::with_capacity(self.moments.len());
        for (mi, ops) in self.moments.iter().enumerate() {
            let mut parsed = Vec::with_capacity(ops.len());
            for (oi, op) in ops.iter().enumerate() {
                parsed.push(op.to_operation(mi, oi)?);
            }
            let moment = Moment::new(parsed).map_err(|e| match e {
                CircuitError::DuplicateQubitInMoment { qubit, .. } => {
                    CircuitError::DuplicateQubitInMoment { qubit, moment: mi }
                }
                other => other,
            })?;
            moments.push(moment);
        }
        Ok(Circuit {
            n_qubits: self.n_qubits,
            moments,
        })
    }

    fn from_circuit(c: &Circuit) -> CircuitDoc {
        CircuitDoc {
            n_qubits: c.n_qubits,
            moments: c
                .moments
                .iter()
                .map(|m| m.operations.iter().map(OpRepr::from_operation).collect())
                .collect(),
        }
    }
}

impl OpRepr {
    fn to_operation(&self, mi: usize, oi: usize) -> Result<Operation, CircuitError> {
        match self {
            OpRepr::Gate {
                gate,
                qubits,
                params,
                duration_ns,
            } => {
                let qs: Vec<QubitId> = qubits.iter().map(|&q| QubitId(q)).collect();
                let op = crate::gates::build_named_gate(gate, qs, params, *duration_ns)
                    .map_err(|e| match e {
                        CircuitError::UnknownGate { name, .. } => CircuitError::UnknownGate {
                            name,
                            moment: mi,
                            op: oi,
                        },
                        other => other,
                    })?;
                Ok(Operation::Gate(op))
            }
            OpRepr::Channel {
                channel,
                qubits,
                params,
                key,
            } => {
                let qs: Vec<QubitId> = qubits.iter().map(|&q| QubitId(q)).collect();
                let op = crate::channels::build_named_channel(channel, qs, params, key.clone())
                    .map_err(|e| match e {
                        CircuitError::UnknownChannel { name, .. } => CircuitError::UnknownChannel {
                            name,
                            moment: mi,
                            op: oi,
                        },
                        other => other,
                    })?;
                Ok(Operation::Channel(op))
            }
            OpRepr::Measure {
                measure,
                key,
                readout,
            } => {
                let qs: Vec<QubitId> = measure.iter().map(|&q| QubitId(q)).collect();
                let mut m = Measurement::new(qs, key)?;
                m.readout = readout.as_ref().map(|r| {
                    r.iter()
                        .map(|&[p0, p1]| ReadoutError {
                            p0_as_1: p0,
                            p1_as_0: p1,
                        })
                        .collect()
                });
                Ok(Operation::Measure(m))
            }
        }
    }

    fn from_operation(op: &Operation) -> OpRepr {
        match op {
            Operation::Gate(g) => {
                let mut params = Map::new();
                match &g.kind {
                    GateKind::Rz(phi) => {
                        params.insert("phi".into(), json!(phi));
                    }
                    GateKind::FSim { theta, phi } => {
                        params.insert("theta".into(), json!(theta));
                        params.insert("phi".into(), json!(phi));
                    }
                    GateKind::U => {
                        params.insert("matrix".into(), json!(matrix_to_pairs(&g.matrix)));
                    }
                    _ => {}
                }
                OpRepr::Gate {
                    gate: g.kind.name().to_string(),
                    qubits: g.qubits.iter().map(|q| q.0).collect(),
                    params,
                    duration_ns: g.duration_ns,
                }
            }
            Operation::Channel(c) => {
                let mut params = Map::new();
                match &c.kind {
                    ChannelKind::Depolarize(p) | ChannelKind::BitFlip(p) => {
                        params.insert("p".into(), json!(p));
                    }
                    ChannelKind::PhaseDamp(g) | ChannelKind::AmplitudeDamp(g) => {
                        params.insert("gamma".into(), json!(g));
                    }
                    ChannelKind::MixedUnitary | ChannelKind::Kraus => {
                        let ops: Vec<Vec<[f64; 2]>> =
                            c.kraus.iter().map(matrix_to_pairs).collect();
                        params.insert("ops".into(), json!(ops));
                    }
                }
                OpRepr::Channel {
                    channel: c.kind.name().to_string(),
                    qubits: c.qubits.iter().map(|q| q.0).collect(),
                    params,
                    key: c.measurement_key.clone(),
                }
            }
            Operation::Measure(m) => OpRepr::Measure {
                measure: m.qubits.iter().map(|q| q.0).collect(),
                key: m.key.clone(),
                readout: m
                    .readout
                    .as_ref()
                    .map(|r| r.iter().map(|e| [e.p0_as_1, e.p1_as_0]).collect()),
            },
        }
    }
}

