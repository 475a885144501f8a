//! Built-in quantum channel constructors and Kraus-set helpers.

use crate::circuit::{ChannelKind, ChannelOp, CircuitError, QubitId, VALIDATE_TOL};
use crate::gates;
use crate::matrix::CMatrix;
use num_complex::Complex64;
use serde_json::{Map, Value};

fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn check_probability(p: f64) -> Result<(), CircuitError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(CircuitError::BadProbability(p));
    }
    Ok(())
}

/// Is `K† K` a scalar multiple of the identity?
pub fn proportional_to_unitary(k: &CMatrix, tol: f64) -> bool {
    let prod = k.dagger().matmul(k);
    let c = prod[(0, 0)].re;
    for r in 0..prod.dim() {
        for col in 0..prod.dim() {
            let expect = if r == col { re(c) } else { re(0.0) };
            if (prod[(r, col)] - expect).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Direct test of the unitary-mixture property on a full Kraus set.
pub fn detect_unitary_mixture(kraus: &[CMatrix]) -> bool {
    kraus.iter().all(|k| proportional_to_unitary(k, 1e-9))
}

/// The single-qubit Pauli matrix for index 0..3 (I, X, Y, Z).
pub fn pauli_1q(idx: usize) -> CMatrix {
    match idx {
        0 => CMatrix::identity(2),
        1 => gates::x_matrix(),
        2 => gates::y_matrix(),
        3 => gates::z_matrix(),
        _ => panic!("pauli index out of range"),
    }
}

/// n-qubit Pauli product for an index in base 4; digit j is the Pauli acting
/// on bit j of the matrix index.
pub fn pauli_product(mu: usize, n_qubits: usize) -> CMatrix {
    let mut acc = pauli_1q(mu & 3);
    let mut rest = mu >> 2;
    for _ in 1..n_qubits {
        acc = pauli_1q(rest & 3).kron(&acc);
        rest >>= 2;
    }
    acc
}

/// Depolarizing channel on `qubits.len()` qubits:
/// E(ρ) = (1−p)ρ + p/(D²−1) Σ_{µ≠0} P_µ ρ P_µ.
pub fn depolarize(p: f64, qubits: Vec<QubitId>) -> Result<ChannelOp, CircuitError> {
    check_probability(p)?;
    let n = qubits.len();
    let d2 = 1usize << (2 * n);
    let mut kraus = Vec::new();
    if p < 1.0 {
        kraus.push(CMatrix::identity(1 << n).scale(re((1.0 - p).sqrt())));
    }
    if p > 0.0 {
        let w = (p / (d2 - 1) as f64).sqrt();
        for mu in 1..d2 {
            kraus.push(pauli_product(mu, n).scale(re(w)));
        }
    }
    ChannelOp::new(ChannelKind::Depolarize(p), kraus, qubits, None, true)
}

/// Phase damping: decay of off-diagonal coherence with probability γ.
pub fn phase_damp(gamma: f64, qubit: QubitId) -> Result<ChannelOp, CircuitError> {
    check_probability(gamma)?;
    let k0 = CMatrix::from_rows(
        2,
        &[re(1.0), re(0.0), re(0.0), re((1.0 - gamma).sqrt())],
    );
    let k1 = CMatrix::from_rows(2, &[re(0.0), re(0.0), re(0.0), re(gamma.sqrt())]);
    ChannelOp::new(
        ChannelKind::PhaseDamp(gamma),
        vec![k0, k1],
        vec![qubit],
        None,
        false,
    )
}

/// Amplitude damping: |1⟩ → |0⟩ with probability γ.
pub fn amplitude_damp(gamma: f64, qubit: QubitId) -> Result<ChannelOp, CircuitError> {
    check_probability(gamma)?;
    let k0 = CMatrix::from_rows(
        2,
        &[re(1.0), re(0.0), re(0.0), re((1.0 - gamma).sqrt())],
    );
    let k1 = CMatrix::from_rows(2, &[re(0.0), re(gamma.sqrt()), re(0.0), re(0.0)]);
    ChannelOp::new(
        ChannelKind::AmplitudeDamp(gamma),
        vec![k0, k1],
        vec![qubit],
        None,
        false,
    )
}

/// Bit flip: X with probability p.
pub fn bit_flip(p: f64, qubit: QubitId) -> Result<ChannelOp, CircuitError> {
    check_probability(p)?;
    let mut kraus = Vec::new();
    if p < 1.0 {
        kraus.push(CMatrix::identity(2).scale(re((1.0 - p).sqrt())));
    }
    if p > 0.0 {
        kraus.push(gates::x_matrix().scale(re(p.sqrt())));
    }
    ChannelOp::new(ChannelKind::BitFlip(p), kraus, vec![qubit], None, true)
}

/// Mixture of unitaries: apply `U_i` with probability `p_i`.
pub fn mixed_unitary(
    ops: Vec<(f64, CMatrix)>,
    qubits: Vec<QubitId>,
) -> Result<ChannelOp, CircuitError> {
    let total: f64 = ops.iter().map(|(p, _)| p).sum();
    if (total - 1.0).abs() > VALIDATE_TOL {
        return Err(CircuitError::BadProbability(total));
    }
    let mut kraus = Vec::new();
    for (p, u) in ops {
        check_probability(p)?;
        if !u.is_unitary(VALIDATE_TOL) {
            return Err(CircuitError::BadMatrix(
                "mixed_unitary component is not unitary".into(),
            ));
        }
        kraus.push(u.scale(re(p.sqrt())));
    }
    ChannelOp::new(ChannelKind::MixedUnitary, kraus, qubits, None, true)
}

/// Channel from an explicit Kraus operator list. Completeness is checked.
pub fn kraus_channel(kraus: Vec<CMatrix>, qubits: Vec<QubitId>) -> Result<ChannelOp, CircuitError> {
    let mixture = detect_unitary_mixture(&kraus);
    let op = ChannelOp::new(ChannelKind::Kraus, kraus, qubits, None, mixture)?;
    let defect = op.completeness_defect();
    if defect > VALIDATE_TOL {
        return Err(CircuitError::NotTracePreserving(defect));
    }
    Ok(op)
}

/// As `kraus_channel` but with the unitary-mixture flag and completeness
/// guaranteed by the caller (used by noise-model constructors whose algebra
/// already enforces both).
pub(crate) fn kraus_channel_unchecked(
    kraus: Vec<CMatrix>,
    qubits: Vec<QubitId>,
    is_unitary_mixture: bool,
) -> ChannelOp {
    ChannelOp::new(ChannelKind::Kraus, kraus, qubits, None, is_unitary_mixture).unwrap()
}

/// Construct a channel from its serialized name and parameters.
pub(crate) fn build_named_channel(
    name: &str,
    qubits: Vec<QubitId>,
    params: &Map<String, Value>,
    key: Option<String>,
) -> Result<ChannelOp, CircuitError> {
    let mut op = match name {
        "depolarize" => depolarize(crate::circuit::get_param_f64(params, "p")?, qubits)?,
        "phase_damp" => {
            one_qubit(name, &qubits)?;
            phase_damp(crate::circuit::get_param_f64(params, "gamma")?, qubits[0])?
        }
        "amplitude_damp" => {
            one_qubit(name, &qubits)?;
            amplitude_damp(crate::circuit::get_param_f64(params, "gamma")?, qubits[0])?
        }
        "bit_flip" => {
            one_qubit(name, &qubits)?;
            bit_flip(crate::circuit::get_param_f64(params, "p")?, qubits[0])?
        }
        "mixed_unitary" => {
            let raw = params
                .get("ops")
                .and_then(Value::as_array)
                .ok_or_else(|| CircuitError::MissingParam("ops".into()))?;
            let mut ops = Vec::new();
            for item in raw {
                let p = item
                    .get("p")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| CircuitError::MissingParam("ops[].p".into()))?;
                let m = item
                    .get("matrix")
                    .ok_or_else(|| CircuitError::MissingParam("ops[].matrix".into()))?;
                ops.push((p, crate::circuit::pairs_to_matrix(&crate::circuit::get_param_pairs(m)?)?));
            }
            mixed_unitary(ops, qubits)?
        }
        "kraus" => {
            let raw = params
                .get("ops")
                .and_then(Value::as_array)
                .ok_or_else(|| CircuitError::MissingParam("ops".into()))?;
            let mut ks = Vec::new();
            for item in raw {
                ks.push(crate::circuit::pairs_to_matrix(
                    &crate::circuit::get_param_pairs(item)?,
                )?);
            }
            kraus_channel(ks, qubits)?
        }
        other => {
            return Err(CircuitError::UnknownChannel {
                name: other.to_string(),
                moment: 0,
                op: 0,
            })
        }
    };
    op.measurement_key = key;
    Ok(op)
}

fn one_qubit(name: &str, qubits: &[QubitId]) -> Result<(), CircuitError> {
    if qubits.len() != 1 {
        return Err(CircuitError::ArityMismatch {
            name: name.to_string(),
            expected: 1,
            got: qubits.len(),
        });
    }
    Ok(())
}
