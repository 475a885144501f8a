//! Named gate constructors.
//!
//! Every constructor materializes the gate matrix; the engine never needs to
//! know gate names. Matrix convention: bit `j` of the index corresponds to
//! `qubits[j]` (least significant first).

use crate::circuit::{CircuitError, GateKind, GateOp, QubitId};
use crate::matrix::CMatrix;
use num_complex::Complex64;
use serde_json::{Map, Value};
use std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn x_matrix() -> CMatrix {
    CMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn y_matrix() -> CMatrix {
    CMatrix::from_rows(2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn z_matrix() -> CMatrix {
    CMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn h_matrix() -> CMatrix {
    let s = FRAC_1_SQRT_2;
    CMatrix::from_real(2, &[s, s, s, -s])
}

/// RZ(φ) = diag(e^{−iφ/2}, e^{iφ/2}).
pub fn rz_matrix(phi: f64) -> CMatrix {
    CMatrix::from_rows(
        2,
        &[
            Complex64::from_polar(1.0, -phi / 2.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            Complex64::from_polar(1.0, phi / 2.0),
        ],
    )
}

pub fn cz_matrix() -> CMatrix {
    CMatrix::from_real(
        4,
        &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, -1.0,
        ],
    )
}

pub fn iswap_matrix() -> CMatrix {
    let mut m = CMatrix::zeros(4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 2)] = c(0.0, 1.0);
    m[(2, 1)] = c(0.0, 1.0);
    m[(3, 3)] = c(1.0, 0.0);
    m
}

pub fn sqrt_iswap_matrix() -> CMatrix {
    let s = FRAC_1_SQRT_2;
    let mut m = CMatrix::zeros(4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 1)] = c(s, 0.0);
    m[(1, 2)] = c(0.0, s);
    m[(2, 1)] = c(0.0, s);
    m[(2, 2)] = c(s, 0.0);
    m[(3, 3)] = c(1.0, 0.0);
    m
}

/// fSim(θ, φ): iSWAP-like swap by angle θ with a conditional phase e^{−iφ}
/// on |11⟩.
pub fn fsim_matrix(theta: f64, phi: f64) -> CMatrix {
    let (ct, st) = (theta.cos(), theta.sin());
    let mut m = CMatrix::zeros(4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 1)] = c(ct, 0.0);
    m[(1, 2)] = c(0.0, -st);
    m[(2, 1)] = c(0.0, -st);
    m[(2, 2)] = c(ct, 0.0);
    m[(3, 3)] = Complex64::from_polar(1.0, -phi);
    m
}

/// Z-phase error e^{iφZ} = diag(e^{iφ}, e^{−iφ}), expressed as RZ(−2φ).
pub fn zphase(qubit: QubitId, phi: f64) -> GateOp {
    rz(qubit, -2.0 * phi)
}

pub fn x(q: QubitId) -> GateOp {
    GateOp::new(GateKind::X, vec![q], x_matrix(), None).unwrap()
}

pub fn y(q: QubitId) -> GateOp {
    GateOp::new(GateKind::Y, vec![q], y_matrix(), None).unwrap()
}

pub fn z(q: QubitId) -> GateOp {
    GateOp::new(GateKind::Z, vec![q], z_matrix(), None).unwrap()
}

pub fn h(q: QubitId) -> GateOp {
    GateOp::new(GateKind::H, vec![q], h_matrix(), None).unwrap()
}

pub fn rz(q: QubitId, phi: f64) -> GateOp {
    GateOp::new(GateKind::Rz(phi), vec![q], rz_matrix(phi), None).unwrap()
}

pub fn cz(a: QubitId, b: QubitId) -> GateOp {
    GateOp::new(GateKind::Cz, vec![a, b], cz_matrix(), None).unwrap()
}

pub fn iswap(a: QubitId, b: QubitId) -> GateOp {
    GateOp::new(GateKind::ISwap, vec![a, b], iswap_matrix(), None).unwrap()
}

pub fn sqrt_iswap(a: QubitId, b: QubitId) -> GateOp {
    GateOp::new(GateKind::SqrtISwap, vec![a, b], sqrt_iswap_matrix(), None).unwrap()
}

pub fn fsim(a: QubitId, b: QubitId, theta: f64, phi: f64) -> GateOp {
    GateOp::new(
        GateKind::FSim { theta, phi },
        vec![a, b],
        fsim_matrix(theta, phi),
        None,
    )
    .unwrap()
}

/// Arbitrary unitary on the given qubits.
pub fn unitary(qubits: Vec<QubitId>, matrix: CMatrix) -> Result<GateOp, CircuitError> {
    GateOp::new(GateKind::U, qubits, matrix, None)
}

fn check_arity(name: &str, expected: usize, got: usize) -> Result<(), CircuitError> {
    if expected != got {
        return Err(CircuitError::ArityMismatch {
            name: name.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

/// Construct a gate from its serialized name and parameters.
pub(crate) fn build_named_gate(
    name: &str,
    qubits: Vec<QubitId>,
    params: &Map<String, Value>,
    duration_ns: Option<f64>,
) -> Result<GateOp, CircuitError> {
    let nq = qubits.len();
    let (kind, matrix) = match name {
        "X" => {
            check_arity(name, 1, nq)?;
            (GateKind::X, x_matrix())
        }
        "Y" => {
            check_arity(name, 1, nq)?;
            (GateKind::Y, y_matrix())
        }
        "Z" => {
            check_arity(name, 1, nq)?;
            (GateKind::Z, z_matrix())
        }
        "H" => {
            check_arity(name, 1, nq)?;
            (GateKind::H, h_matrix())
        }
        "RZ" => {
            check_arity(name, 1, nq)?;
            let phi = crate::circuit::get_param_f64(params, "phi")?;
            (GateKind::Rz(phi), rz_matrix(phi))
        }
        "CZ" => {
            check_arity(name, 2, nq)?;
            (GateKind::Cz, cz_matrix())
        }
        "ISWAP" => {
            check_arity(name, 2, nq)?;
            (GateKind::ISwap, iswap_matrix())
        }
        "SQRT_ISWAP" => {
            check_arity(name, 2, nq)?;
            (GateKind::SqrtISwap, sqrt_iswap_matrix())
        }
        "FSIM" => {
            check_arity(name, 2, nq)?;
            let theta = crate::circuit::get_param_f64(params, "theta")?;
            let phi = crate::circuit::get_param_f64(params, "phi")?;
            (GateKind::FSim { theta, phi }, fsim_matrix(theta, phi))
        }
        "U" => {
            let value = params
                .get("matrix")
                .ok_or_else(|| CircuitError::MissingParam("matrix".into()))?;
            let pairs = crate::circuit::get_param_pairs(value)?;
            let m = crate::circuit::pairs_to_matrix(&pairs)?;
            if m.dim() != 1 << nq {
                return Err(CircuitError::ArityMismatch {
                    name: name.to_string(),
                    expected: m.dim().trailing_zeros() as usize,
                    got: nq,
                });
            }
            (GateKind::U, m)
        }
        other => {
            return Err(CircuitError::UnknownGate {
                name: other.to_string(),
                moment: 0,
                op: 0,
            })
        }
    };
    GateOp::new(kind, qubits, matrix, duration_ns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::BUILTIN_TOL;

    #[test]
    fn builtin_gates_are_unitary() {
        for m in [
            x_matrix(),
            y_matrix(),
            z_matrix(),
            h_matrix(),
            rz_matrix(0.7),
            cz_matrix(),
            iswap_matrix(),
            sqrt_iswap_matrix(),
            fsim_matrix(0.3, 1.1),
        ] {
            assert!(m.is_unitary(BUILTIN_TOL));
        }
    }

    #[test]
    fn sqrt_iswap_squares_to_iswap() {
        let s = sqrt_iswap_matrix();
        assert!(s.matmul(&s).max_abs_diff(&iswap_matrix()) < 1e-15);
    }

    #[test]
    fn fsim_specializations() {
        assert!(fsim_matrix(0.0, 0.0).max_abs_diff(&CMatrix::identity(4)) < 1e-15);
        // CZ is fSim(0, π): phase −1 on |11⟩.
        assert!(fsim_matrix(0.0, std::f64::consts::PI).max_abs_diff(&cz_matrix()) < 1e-15);
        // iSWAP is fSim(−π/2, 0).
        assert!(
            fsim_matrix(-std::f64::consts::FRAC_PI_2, 0.0).max_abs_diff(&iswap_matrix()) < 1e-15
        );
    }

    #[test]
    fn zphase_is_exp_of_z() {
        let phi = 0.37;
        let g = zphase(QubitId(0), phi);
        assert!((g.matrix[(0, 0)] - Complex64::from_polar(1.0, phi)).norm() < 1e-15);
        assert!((g.matrix[(1, 1)] - Complex64::from_polar(1.0, -phi)).norm() < 1e-15);
    }
}
