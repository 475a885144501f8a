//! Seed-reproducible random benchmark circuits: alternating layers of
//! random single-qubit rotations and a fixed two-qubit-gate brick pattern.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajsim_core::circuit::{Moment, Operation, QubitId};
use trajsim_core::gates;
use trajsim_core::matrix::CMatrix;
use trajsim_core::Circuit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TwoQubitGate {
    Cz,
    #[default]
    SqrtIswap,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RandomCircuitSpec {
    pub qubits: usize,
    /// Number of layers; even layers are single-qubit rotations, odd layers
    /// the two-qubit brick pattern.
    pub depth: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gate_set: TwoQubitGate,
}

fn random_rotation(rng: &mut ChaCha8Rng) -> CMatrix {
    // Euler decomposition RZ(a) · RY(b) · RZ(c) with uniform angles.
    let tau = std::f64::consts::TAU;
    let (a, b, c) = (
        rng.random::<f64>() * tau,
        rng.random::<f64>() * tau,
        rng.random::<f64>() * tau,
    );
    let ry = CMatrix::from_real(
        2,
        &[
            (b / 2.0).cos(),
            -(b / 2.0).sin(),
            (b / 2.0).sin(),
            (b / 2.0).cos(),
        ],
    );
    gates::rz_matrix(a).matmul(&ry).matmul(&gates::rz_matrix(c))
}

/// Generate the benchmark circuit for a spec. Identical specs give
/// identical circuits.
pub fn random_circuit(spec: &RandomCircuitSpec) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.qubits;
    let mut circuit = Circuit::new(n);
    let mut odd_layers = 0usize;
    for layer in 0..spec.depth {
        let ops: Vec<Operation> = if layer % 2 == 0 {
            (0..n)
                .map(|q| {
                    Operation::Gate(
                        gates::unitary(vec![QubitId(q)], random_rotation(&mut rng)).unwrap(),
                    )
                })
                .collect()
        } else {
            let offset = odd_layers % 2;
            odd_layers += 1;
            let mut ops = Vec::new();
            let mut q = offset;
            while q + 1 < n {
                let (a, b) = (QubitId(q), QubitId(q + 1));
                ops.push(Operation::Gate(match spec.gate_set {
                    TwoQubitGate::Cz => gates::cz(a, b),
                    TwoQubitGate::SqrtIswap => gates::sqrt_iswap(a, b),
                }));
                q += 2;
            }
            ops
        };
        if !ops.is_empty() {
            circuit.push(Moment::new(ops).unwrap());
        }
    }
    circuit
}
