//! Validation oracles: slow, independent reference computations used by the
//! test suites to check the fast paths. Not a product feature; the density
//! matrix here is capped at 10 qubits.

use crate::circuit::{Circuit, Operation};
use crate::matrix::{hermitian_inv_sqrt, CMatrix};
use crate::pauli::PauliString;
use num_complex::Complex64;
use rand::Rng;

/// Apply a gate by building the full 2^n x 2^n embedded matrix and doing a
/// dense matrix-vector product. Independent of the engine kernels.
pub fn apply_dense_embedding(
    amps: &[Complex64],
    u: &CMatrix,
    qubits: &[usize],
) -> Vec<Complex64> {
    let dim = amps.len();
    let n = dim.trailing_zeros() as usize;
    let full = u.embed(qubits, n);
    full.matvec(amps)
}

/// Haar-ish random unitary via Gram-Schmidt on a random complex matrix.
pub fn random_unitary<R: Rng>(q: usize, rng: &mut R) -> CMatrix {
    let dim = 1usize << q;
    let mut cols: Vec<Vec<Complex64>> = (0..dim)
        .map(|_| {
            (0..dim)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect()
        })
        .collect();
    for i in 0..dim {
        for j in 0..i {
            let proj: Complex64 = (0..dim).map(|r| cols[j][r].conj() * cols[i][r]).sum();
            for r in 0..dim {
                let prev = cols[j][r];
                cols[i][r] -= proj * prev;
            }
        }
        let norm: f64 = cols[i].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for r in 0..dim {
            cols[i][r] /= norm;
        }
    }
    let mut m = CMatrix::zeros(dim);
    for r in 0..dim {
        for c in 0..dim {
            m[(r, c)] = cols[c][r];
        }
    }
    m
}

/// Random normalized amplitude vector.
pub fn random_amplitudes<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let mut amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    amps
}

/// Random trace-preserving Kraus set of `count` operators on a `dim`-dim
/// space: draw arbitrary matrices A_i and right-multiply by (Σ A†A)^(-1/2).
pub fn random_kraus_set<R: Rng>(dim: usize, count: usize, rng: &mut R) -> Vec<CMatrix> {
    let raw: Vec<CMatrix> = (0..count)
        .map(|_| {
            let mut m = CMatrix::zeros(dim);
            for r in 0..dim {
                for c in 0..dim {
                    m[(r, c)] =
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                }
            }
            m
        })
        .collect();
    let mut total = CMatrix::zeros(dim);
    for a in &raw {
        total = total.add(&a.dagger().matmul(a));
    }
    let fix = hermitian_inv_sqrt(&total);
    raw.into_iter().map(|a| a.matmul(&fix)).collect()
}

/// Full density-matrix evolution, usable up to 10 qubits.
///
/// ρ is stored as a 2^(2n) vector with the row index in the low n bits; gates
/// act on the row side and conjugated on the column side.
pub struct DensityMatrix {
    n: usize,
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    pub const MAX_QUBITS: usize = 10;

    pub fn zero_state(n: usize) -> Self {
        assert!(n <= Self::MAX_QUBITS, "density-matrix oracle capped at 10 qubits");
        let mut rho = vec![Complex64::new(0.0, 0.0); 1 << (2 * n)];
        rho[0] = Complex64::new(1.0, 0.0);
        DensityMatrix { n, rho }
    }

    pub fn from_pure(amps: &[Complex64]) -> Self {
        let dim = amps.len();
        let n = dim.trailing_zeros() as usize;
        assert!(n <= Self::MAX_QUBITS);
        let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                rho[c * dim + r] = amps[r] * amps[c].conj();
            }
        }
        DensityMatrix { n, rho }
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.rho[col * (1 << self.n) + row]
    }

    pub fn trace(&self) -> Complex64 {
        let dim = 1usize << self.n;
        (0..dim).map(|i| self.rho[i * dim + i]).sum()
    }

    /// Apply a small matrix to the given bit positions of the 2^(2n) tensor.
    fn apply_side(target: &mut [Complex64], m: &CMatrix, positions: &[usize]) {
        let dim_small = m.dim();
        let mask: usize = positions.iter().map(|&p| 1usize << p).sum();
        let offsets: Vec<usize> = (0..dim_small)
            .map(|j| {
                let mut idx = 0;
                for (b, &p) in positions.iter().enumerate() {
                    idx |= ((j >> b) & 1) << p;
                }
                idx
            })
            .collect();
        let mut v = vec![Complex64::new(0.0, 0.0); dim_small];
        for s in 0..target.len() {
            if s & mask != 0 {
                continue;
            }
            for (j, &off) in offsets.iter().enumerate() {
                v[j] = target[s | off];
            }
            for (j, &off) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..dim_small {
                    acc += m[(j, c)] * v[c];
                }
                target[s | off] = acc;
            }
        }
    }

    /// ρ ← U ρ U†.
    pub fn apply_unitary(&mut self, u: &CMatrix, qubits: &[usize]) {
        let row_pos: Vec<usize> = qubits.to_vec();
        let col_pos: Vec<usize> = qubits.iter().map(|&q| q + self.n).collect();
        Self::apply_side(&mut self.rho, u, &row_pos);
        Self::apply_side(&mut self.rho, &u.conj(), &col_pos);
    }

    /// ρ ← Σ_i K_i ρ K_i†.
    pub fn apply_channel(&mut self, kraus: &[CMatrix], qubits: &[usize]) {
        let row_pos: Vec<usize> = qubits.to_vec();
        let col_pos: Vec<usize> = qubits.iter().map(|&q| q + self.n).collect();
        let mut acc = vec![Complex64::new(0.0, 0.0); self.rho.len()];
        for k in kraus {
            let mut tmp = self.rho.clone();
            Self::apply_side(&mut tmp, k, &row_pos);
            Self::apply_side(&mut tmp, &k.conj(), &col_pos);
            for (a, t) in acc.iter_mut().zip(&tmp) {
                *a += t;
            }
        }
        self.rho = acc;
    }

    /// Non-selective computational-basis measurement: zero coherences
    /// between branches that differ on any measured qubit.
    pub fn dephase_measurement(&mut self, qubits: &[usize]) {
        let dim = 1usize << self.n;
        for (idx, v) in self.rho.iter_mut().enumerate() {
            let (row, col) = (idx % dim, idx / dim);
            if qubits.iter().any(|&q| (row >> q) & 1 != (col >> q) & 1) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Evolve through a whole circuit (measurements become dephasing, which
    /// matches the trajectory average).
    pub fn apply_circuit(&mut self, circuit: &Circuit) {
        assert_eq!(circuit.n_qubits, self.n);
        for moment in &circuit.moments {
            for op in &moment.operations {
                match op {
                    Operation::Gate(g) => {
                        let qs: Vec<usize> = g.qubits.iter().map(|q| q.0).collect();
                        self.apply_unitary(&g.matrix, &qs);
                    }
                    Operation::Channel(c) => {
                        let qs: Vec<usize> = c.qubits.iter().map(|q| q.0).collect();
                        self.apply_channel(&c.kraus, &qs);
                    }
                    Operation::Measure(m) => {
                        let qs: Vec<usize> = m.qubits.iter().map(|q| q.0).collect();
                        self.dephase_measurement(&qs);
                    }
                }
            }
        }
    }

    /// tr(ρ P) for a Pauli string.
    pub fn expectation_pauli(&self, pauli: &PauliString) -> f64 {
        let (xmask, zymask, y_count) = pauli.masks();
        let dim = 1usize << self.n;
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..dim {
            let c = r ^ xmask;
            let sign = if ((r & zymask).count_ones() & 1) == 1 {
                -1.0
            } else {
                1.0
            };
            acc += self.entry(r, c) * sign;
        }
        let phase = match y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        (acc * phase).re
    }
}
