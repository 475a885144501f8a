//! Small dense complex matrices.
//!
//! Gate and Kraus matrices are at most 64x64 (six qubits), so everything here
//! is plain row-major storage with straightforward loops. The Jacobi
//! eigensolver at the bottom backs the singular-value lower bounds used by
//! the trajectory sampler.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut, Mul};

/// Dense, square, row-major complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from a row-major slice; `data.len()` must be a perfect square.
    pub fn from_rows(dim: usize, data: &[Complex64]) -> Self {
        assert_eq!(data.len(), dim * dim, "row-major data length mismatch");
        CMatrix {
            dim,
            data: data.to_vec(),
        }
    }

    /// Build from real entries (imaginary parts zero).
    pub fn from_real(dim: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), dim * dim);
        CMatrix {
            dim,
            data: data.iter().map(|&re| Complex64::new(re, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn scale(&self, c: Complex64) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, other.dim);
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn conj(&self) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x.conj()).collect(),
        }
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn kron(&self, rhs: &CMatrix) -> CMatrix {
        let (na, nb) = (self.dim, rhs.dim);
        let mut out = CMatrix::zeros(na * nb);
        for ra in 0..na {
            for ca in 0..na {
                let v = self[(ra, ca)];
                for rb in 0..nb {
                    for cb in 0..nb {
                        out[(ra * nb + rb, ca * nb + cb)] = v * rhs[(rb, cb)];
                    }
                }
            }
        }
        out
    }

    /// Max absolute entry of `self† self − I`.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.dagger().matmul(self);
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                let expect = if r == c { 1.0 } else { 0.0 };
                let d = (prod[(r, c)] - Complex64::new(expect, 0.0)).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..self.dim {
                acc += self[(r, c)] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// Reorder the index bits of a gate matrix.
    ///
    /// `perm[b]` gives the bit position in the new index that carries what bit
    /// `b` of the old index carried. Used to canonicalize a gate expressed on
    /// an arbitrary qubit ordering into ascending-qubit order.
    pub fn permute_index_bits(&self, perm: &[usize]) -> CMatrix {
        let q = perm.len();
        assert_eq!(self.dim, 1 << q);
        let remap = |idx: usize| -> usize {
            let mut out = 0;
            for (b, &p) in perm.iter().enumerate() {
                out |= ((idx >> b) & 1) << p;
            }
            out
        };
        let mut out = CMatrix::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(remap(r), remap(c))] = self[(r, c)];
            }
        }
        out
    }

    /// Embed a gate on `positions` (bit indices of the enclosing space) into a
    /// `2^space_bits`-dimensional identity-padded matrix.
    pub fn embed(&self, positions: &[usize], space_bits: usize) -> CMatrix {
        let q = positions.len();
        assert_eq!(self.dim, 1 << q);
        let dim = 1usize << space_bits;
        let mut out = CMatrix::zeros(dim);
        let rest_mask: usize = {
            let mut m = dim - 1;
            for &p in positions {
                m &= !(1 << p);
            }
            m
        };
        let spread = |sub: usize| -> usize {
            let mut out = 0;
            for (b, &p) in positions.iter().enumerate() {
                out |= ((sub >> b) & 1) << p;
            }
            out
        };
        for col in 0..dim {
            let rest = col & rest_mask;
            let mut sub_col = 0;
            for (b, &p) in positions.iter().enumerate() {
                sub_col |= ((col >> p) & 1) << b;
            }
            for sub_row in 0..self.dim {
                let v = self[(sub_row, sub_col)];
                if v != Complex64::new(0.0, 0.0) {
                    out[(rest | spread(sub_row), col)] += v;
                }
            }
        }
        out
    }

    /// Largest eigenvalue magnitude of `self† self` (squared spectral norm).
    pub fn spectral_norm_sq(&self) -> f64 {
        *hermitian_eigenvalues(&self.dagger().matmul(self))
            .last()
            .unwrap()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Unit complex number for a phase given in turns (1 turn = 2π).
///
/// Exact at multiples of a quarter turn, so phases like π land on ±1/±i with
/// no floating-point residue.
pub fn cis_turns(turns: f64) -> Complex64 {
    let q = turns * 4.0;
    if q == q.round() && q.abs() < 1e15 {
        match (q.round() as i64).rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    } else {
        let rad = turns * std::f64::consts::TAU;
        Complex64::new(rad.cos(), rad.sin())
    }
}

/// Pack the bits of `value` selected by `mask` into the low bits of the result.
pub fn compress_bits(value: usize, mask: usize) -> usize {
    let mut out = 0;
    let mut out_bit = 0;
    let mut m = mask;
    while m != 0 {
        let b = m.trailing_zeros() as usize;
        out |= ((value >> b) & 1) << out_bit;
        out_bit += 1;
        m &= m - 1;
    }
    out
}

/// Scatter the low bits of `value` into the positions selected by `mask`.
pub fn expand_bits(value: usize, mask: usize) -> usize {
    let mut out = 0;
    let mut in_bit = 0;
    let mut m = mask;
    while m != 0 {
        let b = m.trailing_zeros() as usize;
        out |= ((value >> in_bit) & 1) << b;
        in_bit += 1;
        m &= m - 1;
    }
    out
}

/// One cyclic Jacobi pass: diagonalize `a` in place, accumulating the
/// eigenvector transform into `vecs` when given.
fn jacobi_diagonalize(a: &mut CMatrix, mut vecs: Option<&mut CMatrix>) {
    let n = a.dim();
    if n < 2 {
        return;
    }
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for r in 0..n {
            for c in (r + 1)..n {
                off += a[(r, c)].norm_sqr();
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g < 1e-300 {
                    continue;
                }
                // Factor the rotation as a phase (making the pivot real)
                // followed by a real Jacobi rotation:
                //   V = [[c, -s], [e^{-iφ} s, e^{-iφ} c]],  a_pq = g e^{iφ}.
                let phase = apq / g;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * g).atan2(app - aqq);
                let (c, s) = (theta.cos(), theta.sin());
                let cphase = phase.conj();
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * c + arq * cphase * s;
                    a[(r, q)] = -arp * s + arq * cphase * c;
                }
                for col in 0..n {
                    let apc = a[(p, col)];
                    let aqc = a[(q, col)];
                    a[(p, col)] = apc * c + aqc * phase * s;
                    a[(q, col)] = -apc * s + aqc * phase * c;
                }
                if let Some(v) = vecs.as_deref_mut() {
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = vrp * c + vrq * cphase * s;
                        v[(r, q)] = -vrp * s + vrq * cphase * c;
                    }
                }
            }
        }
    }
}

/// Eigenvalues of a Hermitian matrix, ascending, via cyclic Jacobi rotations.
///
/// Converges to ~1e-12 off-diagonal mass for the matrix sizes used here
/// (≤ 64x64). Input must be Hermitian.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    let n = h.dim();
    let mut a = h.clone();
    jacobi_diagonalize(&mut a, None);
    let mut eigs: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

/// Hermitian inverse square root via Jacobi eigendecomposition.
///
/// Used by test helpers that complete a random operator set into a valid
/// Kraus set; kept here next to the eigensolver it shares rotations with.
pub fn hermitian_inv_sqrt(h: &CMatrix) -> CMatrix {
    let n = h.dim();
    let mut a = h.clone();
    let mut v = CMatrix::identity(n);
    jacobi_diagonalize(&mut a, Some(&mut v));
    let mut out = CMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let lambda = a[(k, k)].re.max(1e-300);
                acc += v[(r, k)] * v[(c, k)].conj() / lambda.sqrt();
            }
            out[(r, c)] = acc;
        }
    }
    out
}
