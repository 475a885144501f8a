//! Gate application kernels.
//!
//! `apply_gate_naive` is the reference path: block-diagonalize the full
//! matrix-vector product into 2^(n−q) small (gate matrix)·subvector
//! products, gather/scatter through the state's layout.
//!
//! `apply_gate_blocked` mirrors the SIMD scheme on a blocked(k) state: lane
//! groups of k amplitudes are processed together, with low gate qubits
//! (index < log2 k) handled by intra-group lane permutations and a
//! lane-replicated matrix table. It is portable scalar code parameterized by
//! the lane count; both paths must agree to rounding.

use crate::matrix::{compress_bits, expand_bits, CMatrix};
use crate::state::{EngineError, Layout, Real, StateVector};
use num_complex::Complex;
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Below this qubit count gate application stays single-threaded.
static THREADING_MIN_QUBITS: AtomicUsize = AtomicUsize::new(17);

pub fn set_threading_min_qubits(n: usize) {
    THREADING_MIN_QUBITS.store(n, Ordering::Relaxed);
}

pub fn threading_min_qubits() -> usize {
    THREADING_MIN_QUBITS.load(Ordering::Relaxed)
}

/// Lane/qubit split of a gate on a blocked(k) state.
///
/// `l` low gate qubits sit below log2(k) and are mixed inside a lane group;
/// `h` high gate qubits select whole lane groups. `m` is the low-qubit mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaneGeometry {
    pub k: usize,
    pub q: usize,
    pub l: usize,
    pub h: usize,
    pub m: usize,
}

impl LaneGeometry {
    /// Split sorted gate qubits into low/high relative to lane count `k`.
    pub fn new(k: usize, sorted_qubits: &[usize]) -> LaneGeometry {
        debug_assert!(k.is_power_of_two());
        let log2k = k.trailing_zeros() as usize;
        let q = sorted_qubits.len();
        let mut m = 0usize;
        let mut l = 0usize;
        for &qb in sorted_qubits {
            if qb < log2k {
                m |= 1 << qb;
                l += 1;
            }
        }
        LaneGeometry {
            k,
            q,
            l,
            h: q - l,
            m,
        }
    }

    pub fn log2k(&self) -> usize {
        self.k.trailing_zeros() as usize
    }

    /// Lane-group iterations of the outer loop for an n-qubit state:
    /// 2^(n − h − log2 k).
    pub fn outer_iterations(&self, n: usize) -> usize {
        1 << (n - self.h - self.log2k())
    }
}

/// Destination lane of source element `i` in additional register `reg`.
///
/// The masked bits of `i` are decremented by `reg` modulo 2^l (compressed
/// with respect to `m`); unmasked bits pass through. Fixed by the worked
/// three-register example for k = 8, m = 3.
pub fn lane_permutation(i: usize, reg: usize, m: usize, k: usize) -> usize {
    let l = m.count_ones() as usize;
    let span = 1usize << l;
    let rotated = (compress_bits(i, m) + span - (reg % span)) & (span - 1);
    expand_bits(rotated, m) | (i & !m & (k - 1))
}

/// Source lane feeding destination lane `p` of additional register `reg`
/// (inverse of `lane_permutation`).
pub fn lane_source(p: usize, reg: usize, m: usize, k: usize) -> usize {
    let l = m.count_ones() as usize;
    let span = 1usize << l;
    let rotated = (compress_bits(p, m) + reg) & (span - 1);
    expand_bits(rotated, m) | (p & !m & (k - 1))
}

/// Lane-replicated matrix table for the blocked kernel.
///
/// Entry (j, kk, lane i) holds U_{j'k'} with
///   s  = j·2^(l+q) + r_i·2^q + 2^l·⌊kk/2^l⌋ + (r_i + kk) mod 2^l,
///   j' = ⌊s/2^q⌋, k' = s mod 2^q,
/// where r_i is lane i compressed with respect to the low-qubit mask. `u`
/// must already be in ascending-qubit (canonical) order. Returned as
/// separate re/im planes indexed [(j·2^q + kk)·k + i].
pub fn matrix_lane_layout<P: Real>(u: &CMatrix, geom: &LaneGeometry) -> (Vec<P>, Vec<P>) {
    let LaneGeometry { k, q, l, h, m } = *geom;
    debug_assert_eq!(u.dim(), 1 << q);
    let span = 1usize << l;
    let mut re = vec![P::zero(); (1 << h) * (1 << q) * k];
    let mut im = vec![P::zero(); (1 << h) * (1 << q) * k];
    for j in 0..1usize << h {
        for kk in 0..1usize << q {
            let base = ((j << q) + kk) * k;
            for lane in 0..k {
                let r_i = compress_bits(lane, m);
                let s = (j << (l + q)) + (r_i << q) + (span * (kk / span)) + ((r_i + kk) & (span - 1));
                let entry = u[(s >> q, s & ((1 << q) - 1))];
                re[base + lane] = P::from_f64(entry.re);
                im[base + lane] = P::from_f64(entry.im);
            }
        }
    }
    (re, im)
}

fn check_gate_args<P: Real>(
    state: &StateVector<P>,
    u: &CMatrix,
    qubits: &[usize],
) -> Result<(), EngineError> {
    if u.dim() != 1 << qubits.len() {
        return Err(EngineError::DimensionMismatch {
            matrix_dim: u.dim(),
            n_qubits: qubits.len(),
        });
    }
    let mut seen = 0usize;
    for &q in qubits {
        if q >= state.n_qubits() {
            return Err(EngineError::QubitOutOfRange {
                qubit: q,
                n: state.n_qubits(),
            });
        }
        if seen & (1 << q) != 0 {
            return Err(EngineError::DuplicateQubit(q));
        }
        seen |= 1 << q;
    }
    Ok(())
}

/// Pointer wrapper for writes to disjoint index sets from parallel workers.
struct SharedMut<P>(*mut P);
unsafe impl<P> Send for SharedMut<P> {}
unsafe impl<P> Sync for SharedMut<P> {}

impl<P> SharedMut<P> {
    fn get(&self) -> *mut P {
        self.0
    }
}

fn run_blocks<F>(total: usize, parallel: bool, body: F)
where
    F: Fn(std::ops::Range<usize>) + Sync,
{
    if !parallel || total < 2 {
        body(0..total);
        return;
    }
    let pieces = rayon::current_num_threads().max(1) * 4;
    let chunk = total.div_ceil(pieces).max(1);
    let starts: Vec<usize> = (0..total).step_by(chunk).collect();
    starts
        .into_par_iter()
        .for_each(|s| body(s..(s + chunk).min(total)));
}

fn should_parallelize(n: usize) -> bool {
    n >= threading_min_qubits() && rayon::current_num_threads() > 1
}

/// Reference gate application: for each of the 2^(n−q) subvector blocks,
/// gather v, compute w = U v, write w back. Works on any layout; the matrix
/// follows the given qubit order (bit j of the subvector index = qubits[j]).
pub fn apply_gate_naive<P: Real>(
    state: &mut StateVector<P>,
    u: &CMatrix,
    qubits: &[usize],
) -> Result<(), EngineError> {
    check_gate_args(state, u, qubits)?;
    let n = state.n_qubits();
    let q = qubits.len();
    let dim = 1usize << q;

    // Index offset of each subvector element relative to the block base.
    let offsets: Vec<usize> = (0..dim)
        .map(|j| {
            let mut idx = 0;
            for (b, &qa) in qubits.iter().enumerate() {
                idx |= ((j >> b) & 1) << qa;
            }
            idx
        })
        .collect();
    let gate_mask: usize = qubits.iter().map(|&qa| 1usize << qa).sum();
    let rest_mask = ((1usize << n) - 1) & !gate_mask;

    let u_re: Vec<P> = u.data().iter().map(|c| P::from_f64(c.re)).collect();
    let u_im: Vec<P> = u.data().iter().map(|c| P::from_f64(c.im)).collect();

    let layout = state.layout();
    let n_total = state.len();
    let scalar_index = move |i: usize| -> (usize, usize) {
        match layout {
            Layout::Interleaved => (2 * i, 2 * i + 1),
            Layout::Blocked(k) => {
                let base = (i / k) * 2 * k + (i % k);
                (base, base + k)
            }
        }
    };

    let parallel = should_parallelize(n);
    let ptr = SharedMut(state.raw_mut().as_mut_ptr());
    let blocks = n_total >> q;
    run_blocks(blocks, parallel, |range| {
        let data = ptr.get();
        let mut v_re = vec![P::zero(); dim];
        let mut v_im = vec![P::zero(); dim];
        let mut w_re = vec![P::zero(); dim];
        let mut w_im = vec![P::zero(); dim];
        for b in range {
            let base = expand_bits(b, rest_mask);
            for j in 0..dim {
                let (ri, ii) = scalar_index(base | offsets[j]);
                // Safety: blocks touch disjoint amplitude sets.
                unsafe {
                    v_re[j] = *data.add(ri);
                    v_im[j] = *data.add(ii);
                }
            }
            for j in 0..dim {
                let mut acc_re = P::zero();
                let mut acc_im = P::zero();
                let row = j * dim;
                for kk in 0..dim {
                    let (a, bb) = (u_re[row + kk], u_im[row + kk]);
                    let (c, d) = (v_re[kk], v_im[kk]);
                    acc_re = acc_re + a * c - bb * d;
                    acc_im = acc_im + a * d + bb * c;
                }
                w_re[j] = acc_re;
                w_im[j] = acc_im;
            }
            for j in 0..dim {
                let (ri, ii) = scalar_index(base | offsets[j]);
                unsafe {
                    *data.add(ri) = w_re[j];
                    *data.add(ii) = w_im[j];
                }
            }
        }
    });
    Ok(())
}

/// Lane-blocked gate application on a blocked(k) state.
///
/// Requires 2^n ≥ k; the caller (see [`apply_gate`]) falls back to the naive
/// path for smaller states, whose behaviour defines correctness.
pub fn apply_gate_blocked<P: Real>(
    state: &mut StateVector<P>,
    u: &CMatrix,
    qubits: &[usize],
) -> Result<(), EngineError> {
    check_gate_args(state, u, qubits)?;
    let k = match state.layout() {
        Layout::Blocked(k) => k,
        Layout::Interleaved => return Err(EngineError::BadLaneCount(0)),
    };
    let n = state.n_qubits();
    if state.len() < k {
        return apply_gate_naive(state, u, qubits);
    }
    let q = qubits.len();

    // Canonicalize to ascending qubit order: bit b of the gate index must be
    // the b-th smallest qubit.
    let mut sorted = qubits.to_vec();
    sorted.sort_unstable();
    let canonical = if sorted == qubits {
        u.clone()
    } else {
        let perm: Vec<usize> = qubits
            .iter()
            .map(|qa| sorted.iter().position(|s| s == qa).unwrap())
            .collect();
        u.permute_index_bits(&perm)
    };

    let geom = LaneGeometry::new(k, &sorted);
    let (l, h) = (geom.l, geom.h);
    let span = 1usize << l;
    let log2k = geom.log2k();
    let (u_re, u_im) = matrix_lane_layout::<P>(&canonical, &geom);

    // Source lane tables, one per register ordinal (0 = original order).
    let src: Vec<Vec<usize>> = (0..span)
        .map(|reg| (0..k).map(|p| lane_source(p, reg, geom.m, k)).collect())
        .collect();

    // Lane-group index space has n − log2k bits; high gate qubits map to
    // group bits (qubit − log2k), the rest enumerate the outer loop.
    let high_mask: usize = sorted
        .iter()
        .filter(|&&qa| qa >= log2k)
        .map(|&qa| 1usize << (qa - log2k))
        .sum();
    let group_bits = n - log2k;
    let rest_mask = ((1usize << group_bits) - 1) & !high_mask;

    let groups = geom.outer_iterations(n);
    let parallel = should_parallelize(n);
    let ptr = SharedMut(state.raw_mut().as_mut_ptr());

    run_blocks(groups, parallel, |range| {
        let data = ptr.get();
        let regs = 1usize << h;
        let mut in_re = vec![P::zero(); regs * k];
        let mut in_im = vec![P::zero(); regs * k];
        let mut out_re = vec![P::zero(); k];
        let mut out_im = vec![P::zero(); k];
        let mut bases = vec![0usize; regs];
        for g in range {
            let outer = expand_bits(g, rest_mask);
            for (t, base) in bases.iter_mut().enumerate() {
                *base = (outer | expand_bits(t, high_mask)) * 2 * k;
            }
            for t in 0..regs {
                // Safety: lane groups touched by distinct outer iterations
                // are disjoint.
                unsafe {
                    let src_ptr = data.add(bases[t]);
                    for lane in 0..k {
                        in_re[t * k + lane] = *src_ptr.add(lane);
                        in_im[t * k + lane] = *src_ptr.add(k + lane);
                    }
                }
            }
            for uidx in 0..regs {
                for o in out_re.iter_mut() {
                    *o = P::zero();
                }
                for o in out_im.iter_mut() {
                    *o = P::zero();
                }
                for kk in 0..1usize << q {
                    let t = kk >> l;
                    let reg = kk & (span - 1);
                    let table = &src[reg];
                    let mbase = ((uidx << q) + kk) * k;
                    for p in 0..k {
                        let s = table[p];
                        let (a, b) = (u_re[mbase + p], u_im[mbase + p]);
                        let (c, d) = (in_re[t * k + s], in_im[t * k + s]);
                        out_re[p] = out_re[p] + a * c - b * d;
                        out_im[p] = out_im[p] + a * d + b * c;
                    }
                }
                unsafe {
                    let dst = data.add(bases[uidx]);
                    for lane in 0..k {
                        *dst.add(lane) = out_re[lane];
                        *dst.add(k + lane) = out_im[lane];
                    }
                }
            }
        }
    });
    Ok(())
}

/// Apply a gate using the fast path the state's layout allows.
pub fn apply_gate<P: Real>(
    state: &mut StateVector<P>,
    u: &CMatrix,
    qubits: &[usize],
) -> Result<(), EngineError> {
    match state.layout() {
        Layout::Blocked(k) if state.len() >= k => apply_gate_blocked(state, u, qubits),
        _ => apply_gate_naive(state, u, qubits),
    }
}

/// ⟨Ψ| K†K |Ψ⟩ computed in place: stream each subvector through K and
/// accumulate the squared norm, without copying the state.
pub fn expectation_kkdag<P: Real>(
    state: &StateVector<P>,
    kmat: &CMatrix,
    qubits: &[usize],
) -> Result<f64, EngineError> {
    if kmat.dim() != 1 << qubits.len() {
        return Err(EngineError::DimensionMismatch {
            matrix_dim: kmat.dim(),
            n_qubits: qubits.len(),
        });
    }
    let n = state.n_qubits();
    let q = qubits.len();
    let dim = 1usize << q;
    let offsets: Vec<usize> = (0..dim)
        .map(|j| {
            let mut idx = 0;
            for (b, &qa) in qubits.iter().enumerate() {
                idx |= ((j >> b) & 1) << qa;
            }
            idx
        })
        .collect();
    let gate_mask: usize = qubits.iter().map(|&qa| 1usize << qa).sum();
    let rest_mask = ((1usize << n) - 1) & !gate_mask;

    let mut acc = 0.0f64;
    let mut v = vec![Complex::new(0.0f64, 0.0f64); dim];
    for b in 0..(state.len() >> q) {
        let base = expand_bits(b, rest_mask);
        for j in 0..dim {
            let a = state.amp(base | offsets[j]);
            v[j] = Complex::new(a.re.to_f64(), a.im.to_f64());
        }
        for row in 0..dim {
            let mut w = Complex::new(0.0f64, 0.0f64);
            for col in 0..dim {
                w += kmat[(row, col)] * v[col];
            }
            acc += w.norm_sqr();
        }
    }
    Ok(acc)
}

/// Scratch-buffer variant of [`expectation_kkdag`]: copies the state,
/// applies K, and measures the norm. Used as a cross-check oracle.
pub fn expectation_kkdag_scratch<P: Real>(
    state: &StateVector<P>,
    kmat: &CMatrix,
    qubits: &[usize],
) -> Result<f64, EngineError> {
    let mut copy = state.clone();
    apply_gate_naive(&mut copy, kmat, qubits)?;
    Ok(copy.norm2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::state::Layout;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::oracle::{random_amplitudes, random_unitary};

    fn random_state<P: Real>(n: usize, layout: Layout, rng: &mut ChaCha8Rng) -> StateVector<P> {
        StateVector::from_amplitudes(n, &random_amplitudes(n, rng), layout)
    }

    #[test]
    fn x_flips_zero_to_one() {
        let mut s: StateVector<f64> = StateVector::zero_state(1, Layout::Interleaved);
        apply_gate_naive(&mut s, &gates::x_matrix(), &[0]).unwrap();
        assert!((s.amp(1).re - 1.0).abs() < 1e-15);
        assert!(s.amp(0).norm_sqr() < 1e-30);
    }

    #[test]
    fn h_twice_is_identity_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s: StateVector<f32> = random_state(4, Layout::Interleaved, &mut rng);
        let mut t = s.clone();
        for q in 0..4 {
            apply_gate_naive(&mut t, &gates::h_matrix(), &[q]).unwrap();
            apply_gate_naive(&mut t, &gates::h_matrix(), &[q]).unwrap();
        }
        assert!(t.max_amp_diff(&s) < 1e-6);
    }

    #[test]
    fn naive_matches_dense_embedding_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let u = random_unitary(3, &mut rng);
        let s: StateVector<f64> = random_state(6, Layout::Interleaved, &mut rng);
        let mut fast = s.clone();
        apply_gate_naive(&mut fast, &u, &[0, 2, 4]).unwrap();
        let dense = crate::oracle::apply_dense_embedding(&s.amplitudes(), &u, &[0, 2, 4]);
        for (i, want) in dense.iter().enumerate() {
            let got = fast.amp(i);
            assert!((Complex64::new(got.re, got.im) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn lane_permutation_golden_three_registers() {
        // k = 8, m = 3: source a7a6a5a4a3a2a1a0 rearranges into
        //   a4a7a6a5a0a3a2a1 / a5a4a7a6a1a0a3a2 / a6a5a4a7a2a1a0a3.
        let expected = [
            "a4a7a6a5a0a3a2a1",
            "a5a4a7a6a1a0a3a2",
            "a6a5a4a7a2a1a0a3",
        ];
        for reg in 1..=3usize {
            let mut dst = [0usize; 8];
            for i in 0..8 {
                dst[lane_permutation(i, reg, 3, 8)] = i;
            }
            let rendered: String = (0..8).rev().map(|p| format!("a{}", dst[p])).collect();
            assert_eq!(rendered, expected[reg - 1], "register {reg}");
        }
    }

    #[test]
    fn lane_permutation_empty_family_when_all_high() {
        // m = 0 means l = 0: no additional registers exist; the identity
        // ordinal must map every lane to itself.
        for k in [4usize, 8, 16, 32] {
            for i in 0..k {
                assert_eq!(lane_permutation(i, 0, 0, k), i);
                assert_eq!(lane_source(i, 0, 0, k), i);
            }
        }
    }

    #[test]
    fn lane_permutation_bijective_and_inverse() {
        for k in [4usize, 8, 16, 32] {
            let log2k = k.trailing_zeros() as usize;
            for m in 0..1usize << log2k {
                let span = 1usize << m.count_ones();
                for reg in 0..span {
                    let mut seen = vec![false; k];
                    for i in 0..k {
                        let p = lane_permutation(i, reg, m, k);
                        assert!(p < k && !seen[p], "collision k={k} m={m} reg={reg}");
                        seen[p] = true;
                        assert_eq!(lane_source(p, reg, m, k), i);
                    }
                }
            }
        }
    }

    #[test]
    fn matrix_layout_broadcasts_when_all_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_unitary(2, &mut rng);
        let geom = LaneGeometry::new(4, &[2, 3]);
        assert_eq!((geom.l, geom.h), (0, 2));
        let (re, im) = matrix_lane_layout::<f64>(&u, &geom);
        for j in 0..4 {
            for kk in 0..4 {
                for lane in 0..4 {
                    let idx = ((j << 2) + kk) * 4 + lane;
                    assert_eq!(re[idx], u[(j, kk)].re);
                    assert_eq!(im[idx], u[(j, kk)].im);
                }
            }
        }
    }

    #[test]
    fn blocked_matches_naive_all_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u = random_unitary(2, &mut rng);
        let s: StateVector<f32> = random_state(7, Layout::blocked(8).unwrap(), &mut rng);
        let geom = LaneGeometry::new(8, &[4, 6]);
        assert_eq!(geom.outer_iterations(7), 1 << (7 - 2 - 3));
        let mut blocked = s.clone();
        apply_gate_blocked(&mut blocked, &u, &[4, 6]).unwrap();
        let mut naive = s.clone();
        apply_gate_naive(&mut naive, &u, &[4, 6]).unwrap();
        assert!(blocked.max_amp_diff(&naive) < 1e-6);
    }

    #[test]
    fn blocked_matches_naive_low_qubit() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let u = random_unitary(1, &mut rng);
        let s: StateVector<f32> = random_state(5, Layout::blocked(8).unwrap(), &mut rng);
        let mut blocked = s.clone();
        apply_gate_blocked(&mut blocked, &u, &[0]).unwrap();
        let mut naive = s.clone();
        apply_gate_naive(&mut naive, &u, &[0]).unwrap();
        assert!(blocked.max_amp_diff(&naive) < 1e-6);
    }

    #[test]
    fn blocked_identity_leaves_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let s: StateVector<f32> = random_state(6, Layout::blocked(4).unwrap(), &mut rng);
        for qubits in [vec![0], vec![3], vec![0, 5], vec![1, 2, 4]] {
            let eye = CMatrix::identity(1 << qubits.len());
            let mut t = s.clone();
            apply_gate_blocked(&mut t, &eye, &qubits).unwrap();
            assert!(t.max_amp_diff(&s) < 1e-7);
        }
    }

    #[test]
    fn blocked_exhaustive_basis_states_q1_l1_k4() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let u = random_unitary(1, &mut rng);
        for basis in 0..16 {
            let blocked_state: StateVector<f64> =
                StateVector::basis_state(4, basis, Layout::blocked(4).unwrap());
            let mut blocked = blocked_state.clone();
            apply_gate_blocked(&mut blocked, &u, &[1]).unwrap();
            let mut naive = blocked_state.clone();
            apply_gate_naive(&mut naive, &u, &[1]).unwrap();
            assert!(blocked.max_amp_diff(&naive) < 1e-14, "basis {basis}");
        }
    }

    #[test]
    fn blocked_matches_naive_q2_l2_k8() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let u = random_unitary(2, &mut rng);
        let s: StateVector<f64> = random_state(6, Layout::blocked(8).unwrap(), &mut rng);
        let mut blocked = s.clone();
        apply_gate_blocked(&mut blocked, &u, &[0, 1]).unwrap();
        let mut naive = s.clone();
        apply_gate_naive(&mut naive, &u, &[0, 1]).unwrap();
        assert!(blocked.max_amp_diff(&naive) < 1e-13);
    }

    #[test]
    fn blocked_handles_unsorted_qubit_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u = random_unitary(3, &mut rng);
        let s: StateVector<f64> = random_state(7, Layout::blocked(8).unwrap(), &mut rng);
        let qubits = [5usize, 1, 3];
        let mut blocked = s.clone();
        apply_gate_blocked(&mut blocked, &u, &qubits).unwrap();
        let mut naive = s.clone();
        apply_gate_naive(&mut naive, &u, &qubits).unwrap();
        assert!(blocked.max_amp_diff(&naive) < 1e-13);
    }

    #[test]
    fn tiny_state_falls_back_to_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let u = random_unitary(1, &mut rng);
        // 2 amplitudes < 8 lanes: apply_gate must still work.
        let mut s: StateVector<f32> = StateVector::zero_state(1, Layout::blocked(8).unwrap());
        apply_gate(&mut s, &u, &[0]).unwrap();
        let expect: StateVector<f32> = {
            let mut t = StateVector::zero_state(1, Layout::Interleaved);
            apply_gate_naive(&mut t, &u, &[0]).unwrap();
            t
        };
        assert!(s.max_amp_diff(&expect) < 1e-6);
    }

    #[test]
    fn unitary_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for q in 1..=4usize {
            let u = random_unitary(q, &mut rng);
            let mut s: StateVector<f32> = random_state(8, Layout::blocked(16).unwrap(), &mut rng);
            let before = s.norm2();
            let qubits: Vec<usize> = (0..q).map(|i| i * 2).collect();
            apply_gate_blocked(&mut s, &u, &qubits).unwrap();
            let bound = 4.0 * (1u64 << 8) as f64 * f32::EPSILON as f64;
            assert!((s.norm2() - before).abs() < bound);
        }
    }

    #[test]
    fn gate_arg_errors() {
        let mut s: StateVector<f64> = StateVector::zero_state(2, Layout::Interleaved);
        let eye4 = CMatrix::identity(4);
        assert!(matches!(
            apply_gate_naive(&mut s, &eye4, &[0]),
            Err(EngineError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            apply_gate_naive(&mut s, &eye4, &[0, 5]),
            Err(EngineError::QubitOutOfRange { .. })
        ));
        assert!(matches!(
            apply_gate_naive(&mut s, &eye4, &[1, 1]),
            Err(EngineError::DuplicateQubit(1))
        ));
    }

    #[test]
    fn results_independent_of_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let u = random_unitary(3, &mut rng);
        let s: StateVector<f32> = random_state(10, Layout::blocked(8).unwrap(), &mut rng);
        let qubits = [0usize, 4, 7];

        let mut sequential = s.clone();
        apply_gate_blocked(&mut sequential, &u, &qubits).unwrap();
        let mut sequential_naive = s.clone();
        apply_gate_naive(&mut sequential_naive, &u, &qubits).unwrap();

        let saved = threading_min_qubits();
        set_threading_min_qubits(4);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let (par_blocked, par_naive) = pool.install(|| {
            let mut b = s.clone();
            apply_gate_blocked(&mut b, &u, &qubits).unwrap();
            let mut n = s.clone();
            apply_gate_naive(&mut n, &u, &qubits).unwrap();
            (b, n)
        });
        set_threading_min_qubits(saved);

        assert_eq!(sequential.raw(), par_blocked.raw());
        assert_eq!(sequential_naive.raw(), par_naive.raw());
    }

    #[test]
    fn kkdag_in_place_matches_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let s: StateVector<f64> = random_state(6, Layout::Interleaved, &mut rng);
        let k = crate::channels::amplitude_damp(0.3, crate::circuit::QubitId(0))
            .unwrap()
            .kraus[0]
            .clone();
        let a = expectation_kkdag(&s, &k, &[2]).unwrap();
        let b = expectation_kkdag_scratch(&s, &k, &[2]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
