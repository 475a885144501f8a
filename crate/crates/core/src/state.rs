//! State vectors: 2^n complex amplitudes in single or double precision,
//! stored interleaved or lane-blocked.
//!
//! In the blocked(k) layout, storage alternates k real parts then k
//! imaginary parts, so a lane group loads straight into two SIMD-width
//! vectors. Basis convention: bit q of an amplitude index is the state of
//! qubit q.

use crate::pauli::PauliString;
use num_complex::Complex;
use num_traits::Float;
use rand::Rng;
use std::io::{Read, Write};
use thiserror::Error;

/// Permitted lane counts for the blocked layout (SIMD widths and a GPU warp).
pub const LANE_COUNTS: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("matrix dim {matrix_dim} does not match {n_qubits} gate qubit(s)")]
    DimensionMismatch { matrix_dim: usize, n_qubits: usize },
    #[error("qubit {qubit} out of range for {n}-qubit state")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("duplicate qubit {0} in gate qubit list")]
    DuplicateQubit(usize),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("state is not normalized (norm² = {0})")]
    Unnormalized(f64),
    #[error("unsupported lane count {0} (expected one of {LANE_COUNTS:?})")]
    BadLaneCount(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad state dump: {0}")]
    BadDump(String),
}

/// Floating-point precision of a state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

/// Scalar type of a state vector: f32 or f64.
pub trait Real: Float + Send + Sync + std::fmt::Debug + 'static {
    const PRECISION: Precision;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Amplitude storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// re, im, re, im, ...
    Interleaved,
    /// k real parts followed by k imaginary parts, repeating.
    Blocked(usize),
}

impl Layout {
    pub fn blocked(k: usize) -> Result<Layout, EngineError> {
        if !LANE_COUNTS.contains(&k) {
            return Err(EngineError::BadLaneCount(k));
        }
        Ok(Layout::Blocked(k))
    }

    fn code(self) -> u32 {
        match self {
            Layout::Interleaved => 0,
            Layout::Blocked(k) => k as u32,
        }
    }

    fn from_code(code: u32) -> Result<Layout, EngineError> {
        match code {
            0 => Ok(Layout::Interleaved),
            k => Layout::blocked(k as usize)
                .map_err(|_| EngineError::BadDump(format!("bad layout code {code}"))),
        }
    }
}

/// Full state vector of an n-qubit register.
#[derive(Clone, Debug)]
pub struct StateVector<P: Real> {
    n: usize,
    layout: Layout,
    data: Vec<P>,
}

impl<P: Real> StateVector<P> {
    /// |0...0⟩ in the given layout.
    ///
    /// A state smaller than one lane block (2^n < k) cannot fill a single
    /// register; it is stored interleaved and served by the naive kernel.
    pub fn zero_state(n: usize, layout: Layout) -> Self {
        let layout = match layout {
            Layout::Blocked(k) if (1usize << n) < k => Layout::Interleaved,
            other => other,
        };
        let mut data = vec![P::zero(); 2 << n];
        data[0] = P::one();
        StateVector { n, layout, data }
    }

    /// Computational basis state |index⟩.
    pub fn basis_state(n: usize, index: usize, layout: Layout) -> Self {
        let mut s = StateVector::zero_state(n, layout);
        s.data[0] = P::zero();
        let (re, _) = s.scalar_indices(index);
        s.data[re] = P::one();
        s
    }

    /// Build from double-precision amplitudes (narrowed to P as needed).
    pub fn from_amplitudes(n: usize, amps: &[Complex<f64>], layout: Layout) -> Self {
        assert_eq!(amps.len(), 1 << n, "amplitude count must be 2^n");
        let mut s = StateVector::zero_state(n, layout);
        s.data[0] = P::zero();
        for (i, a) in amps.iter().enumerate() {
            s.set_amp(i, Complex::new(P::from_f64(a.re), P::from_f64(a.im)));
        }
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn precision(&self) -> Precision {
        P::PRECISION
    }

    /// Bytes of amplitude storage: 8·2^n in single precision.
    pub fn storage_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<P>()
    }

    #[cfg(test)]
    pub(crate) fn raw(&self) -> &[P] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    /// (real, imag) storage positions of amplitude `i`.
    #[inline]
    pub(crate) fn scalar_indices(&self, i: usize) -> (usize, usize) {
        match self.layout {
            Layout::Interleaved => (2 * i, 2 * i + 1),
            Layout::Blocked(k) => {
                let base = (i / k) * 2 * k + (i % k);
                (base, base + k)
            }
        }
    }

    #[inline]
    pub fn amp(&self, i: usize) -> Complex<P> {
        let (re, im) = self.scalar_indices(i);
        Complex::new(self.data[re], self.data[im])
    }

    #[inline]
    pub fn set_amp(&mut self, i: usize, v: Complex<P>) {
        let (re, im) = self.scalar_indices(i);
        self.data[re] = v.re;
        self.data[im] = v.im;
    }

    /// All amplitudes widened to double precision.
    pub fn amplitudes(&self) -> Vec<Complex<f64>> {
        (0..self.len())
            .map(|i| {
                let a = self.amp(i);
                Complex::new(a.re.to_f64(), a.im.to_f64())
            })
            .collect()
    }

    /// ⟨Ψ|Ψ⟩, accumulated in double precision.
    pub fn norm2(&self) -> f64 {
        let mut acc = 0.0f64;
        for &v in &self.data {
            let x = v.to_f64();
            acc += x * x;
        }
        acc
    }

    /// Scale so that ⟨Ψ|Ψ⟩ = 1, in place.
    pub fn normalize(&mut self) -> Result<(), EngineError> {
        let n2 = self.norm2();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(EngineError::ZeroNorm);
        }
        self.scale(1.0 / n2.sqrt());
        Ok(())
    }

    /// Multiply every amplitude by a real factor, in place.
    pub fn scale(&mut self, factor: f64) {
        let f = P::from_f64(factor);
        for v in &mut self.data {
            *v = *v * f;
        }
    }

    /// ⟨Ψ|P|Ψ⟩ / ⟨Ψ|Ψ⟩ for a Pauli string.
    pub fn expectation_pauli(&self, pauli: &PauliString) -> Result<f64, EngineError> {
        for &(q, _) in pauli.factors() {
            if q >= self.n {
                return Err(EngineError::QubitOutOfRange { qubit: q, n: self.n });
            }
        }
        let norm2 = self.norm2();
        if norm2 <= 0.0 {
            return Err(EngineError::ZeroNorm);
        }
        let (xmask, zymask, y_count) = pauli.masks();
        // ⟨Ψ|P|Ψ⟩ = Σ_b conj(a_{b⊕x}) (−1)^{popcount(b & zy)} i^{|Y|} a_b
        let mut acc = Complex::new(0.0f64, 0.0f64);
        for b in 0..self.len() {
            let a = self.amp(b);
            let ax = self.amp(b ^ xmask);
            let sign = if ((b & zymask).count_ones() & 1) == 1 {
                -1.0
            } else {
                1.0
            };
            let term = Complex::new(ax.re.to_f64(), -ax.im.to_f64())
                * Complex::new(a.re.to_f64(), a.im.to_f64());
            acc += term * sign;
        }
        let phase = match y_count % 4 {
            0 => Complex::new(1.0, 0.0),
            1 => Complex::new(0.0, 1.0),
            2 => Complex::new(-1.0, 0.0),
            _ => Complex::new(0.0, -1.0),
        };
        Ok((acc * phase).re / norm2)
    }

    /// Sample computational-basis bitstrings (qubit 0 rightmost).
    ///
    /// The state must be normalized to within 1e-4.
    pub fn sample_bitstrings<R: Rng>(
        &self,
        shots: usize,
        rng: &mut R,
    ) -> Result<Vec<String>, EngineError> {
        let total = self.norm2();
        if (total - 1.0).abs() > 1e-4 {
            return Err(EngineError::Unnormalized(total));
        }
        let mut prefix = Vec::with_capacity(self.len());
        let mut acc = 0.0f64;
        for i in 0..self.len() {
            let a = self.amp(i);
            let (re, im) = (a.re.to_f64(), a.im.to_f64());
            acc += re * re + im * im;
            prefix.push(acc);
        }
        let mut out = Vec::with_capacity(shots);
        for _ in 0..shots {
            let u: f64 = rng.random::<f64>() * total;
            let idx = prefix.partition_point(|&p| p <= u).min(self.len() - 1);
            out.push(index_to_bitstring(idx, self.n));
        }
        Ok(out)
    }

    /// Measure `qubits` in the computational basis, collapsing the state and
    /// renormalizing. Returns one bit per listed qubit.
    pub fn measure_collapse<R: Rng>(
        &mut self,
        qubits: &[usize],
        rng: &mut R,
    ) -> Result<Vec<u8>, EngineError> {
        let mut bits = Vec::with_capacity(qubits.len());
        for &q in qubits {
            if q >= self.n {
                return Err(EngineError::QubitOutOfRange { qubit: q, n: self.n });
            }
            let total = self.norm2();
            if total <= 0.0 {
                return Err(EngineError::ZeroNorm);
            }
            let mut p1 = 0.0f64;
            for i in 0..self.len() {
                if (i >> q) & 1 == 1 {
                    let a = self.amp(i);
                    let (re, im) = (a.re.to_f64(), a.im.to_f64());
                    p1 += re * re + im * im;
                }
            }
            p1 /= total;
            let outcome = u8::from(rng.random::<f64>() < p1);
            let keep_prob = if outcome == 1 { p1 } else { 1.0 - p1 };
            // Zero the inconsistent branch then renormalize the survivor.
            let zero = Complex::new(P::zero(), P::zero());
            for i in 0..self.len() {
                if ((i >> q) & 1) as u8 != outcome {
                    self.set_amp(i, zero);
                }
            }
            self.scale(1.0 / (keep_prob * total).sqrt());
            bits.push(outcome);
        }
        Ok(bits)
    }

    /// Repack into a different layout. Amplitude values are preserved bitwise.
    pub fn to_layout(&self, layout: Layout) -> StateVector<P> {
        let mut out = StateVector::zero_state(self.n, layout);
        out.data[0] = P::zero();
        for i in 0..self.len() {
            out.set_amp(i, self.amp(i));
        }
        out
    }

    /// Convert precision (layout preserved).
    pub fn to_precision<Q: Real>(&self) -> StateVector<Q> {
        let mut out = StateVector::zero_state(self.n, self.layout);
        out.data[0] = Q::zero();
        for i in 0..self.len() {
            let a = self.amp(i);
            out.set_amp(
                i,
                Complex::new(Q::from_f64(a.re.to_f64()), Q::from_f64(a.im.to_f64())),
            );
        }
        out
    }

    /// Max |Δamplitude| against another state of the same size.
    pub fn max_amp_diff<Q: Real>(&self, other: &StateVector<Q>) -> f64 {
        assert_eq!(self.n, other.n);
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let a = self.amp(i);
            let b = other.amp(i);
            let d = Complex::new(
                a.re.to_f64() - b.re.to_f64(),
                a.im.to_f64() - b.im.to_f64(),
            )
            .norm();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Binary dump: magic "QSV1", then n, precision, layout, then raw
    /// little-endian scalars in storage order.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<(), EngineError> {
        let mut header = Vec::with_capacity(16);
        header.extend_from_slice(b"QSV1");
        header.extend_from_slice(&(self.n as u32).to_le_bytes());
        header.extend_from_slice(&(P::PRECISION.bytes() as u32).to_le_bytes());
        header.extend_from_slice(&self.layout.code().to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * P::PRECISION.bytes());
        for &v in &self.data {
            match P::PRECISION {
                Precision::Single => buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes()),
                Precision::Double => buf.extend_from_slice(&v.to_f64().to_le_bytes()),
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<StateVector<P>, EngineError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[0..4] != b"QSV1" {
            return Err(EngineError::BadDump("bad magic".into()));
        }
        let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let prec = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if prec != P::PRECISION.bytes() {
            return Err(EngineError::BadDump(format!(
                "precision mismatch: file has {prec}-byte scalars"
            )));
        }
        let layout = match Layout::from_code(u32::from_le_bytes(header[12..16].try_into().unwrap()))? {
            Layout::Blocked(k) if (1usize << n) < k => {
                return Err(EngineError::BadDump(format!(
                    "blocked({k}) layout invalid for {n}-qubit state"
                )))
            }
            other => other,
        };
        let count = 2usize << n;
        let mut buf = vec![0u8; count * prec];
        r.read_exact(&mut buf)?;
        let mut data = Vec::with_capacity(count);
        for chunk in buf.chunks_exact(prec) {
            let v = match P::PRECISION {
                Precision::Single => {
                    f32::from_le_bytes(chunk.try_into().unwrap()) as f64
                }
                Precision::Double => f64::from_le_bytes(chunk.try_into().unwrap()),
            };
            data.push(P::from_f64(v));
        }
        Ok(StateVector { n, layout, data })
    }
}

/// Render an amplitude index as a bitstring with qubit 0 rightmost.
pub fn index_to_bitstring(idx: usize, n: usize) -> String {
    (0..n)
        .rev()
        .map(|q| if (idx >> q) & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_state_norm_and_memory() {
        let s: StateVector<f32> = StateVector::zero_state(10, Layout::Interleaved);
        assert_eq!(s.norm2(), 1.0);
        // 8·2^n bytes in single precision.
        assert_eq!(s.storage_bytes(), 8 << 10);
    }

    #[test]
    fn norm2_and_normalize() {
        let mut s: StateVector<f64> = StateVector::zero_state(1, Layout::Interleaved);
        s.scale(2.0);
        assert!((s.norm2() - 4.0).abs() < 1e-12);
        s.normalize().unwrap();
        assert!((s.amp(0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm2_matches_direct_sum_oracle_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10;
        let amps: Vec<Complex<f64>> = (0..1usize << n)
            .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let s: StateVector<f32> = StateVector::from_amplitudes(n, &amps, Layout::Interleaved);
        // Straightforward accumulation over |a_i|² of the stored (f32) values.
        let direct: f64 = (0..s.len())
            .map(|i| {
                let a = s.amp(i);
                (a.re as f64).powi(2) + (a.im as f64).powi(2)
            })
            .sum();
        assert!((s.norm2() - direct).abs() < 1e-5);
    }

    #[test]
    fn layout_roundtrip_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let amps: Vec<Complex<f64>> = (0..64)
            .map(|_| Complex::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let s: StateVector<f32> =
            StateVector::from_amplitudes(6, &amps, Layout::blocked(8).unwrap());
        let round = s.to_layout(Layout::Interleaved).to_layout(Layout::blocked(8).unwrap());
        assert_eq!(s.raw(), round.raw());
    }

    #[test]
    fn blocked_scalar_indices() {
        let s: StateVector<f32> = StateVector::zero_state(4, Layout::blocked(4).unwrap());
        // Amplitude 5 lives in block 1, lane 1: re at 1*8+1, im at +4.
        assert_eq!(s.scalar_indices(5), (9, 13));
    }

    #[test]
    fn expectation_pauli_basics() {
        let s: StateVector<f64> = StateVector::zero_state(1, Layout::Interleaved);
        let z = PauliString::parse("Z0").unwrap();
        assert!((s.expectation_pauli(&z).unwrap() - 1.0).abs() < 1e-12);

        let plus: StateVector<f64> = StateVector::from_amplitudes(
            1,
            &[
                Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            ],
            Layout::Interleaved,
        );
        assert!(plus.expectation_pauli(&z).unwrap().abs() < 1e-6);
        let x = PauliString::parse("X0").unwrap();
        assert!((plus.expectation_pauli(&x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_xx_on_bell() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell: StateVector<f64> = StateVector::from_amplitudes(
            2,
            &[
                Complex::new(s, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(s, 0.0),
            ],
            Layout::Interleaved,
        );
        let xx = PauliString::parse("X0X1").unwrap();
        assert!((bell.expectation_pauli(&xx).unwrap() - 1.0).abs() < 1e-12);
        let yy = PauliString::parse("Y0Y1").unwrap();
        assert!((bell.expectation_pauli(&yy).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_expectation_errors() {
        let mut s: StateVector<f64> = StateVector::zero_state(1, Layout::Interleaved);
        s.scale(0.0);
        let z = PauliString::parse("Z0").unwrap();
        assert!(matches!(
            s.expectation_pauli(&z),
            Err(EngineError::ZeroNorm)
        ));
    }

    #[test]
    fn sampling_deterministic_and_exact_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one: StateVector<f64> = StateVector::basis_state(1, 1, Layout::Interleaved);
        let shots = one.sample_bitstrings(100, &mut rng).unwrap();
        assert!(shots.iter().all(|b| b == "1"));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell: StateVector<f64> = StateVector::from_amplitudes(
            2,
            &[
                Complex::new(s, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(s, 0.0),
            ],
            Layout::Interleaved,
        );
        let shots = bell.sample_bitstrings(1000, &mut rng).unwrap();
        assert!(shots.iter().all(|b| b == "00" || b == "11"));
    }

    #[test]
    fn sampling_binomial_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus: StateVector<f64> = StateVector::from_amplitudes(
            1,
            &[Complex::new(s, 0.0), Complex::new(s, 0.0)],
            Layout::Interleaved,
        );
        let shots = 100_000;
        let ones = plus
            .sample_bitstrings(shots, &mut rng)
            .unwrap()
            .iter()
            .filter(|b| *b == "1")
            .count();
        let frac = ones as f64 / shots as f64;
        let bound = 3.0 * (0.25f64 / shots as f64).sqrt();
        assert!((frac - 0.5).abs() < bound, "frac = {frac}");
    }

    #[test]
    fn sampling_rejects_unnormalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: StateVector<f64> = StateVector::zero_state(1, Layout::Interleaved);
        s.scale(1.1);
        assert!(matches!(
            s.sample_bitstrings(10, &mut rng),
            Err(EngineError::Unnormalized(_))
        ));
    }

    #[test]
    fn measure_collapse_bell() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..20 {
            let mut bell: StateVector<f64> = StateVector::from_amplitudes(
                2,
                &[
                    Complex::new(s, 0.0),
                    Complex::new(0.0, 0.0),
                    Complex::new(0.0, 0.0),
                    Complex::new(s, 0.0),
                ],
                Layout::Interleaved,
            );
            let bits = bell.measure_collapse(&[0, 1], &mut rng).unwrap();
            assert_eq!(bits[0], bits[1]);
            assert!((bell.norm2() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dump_load_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let amps: Vec<Complex<f64>> = (0..32)
            .map(|_| Complex::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let s: StateVector<f32> =
            StateVector::from_amplitudes(5, &amps, Layout::blocked(8).unwrap());
        let mut buf = Vec::new();
        s.dump(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"QSV1");
        let loaded: StateVector<f32> = StateVector::load(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded.raw(), s.raw());
        assert_eq!(loaded.layout(), s.layout());
    }

    #[test]
    fn bitstring_rendering() {
        assert_eq!(index_to_bitstring(1, 2), "01");
        assert_eq!(index_to_bitstring(2, 2), "10");
    }
}
