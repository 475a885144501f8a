//! Approximate hardware noise model built from processor calibration data.
//!
//! Four noise categories are added to a circuit: decay/dephasing channels
//! after every gate and idle slot, coherent fSim angle errors around every
//! fSim-family two-qubit gate, residual depolarizing channels sized from an
//! error budget, and readout misclassification attached to measurements.
//! Coherent-error insertions are represented as single-operator Kraus
//! channels so that stripping channels always recovers the clean circuit.

use crate::channels::{self, kraus_channel_unchecked};
use crate::circuit::{
    ChannelOp, GateKind, Measurement, Moment, Operation, QubitId, ReadoutError,
};
use crate::gates;
use crate::matrix::{cis_turns, CMatrix};
use crate::noise::{pack_into_moments, NoiseError, NoiseMode, NoiseModel};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Calibration data
// ---------------------------------------------------------------------------

/// Per-qubit hardware parameters. Times in microseconds unless suffixed
/// otherwise; `None` for a coherence time means "no such decay".
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct QubitCalibration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_us: Option<f64>,
    /// Pure dephasing time, given directly...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tphi_us: Option<f64>,
    /// ...or inferred from the incoherent error at a probe duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_inc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_ns: Option<f64>,
    /// Probability a prepared |0⟩ is read as 1.
    #[serde(default)]
    pub p00_err: f64,
    /// Probability a prepared |1⟩ is read as 0.
    #[serde(default)]
    pub p11_err: f64,
    /// Isolated one-qubit RB average error, when measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rb_avg_err: Option<f64>,
}

/// Per-pair hardware parameters (angles in radians).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PairCalibration {
    #[serde(default)]
    pub dtheta_rad: f64,
    #[serde(default)]
    pub dphi_rad: f64,
    #[serde(default)]
    pub zphase_mean_rad: f64,
    #[serde(default)]
    pub zphase_std_rad: f64,
    /// Total two-qubit XEB Pauli error.
    #[serde(default)]
    pub xeb_pauli_err: f64,
    /// Control-error scale for the U_ZZ fiducial model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2q_ns: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Durations {
    #[serde(rename = "1q")]
    pub one_q_ns: f64,
    #[serde(rename = "2q")]
    pub two_q_ns: f64,
    #[serde(rename = "measure")]
    pub measure_ns: f64,
}

impl Default for Durations {
    fn default() -> Self {
        Durations {
            one_q_ns: crate::circuit::DEFAULT_1Q_NS,
            two_q_ns: crate::circuit::DEFAULT_2Q_NS,
            measure_ns: crate::circuit::DEFAULT_MEASURE_NS,
        }
    }
}

/// Calibration snapshot for a processor: per-qubit and per-pair error
/// parameters plus gate-class durations.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CalibrationData {
    pub qubits: BTreeMap<String, QubitCalibration>,
    #[serde(default)]
    pub pairs: BTreeMap<String, PairCalibration>,
    #[serde(default = "default_durations")]
    pub durations_ns: Durations,
}

fn default_durations() -> Durations {
    Durations::default()
}

impl CalibrationData {
    pub fn from_json(text: &str) -> Result<CalibrationData, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn qubit(&self, q: usize) -> Option<&QubitCalibration> {
        self.qubits.get(&q.to_string())
    }

    pub fn pair(&self, a: usize, b: usize) -> Option<&PairCalibration> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.pairs.get(&format!("{lo}-{hi}"))
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        for (name, q) in &self.qubits {
            if q.t1_us.is_some_and(|t| t <= 0.0) || q.tphi_us.is_some_and(|t| t <= 0.0) {
                return Err(NoiseError::MissingCalibration(format!(
                    "qubit {name}: non-positive coherence time"
                )));
            }
            for p in [q.p00_err, q.p11_err] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(NoiseError::MissingCalibration(format!(
                        "qubit {name}: readout probability {p} outside [0,1]"
                    )));
                }
            }
        }
        for (name, p) in &self.pairs {
            if !(0.0..=1.0).contains(&p.xeb_pauli_err) {
                return Err(NoiseError::MissingCalibration(format!(
                    "pair {name}: xeb_pauli_err outside [0,1]"
                )));
            }
        }
        if self.durations_ns.one_q_ns <= 0.0
            || self.durations_ns.two_q_ns <= 0.0
            || self.durations_ns.measure_ns <= 0.0
        {
            return Err(NoiseError::MissingCalibration(
                "durations must be positive".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

/// 1/T2 = 1/(2 T1) + 1/Tφ. Infinite inputs are allowed.
pub fn t2_from(t1_us: f64, tphi_us: f64) -> f64 {
    1.0 / (1.0 / (2.0 * t1_us) + 1.0 / tphi_us)
}

/// Leading-order incoherent error over a duration t:
/// ε_inc = t/(3 T1) + t/(3 Tφ).
pub fn eps_inc_at(t_us: f64, t1_us: f64, tphi_us: f64) -> f64 {
    t_us / (3.0 * t1_us) + t_us / (3.0 * tphi_us)
}

/// Invert ε_inc = t/(3T1) + t/(3Tφ) for Tφ.
pub fn tphi_from_incoherent(eps_inc: f64, t_us: f64, t1_us: f64) -> Result<f64, NoiseError> {
    let denom = 3.0 * eps_inc - t_us / t1_us;
    if denom <= 0.0 {
        return Err(NoiseError::MissingCalibration(format!(
            "incoherent error {eps_inc} inconsistent with T1 = {t1_us} µs at t = {t_us} µs"
        )));
    }
    Ok(t_us / denom)
}

/// Decay/dephasing channel over duration t: three Kraus operators
///   K0 = diag(1, e^{−t/T2}),
///   K1 = |0⟩⟨1| √(1 − e^{−t/T1}),
///   K2 = diag(0, √(e^{−t/T1} − e^{−2t/T2})).
pub fn decay_dephase_channel(
    t_us: f64,
    t1_us: f64,
    tphi_us: f64,
    qubit: QubitId,
) -> Result<ChannelOp, NoiseError> {
    if t_us < 0.0 || t1_us <= 0.0 || tphi_us <= 0.0 {
        return Err(NoiseError::MissingCalibration(format!(
            "decay channel needs t ≥ 0 and positive T1/Tφ (got t={t_us}, T1={t1_us}, Tφ={tphi_us})"
        )));
    }
    let t2 = t2_from(t1_us, tphi_us);
    let g1 = (-t_us / t1_us).exp();
    let g2 = (-t_us / t2).exp();
    let residual = g1 - g2 * g2;
    if residual < -1e-12 {
        return Err(NoiseError::MissingCalibration(format!(
            "unphysical decay parameters: e^(-t/T1) - e^(-2t/T2) = {residual}"
        )));
    }
    let z = Complex64::new(0.0, 0.0);
    let k0 = CMatrix::from_rows(
        2,
        &[Complex64::new(1.0, 0.0), z, z, Complex64::new(g2, 0.0)],
    );
    let k1 = CMatrix::from_rows(
        2,
        &[z, Complex64::new((1.0 - g1).sqrt(), 0.0), z, z],
    );
    let k2 = CMatrix::from_rows(
        2,
        &[z, z, z, Complex64::new(residual.max(0.0).sqrt(), 0.0)],
    );
    Ok(kraus_channel_unchecked(
        vec![k0, k1, k2],
        vec![qubit],
        false,
    ))
}

/// Closed-form action of the decay/dephasing channel on a density matrix:
/// diagonal decays with e^{−t/T1}, off-diagonals with e^{−t/T2}.
pub fn decay_dephase_action(rho: &CMatrix, t_us: f64, t1_us: f64, tphi_us: f64) -> CMatrix {
    let t2 = t2_from(t1_us, tphi_us);
    let g1 = (-t_us / t1_us).exp();
    let g2 = (-t_us / t2).exp();
    let mut out = CMatrix::zeros(2);
    out[(0, 0)] = rho[(0, 0)] + rho[(1, 1)] * (1.0 - g1);
    out[(0, 1)] = rho[(0, 1)] * g2;
    out[(1, 0)] = rho[(1, 0)] * g2;
    out[(1, 1)] = rho[(1, 1)] * g1;
    out
}

pub use crate::gates::fsim_matrix as fsim;

/// Z-phase angles sampled for one pair: e^{iφZ} before and after the gate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZPhases {
    pub pre0: f64,
    pub pre1: f64,
    pub post0: f64,
    pub post1: f64,
}

/// The coherent-error decoration of one fSim gate: Z phase pair before, the
/// intended gate, fSim(δθ, δφ), Z phase pair after. Identity components
/// (zero angles) are omitted, so zero errors return the intended gate alone.
pub fn fsim_coherent_error(
    intended: &crate::circuit::GateOp,
    dtheta: f64,
    dphi: f64,
    z: ZPhases,
) -> Vec<crate::circuit::GateOp> {
    let (q0, q1) = (intended.qubits[0], intended.qubits[1]);
    let mut seq = Vec::new();
    if z.pre0 != 0.0 {
        seq.push(gates::zphase(q0, z.pre0));
    }
    if z.pre1 != 0.0 {
        seq.push(gates::zphase(q1, z.pre1));
    }
    seq.push(intended.clone());
    if dtheta != 0.0 || dphi != 0.0 {
        seq.push(gates::fsim(q0, q1, dtheta, dphi));
    }
    if z.post0 != 0.0 {
        seq.push(gates::zphase(q0, z.post0));
    }
    if z.post1 != 0.0 {
        seq.push(gates::zphase(q1, z.post1));
    }
    seq
}

/// Standard depolarizing channel with total Pauli error `r_dep`.
pub fn depolarizing_channel(
    r_dep: f64,
    qubits: Vec<QubitId>,
) -> Result<ChannelOp, crate::circuit::CircuitError> {
    channels::depolarize(r_dep, qubits)
}

/// Residual two-qubit depolarizing error: what remains of the total XEB
/// Pauli error after subtracting both qubits' incoherent errors and the
/// entangling coherent error. Clamped at zero; the flag reports clamping.
pub fn residual_depolarizing(r_p_tot: f64, r_inc_0: f64, r_inc_1: f64, r_ent: f64) -> (f64, bool) {
    let r = r_p_tot - r_inc_0 - r_inc_1 - r_ent;
    if r < 0.0 {
        log::warn!(
            "error budget over-subscribed: r_p_tot = {r_p_tot}, parts sum to {}",
            r_inc_0 + r_inc_1 + r_ent
        );
        (0.0, true)
    } else {
        (r, false)
    }
}

/// Control-error unitary U_ZZ[ζ] = exp(−i 2π ζ T |11⟩⟨11|), with the gate
/// time T (roughly 10 ns for the target hardware) in the same inverse units
/// as ζ.
pub fn uzz_gate(zeta: f64, t: f64) -> CMatrix {
    let mut m = CMatrix::identity(4);
    m[(3, 3)] = cis_turns(-zeta * t);
    m
}

/// Fiducial depolarizing channel D_n[ε](ρ) = (1−ε)ρ + ε I/2^n.
///
/// Replacing ρ with the maximally mixed state is the standard depolarizing
/// channel with r_dep = ε (D²−1)/D², which is the form constructed here.
pub fn depol_fiducial(
    eps: f64,
    qubits: Vec<QubitId>,
) -> Result<ChannelOp, crate::circuit::CircuitError> {
    let d2 = (1usize << (2 * qubits.len())) as f64;
    channels::depolarize(eps * (d2 - 1.0) / d2, qubits)
}

/// Entanglement infidelity of a unitary error: 1 − |tr V|²/D².
pub fn entanglement_infidelity(v: &CMatrix) -> f64 {
    let d = v.dim() as f64;
    1.0 - v.trace().norm_sqr() / (d * d)
}

// ---------------------------------------------------------------------------
// The assembled model
// ---------------------------------------------------------------------------

/// When the pair Z-phase errors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ZPhaseCadence {
    /// One draw per calibration load, shared by all trajectories.
    #[default]
    FixedPerCalibration,
    /// Redrawn per trajectory (see [`QcsNoiseModel::resampled`]).
    PerTrajectory,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct QcsOptions {
    pub zphase_seed: u64,
    pub cadence: ZPhaseCadence,
}

#[derive(Clone, Debug)]
struct QubitNoise {
    t1_us: f64,
    tphi_us: f64,
    readout: ReadoutError,
    r_dep_1q: f64,
}

#[derive(Clone, Debug)]
struct PairNoise {
    dtheta: f64,
    dphi: f64,
    zphases: ZPhases,
    r_dep_2q: f64,
    r_ent: f64,
}

/// Noise-model rule set derived from a calibration snapshot.
#[derive(Clone, Debug)]
pub struct QcsNoiseModel {
    /// The calibration this model was built from.
    pub calibration: CalibrationData,
    options: QcsOptions,
    qubit_noise: BTreeMap<usize, QubitNoise>,
    pair_noise: BTreeMap<(usize, usize), PairNoise>,
    /// Budget subtractions that clamped at zero, for reporting.
    pub clamp_warnings: Vec<String>,
}

/// Build the noise model: resolve coherence times, sample Z-phase errors,
/// and size the depolarizing channels from the error budgets.
pub fn build_noise_model(
    cal: &CalibrationData,
    options: QcsOptions,
) -> Result<QcsNoiseModel, NoiseError> {
    cal.validate()?;
    let durations = cal.durations_ns;
    let mut qubit_noise = BTreeMap::new();
    let mut clamp_warnings = Vec::new();

    for (name, qc) in &cal.qubits {
        let q: usize = name.parse().map_err(|_| {
            NoiseError::MissingCalibration(format!("bad qubit key `{name}`"))
        })?;
        let t1 = qc.t1_us.unwrap_or(f64::INFINITY);
        let tphi = match (qc.tphi_us, qc.eps_inc) {
            (Some(tphi), _) => tphi,
            (None, Some(eps)) => {
                let probe_us = qc.probe_ns.map(|ns| ns * 1e-3).unwrap_or_else(|| {
                    durations.one_q_ns * 1e-3
                });
                tphi_from_incoherent(eps, probe_us, t1)?
            }
            (None, None) => f64::INFINITY,
        };
        // One-qubit residual depolarizing: RB average error converted to
        // Pauli units (×(D+1)/D), minus the incoherent part over the gate.
        let r_dep_1q = match qc.rb_avg_err {
            Some(rb) => {
                let r_pauli = rb * 1.5;
                let inc = eps_inc_at(durations.one_q_ns * 1e-3, t1, tphi);
                let (r, clamped) = residual_depolarizing(r_pauli, inc, 0.0, 0.0);
                if clamped {
                    clamp_warnings.push(format!("qubit {q}: 1q depolarizing budget clamped"));
                }
                r
            }
            None => 0.0,
        };
        qubit_noise.insert(
            q,
            QubitNoise {
                t1_us: t1,
                tphi_us: tphi,
                readout: ReadoutError {
                    p0_as_1: qc.p00_err,
                    p1_as_0: qc.p11_err,
                },
                r_dep_1q,
            },
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.zphase_seed);
    let mut pair_noise = BTreeMap::new();
    for (name, pc) in &cal.pairs {
        let (a, b) = parse_pair_key(name)?;
        let zphases = sample_zphases(pc, &mut rng);
        let t2q_us = pc.t2q_ns.unwrap_or(durations.two_q_ns) * 1e-3;
        let r_inc = |q: usize| -> Result<f64, NoiseError> {
            let qn = qubit_noise.get(&q).ok_or_else(|| {
                NoiseError::MissingCalibration(format!("qubit {q} referenced by pair {name}"))
            })?;
            Ok(pauli_incoherent_error(t2q_us, qn.t1_us, qn.tphi_us))
        };
        let v = coherent_error_unitary(pc.dtheta_rad, pc.dphi_rad, zphases);
        let r_ent = entanglement_infidelity(&v);
        let (r_dep_2q, clamped) =
            residual_depolarizing(pc.xeb_pauli_err, r_inc(a)?, r_inc(b)?, r_ent);
        if clamped {
            clamp_warnings.push(format!("pair {name}: 2q depolarizing budget clamped"));
        }
        pair_noise.insert(
            (a, b),
            PairNoise {
                dtheta: pc.dtheta_rad,
                dphi: pc.dphi_rad,
                zphases,
                r_dep_2q,
                r_ent,
            },
        );
    }

    Ok(QcsNoiseModel {
        calibration: cal.clone(),
        options,
        qubit_noise,
        pair_noise,
        clamp_warnings,
    })
}

fn parse_pair_key(name: &str) -> Result<(usize, usize), NoiseError> {
    let bad = || NoiseError::MissingCalibration(format!("bad pair key `{name}` (want \"a-b\")"));
    let (a, b) = name.split_once('-').ok_or_else(bad)?;
    let a: usize = a.parse().map_err(|_| bad())?;
    let b: usize = b.parse().map_err(|_| bad())?;
    Ok(if a < b { (a, b) } else { (b, a) })
}

fn sample_zphases(pc: &PairCalibration, rng: &mut ChaCha8Rng) -> ZPhases {
    if pc.zphase_std_rad == 0.0 {
        return ZPhases {
            pre0: pc.zphase_mean_rad,
            pre1: pc.zphase_mean_rad,
            post0: pc.zphase_mean_rad,
            post1: pc.zphase_mean_rad,
        };
    }
    let dist = Normal::new(pc.zphase_mean_rad, pc.zphase_std_rad).unwrap();
    ZPhases {
        pre0: dist.sample(rng),
        pre1: dist.sample(rng),
        post0: dist.sample(rng),
        post1: dist.sample(rng),
    }
}

/// The composite coherent-error unitary of one decorated fSim gate:
/// (post Z pair) · fSim(δθ, δφ) · (pre Z pair).
fn coherent_error_unitary(dtheta: f64, dphi: f64, z: ZPhases) -> CMatrix {
    let zp = |phi: f64| -> CMatrix {
        CMatrix::from_rows(
            2,
            &[
                Complex64::from_polar(1.0, phi),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::from_polar(1.0, -phi),
            ],
        )
    };
    let pre = zp(z.pre1).kron(&zp(z.pre0));
    let post = zp(z.post1).kron(&zp(z.post0));
    post.matmul(&gates::fsim_matrix(dtheta, dphi)).matmul(&pre)
}

/// Exact Pauli-convention incoherent error of the decay channel over t:
/// the entanglement infidelity 1 − Σ_i |tr K_i|²/D².
fn pauli_incoherent_error(t_us: f64, t1_us: f64, tphi_us: f64) -> f64 {
    let t2 = t2_from(t1_us, tphi_us);
    let g1 = (-t_us / t1_us).exp();
    let g2 = (-t_us / t2).exp();
    let tr0 = 1.0 + g2;
    let tr2sq = (g1 - g2 * g2).max(0.0);
    1.0 - (tr0 * tr0 + tr2sq) / 4.0
}

impl QcsNoiseModel {
    /// Rebuild with freshly sampled Z phases (per-trajectory cadence).
    pub fn resampled(&self, seed: u64) -> Result<QcsNoiseModel, NoiseError> {
        build_noise_model(
            &self.calibration,
            QcsOptions {
                zphase_seed: seed,
                ..self.options
            },
        )
    }

    pub fn cadence(&self) -> ZPhaseCadence {
        self.options.cadence
    }

    pub fn zphases(&self, a: usize, b: usize) -> Option<ZPhases> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair_noise.get(&key).map(|p| p.zphases)
    }

    pub fn r_dep_2q(&self, a: usize, b: usize) -> Option<f64> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair_noise.get(&key).map(|p| p.r_dep_2q)
    }

    pub fn r_ent(&self, a: usize, b: usize) -> Option<f64> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair_noise.get(&key).map(|p| p.r_ent)
    }

    fn qubit(&self, q: usize) -> Result<&QubitNoise, NoiseError> {
        self.qubit_noise
            .get(&q)
            .ok_or_else(|| NoiseError::MissingCalibration(format!("qubit {q}")))
    }

    fn pair(&self, a: usize, b: usize) -> Result<&PairNoise, NoiseError> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair_noise
            .get(&key)
            .ok_or_else(|| NoiseError::MissingCalibration(format!("pair {}-{}", key.0, key.1)))
    }

    fn decay_op(&self, q: usize, t_ns: f64) -> Result<Option<Operation>, NoiseError> {
        let qn = self.qubit(q)?;
        if qn.t1_us.is_infinite() && qn.tphi_us.is_infinite() {
            return Ok(None);
        }
        let ch = decay_dephase_channel(t_ns * 1e-3, qn.t1_us, qn.tphi_us, QubitId(q))?;
        Ok(Some(Operation::Channel(ch)))
    }

    /// Duration of an operation under this calibration.
    fn op_duration_ns(&self, op: &Operation) -> f64 {
        match op {
            Operation::Gate(g) => g.duration_ns.unwrap_or(if g.n_qubits() == 1 {
                self.calibration.durations_ns.one_q_ns
            } else {
                self.calibration.durations_ns.two_q_ns
            }),
            Operation::Channel(_) => 0.0,
            Operation::Measure(_) => self.calibration.durations_ns.measure_ns,
        }
    }

    /// Wrap a unitary as a single-operator channel so it strips cleanly.
    fn unitary_channel(g: crate::circuit::GateOp) -> Operation {
        let qubits = g.qubits.clone();
        Operation::Channel(kraus_channel_unchecked(vec![g.matrix], qubits, true))
    }
}

fn is_fsim_family(kind: &GateKind) -> bool {
    matches!(
        kind,
        GateKind::Cz | GateKind::ISwap | GateKind::SqrtISwap | GateKind::FSim { .. }
    )
}

impl NoiseModel for QcsNoiseModel {
    fn mode(&self) -> NoiseMode {
        NoiseMode::PerMoment
    }

    fn noisy_moment(&self, moment: &Moment, n_qubits: usize) -> Result<Vec<Moment>, NoiseError> {
        let mut before: Vec<Operation> = Vec::new();
        let mut main: Vec<Operation> = Vec::new();
        let mut after: Vec<Operation> = Vec::new();
        let mut moment_duration = 0.0f64;
        for op in &moment.operations {
            moment_duration = moment_duration.max(self.op_duration_ns(op));
        }

        for op in &moment.operations {
            match op {
                Operation::Gate(g) => {
                    let duration = self.op_duration_ns(op);
                    let qs: Vec<usize> = g.qubits.iter().map(|q| q.0).collect();
                    if g.n_qubits() == 2 {
                        let pair = self.pair(qs[0], qs[1])?;
                        if is_fsim_family(&g.kind) {
                            // Coherent errors: Z phases before, fSim(δθ, δφ)
                            // after, Z phases after that.
                            let (q0, q1) = (g.qubits[0], g.qubits[1]);
                            let z = pair.zphases;
                            if z.pre0 != 0.0 {
                                before.push(Self::unitary_channel(gates::zphase(q0, z.pre0)));
                            }
                            if z.pre1 != 0.0 {
                                before.push(Self::unitary_channel(gates::zphase(q1, z.pre1)));
                            }
                            if pair.dtheta != 0.0 || pair.dphi != 0.0 {
                                after.push(Self::unitary_channel(gates::fsim(
                                    q0, q1, pair.dtheta, pair.dphi,
                                )));
                            }
                            if z.post0 != 0.0 {
                                after.push(Self::unitary_channel(gates::zphase(q0, z.post0)));
                            }
                            if z.post1 != 0.0 {
                                after.push(Self::unitary_channel(gates::zphase(q1, z.post1)));
                            }
                        }
                        if pair.r_dep_2q > 0.0 {
                            after.push(Operation::Channel(
                                channels::depolarize(pair.r_dep_2q, g.qubits.clone())
                                    .expect("budget within [0,1]"),
                            ));
                        }
                    } else if g.n_qubits() == 1 {
                        let qn = self.qubit(qs[0])?;
                        if qn.r_dep_1q > 0.0 {
                            after.push(Operation::Channel(
                                channels::depolarize(qn.r_dep_1q, g.qubits.clone())
                                    .expect("budget within [0,1]"),
                            ));
                        }
                    }
                    for &q in &qs {
                        if let Some(decay) = self.decay_op(q, duration)? {
                            after.push(decay);
                        }
                    }
                    main.push(op.clone());
                }
                Operation::Channel(_) => main.push(op.clone()),
                Operation::Measure(m) => {
                    let mut annotated = Measurement::new(m.qubits.clone(), &m.key)?;
                    annotated.readout = Some(
                        m.qubits
                            .iter()
                            .map(|q| self.qubit(q.0).map(|qn| qn.readout))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                    let duration = self.op_duration_ns(op);
                    for q in &m.qubits {
                        if let Some(decay) = self.decay_op(q.0, duration)? {
                            after.push(decay);
                        }
                    }
                    main.push(Operation::Measure(annotated));
                }
            }
        }

        // Idle qubits decay for the moment's full duration.
        let used = moment.qubits_used();
        if moment_duration > 0.0 {
            for q in 0..n_qubits {
                if !used.contains(&q) && self.qubit_noise.contains_key(&q) {
                    if let Some(decay) = self.decay_op(q, moment_duration)? {
                        after.push(decay);
                    }
                }
            }
        }

        let mut out = pack_into_moments(before);
        out.push(Moment { operations: main });
        out.extend(pack_into_moments(after));
        Ok(out)
    }
}
