//! Circuit IR properties: serialization round-trips, noise-model gate
//! preservation, and format edge cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajsim_core::channels;
use trajsim_core::circuit::{CircuitError, Measurement, Moment, Operation, QubitId};
use trajsim_core::gates;
use trajsim_core::noise::{with_noise, ConstantQubitNoiseModel, PerGateChannelModel};
use trajsim_core::oracle;
use trajsim_core::Circuit;

fn random_circuit_with_everything(seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 + (seed % 4) as usize;
    let mut c = Circuit::new(n);
    for layer in 0..6 {
        let mut ops: Vec<Operation> = Vec::new();
        let mut used = vec![false; n];
        match layer % 3 {
            0 => {
                for q in 0..n {
                    let op = match rng.random_range(0..6) {
                        0 => gates::x(QubitId(q)),
                        1 => gates::y(QubitId(q)),
                        2 => gates::z(QubitId(q)),
                        3 => gates::h(QubitId(q)),
                        4 => gates::rz(QubitId(q), rng.random::<f64>()),
                        _ => gates::unitary(
                            vec![QubitId(q)],
                            oracle::random_unitary(1, &mut rng),
                        )
                        .unwrap(),
                    };
                    ops.push(Operation::Gate(op));
                }
            }
            1 => {
                let mut q = 0;
                while q + 1 < n {
                    let (a, b) = (QubitId(q), QubitId(q + 1));
                    let op = match rng.random_range(0..4) {
                        0 => gates::cz(a, b),
                        1 => gates::iswap(a, b),
                        2 => gates::sqrt_iswap(a, b),
                        _ => gates::fsim(a, b, rng.random::<f64>(), rng.random::<f64>()),
                    };
                    ops.push(Operation::Gate(op));
                    q += 2;
                }
            }
            _ => {
                for q in 0..n {
                    if used[q] || rng.random::<f64>() < 0.5 {
                        continue;
                    }
                    used[q] = true;
                    let ch = match rng.random_range(0..5) {
                        0 => channels::depolarize(rng.random::<f64>() * 0.3, vec![QubitId(q)])
                            .unwrap(),
                        1 => channels::phase_damp(rng.random::<f64>(), QubitId(q)).unwrap(),
                        2 => channels::amplitude_damp(rng.random::<f64>(), QubitId(q)).unwrap(),
                        3 => channels::bit_flip(rng.random::<f64>(), QubitId(q)).unwrap(),
                        _ => {
                            let ks = oracle::random_kraus_set(2, 2, &mut rng);
                            channels::kraus_channel(ks, vec![QubitId(q)]).unwrap()
                        }
                    };
                    ops.push(Operation::Channel(ch.with_key(&format!("k{layer}_{q}"))));
                }
            }
        }
        if !ops.is_empty() {
            c.push(Moment::new(ops).unwrap());
        }
    }
    c.push(
        Moment::new(vec![Operation::Measure(
            Measurement::new(vec![QubitId(0), QubitId(n - 1)], "m").unwrap(),
        )])
        .unwrap(),
    );
    c
}

#[test]
fn serialization_roundtrip_structural_equality() {
    for seed in 0..25u64 {
        let circuit = random_circuit_with_everything(seed);
        let text = circuit.to_json();
        let parsed = Circuit::from_json(&text).expect("serialized circuit must parse");
        assert_eq!(parsed, circuit, "round-trip changed circuit (seed {seed})");
    }
}

#[test]
fn paper_style_moment_listing_parses() {
    let doc = r#"{
        "n_qubits": 3,
        "moments": [
            [{"gate": "CZ", "qubits": [0, 1]}, {"gate": "X", "qubits": [2]}],
            [{"gate": "CZ", "qubits": [1, 2]}]
        ]
    }"#;
    let c = Circuit::from_json(doc).unwrap();
    assert_eq!(c.n_qubits, 3);
    assert_eq!(c.moments.len(), 2);
    assert_eq!(c.moments[0].operations.len(), 2);
    assert_eq!(c.count_gates(), 3);
}

#[test]
fn smallest_circuit_parses() {
    let doc = r#"{"n_qubits": 1, "moments": [[{"gate": "X", "qubits": [0]}]]}"#;
    let c = Circuit::from_json(doc).unwrap();
    assert_eq!((c.n_qubits, c.moments.len(), c.count_gates()), (1, 1, 1));
}

#[test]
fn duplicate_qubit_in_moment_rejected() {
    let doc = r#"{
        "n_qubits": 1,
        "moments": [[
            {"gate": "X", "qubits": [0]},
            {"gate": "Z", "qubits": [0]}
        ]]
    }"#;
    match Circuit::from_json(doc) {
        Err(CircuitError::DuplicateQubitInMoment { qubit: 0, moment: 0 }) => {}
        other => panic!("expected duplicate-qubit error, got {other:?}"),
    }
}

#[test]
fn unknown_gate_and_arity_mismatch_rejected() {
    let doc = r#"{"n_qubits": 1, "moments": [[{"gate": "WAT", "qubits": [0]}]]}"#;
    assert!(matches!(
        Circuit::from_json(doc),
        Err(CircuitError::UnknownGate { .. })
    ));
    let doc = r#"{"n_qubits": 2, "moments": [[{"gate": "CZ", "qubits": [0]}]]}"#;
    assert!(matches!(
        Circuit::from_json(doc),
        Err(CircuitError::ArityMismatch { .. })
    ));
}

#[test]
fn validation_reports_position_of_bad_matrix() {
    let mut c = Circuit::new(1);
    let mut bad = gates::x(QubitId(0));
    bad.matrix = trajsim_core::CMatrix::from_real(2, &[1.0, 0.0, 0.0, 2.0]);
    c.push(Moment::new(vec![Operation::Gate(bad)]).unwrap());
    let violations = c.validate();
    assert_eq!(violations.len(), 1);
    assert!(violations[0].contains("non-unitary matrix at moment 0, op 0"));
}

#[test]
fn validation_detects_perturbed_kraus() {
    let mut ch = channels::amplitude_damp(0.2, QubitId(0)).unwrap();
    ch.kraus[0][(0, 0)] += num_complex::Complex64::new(1e-3, 0.0);
    let mut c = Circuit::new(1);
    c.push(Moment::new(vec![Operation::Channel(ch)]).unwrap());
    let violations = c.validate();
    assert_eq!(violations.len(), 1);
    assert!(violations[0].contains("non-trace-preserving channel"));
}

#[test]
fn with_noise_strip_recovers_input_on_random_circuits() {
    let models: Vec<Box<dyn trajsim_core::noise::NoiseModel>> = vec![
        Box::new(ConstantQubitNoiseModel::new(
            channels::depolarize(0.02, vec![QubitId(0)]).unwrap(),
        )),
        Box::new(PerGateChannelModel::new(
            channels::amplitude_damp(0.01, QubitId(0)).unwrap(),
        )),
    ];
    for seed in 0..10u64 {
        let circuit = random_circuit_with_everything(seed).strip_channels();
        for model in &models {
            let noisy = with_noise(&circuit, model.as_ref()).unwrap();
            assert_eq!(noisy.strip_channels(), circuit, "seed {seed}");
        }
    }
}

#[test]
fn kraus_of_builtins_pass_validation_completeness() {
    let mut c = Circuit::new(2);
    c.push(
        Moment::new(vec![
            Operation::Channel(channels::depolarize(0.37, vec![QubitId(0)]).unwrap()),
            Operation::Channel(channels::phase_damp(0.6, QubitId(1)).unwrap()),
        ])
        .unwrap(),
    );
    c.push(
        Moment::new(vec![Operation::Channel(
            channels::depolarize(0.08, vec![QubitId(0), QubitId(1)]).unwrap(),
        )])
        .unwrap(),
    );
    assert!(c.validate().is_empty());
}
