//! Gate fusion: combine gates that are close in space and time into larger
//! gates of bounded arity, raising the arithmetic intensity of each
//! matrix-vector pass.
//!
//! Two phases. First, small gates are absorbed into time-adjacent larger
//! gates acting on the same qubits (2-qubit gates soak up neighboring
//! 1-qubit gates). Second, the resulting clusters are greedily merged: the
//! earliest unmarked cluster seeds a fused gate, then neighboring unmarked
//! clusters join, forward in time, and backward when they have no unmarked
//! earlier neighbors, while the fused qubit set stays within the maximum
//! fuse size. Channels and measurements never enter the gate stream; they
//! act as barriers between fusible segments.

use crate::matrix::CMatrix;
use serde_json::json;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("gate on {arity} qubits exceeds maximum fuse size {max}")]
    GateTooLarge { arity: usize, max: usize },
    #[error("maximum fuse size {0} outside 2..=6")]
    BadFuseSize(usize),
}

/// Fusion tuning. The default maximum fuse size of 4 is the usual optimum
/// for large circuits and many threads; 2 or 3 can win for small circuits.
#[derive(Clone, Copy, Debug)]
pub struct FuseConfig {
    pub max_fuse_size: usize,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig { max_fuse_size: 4 }
    }
}

impl FuseConfig {
    pub fn new(max_fuse_size: usize) -> Result<Self, FusionError> {
        if !(2..=6).contains(&max_fuse_size) {
            return Err(FusionError::BadFuseSize(max_fuse_size));
        }
        Ok(FuseConfig { max_fuse_size })
    }
}

/// A gate as seen by the fuser: time position, qubits, matrix.
#[derive(Clone, Debug)]
pub struct FusibleGate {
    /// Time order within the stream being fused; unique.
    pub id: usize,
    pub qubits: Vec<usize>,
    pub matrix: Arc<CMatrix>,
}

/// A fused gate: constituents in time order on a bounded qubit set.
/// The matrix is materialized lazily via [`FusedGate::matrix`].
#[derive(Clone, Debug)]
pub struct FusedGate {
    /// Sorted union of constituent qubits.
    pub qubits: Vec<usize>,
    /// Constituents in original time order.
    pub gates: Vec<FusibleGate>,
}

impl FusedGate {
    pub fn gate_ids(&self) -> Vec<usize> {
        self.gates.iter().map(|g| g.id).collect()
    }

    /// Time-ordered product of the constituents embedded on the fused
    /// qubit set.
    pub fn matrix(&self) -> CMatrix {
        let bits = self.qubits.len();
        let mut acc = CMatrix::identity(1 << bits);
        for g in &self.gates {
            let positions: Vec<usize> = g
                .qubits
                .iter()
                .map(|q| self.qubits.iter().position(|f| f == q).unwrap())
                .collect();
            let embedded = g.matrix.embed(&positions, bits);
            acc = embedded.matmul(&acc);
        }
        acc
    }
}

/// Phase-1 cluster: a run of gates sharing the anchor gate's qubit set.
struct Cluster {
    /// Qubits, fixed by the anchor gate.
    qubits: BTreeSet<usize>,
    /// Gate indices into the input, time order.
    gates: Vec<usize>,
    /// Id of the first gate; clusters are ordered by this.
    anchor: usize,
}

/// Fuse a stream of unitary gates.
///
/// Every input gate lands in exactly one fused gate; fused gates cover at
/// most `cfg.max_fuse_size` qubits; the output order extends the per-qubit
/// order of the input.
pub fn fuse(gates: &[FusibleGate], cfg: &FuseConfig) -> Result<Vec<FusedGate>, FusionError> {
    let f = cfg.max_fuse_size;
    if !(2..=6).contains(&f) {
        return Err(FusionError::BadFuseSize(f));
    }
    for g in gates {
        if g.qubits.len() > f {
            return Err(FusionError::GateTooLarge {
                arity: g.qubits.len(),
                max: f,
            });
        }
    }

    // Phase 1: absorb gates into the latest cluster covering their qubits.
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut latest_on: HashMap<usize, usize> = HashMap::new();
    for (idx, g) in gates.iter().enumerate() {
        let qset: BTreeSet<usize> = g.qubits.iter().copied().collect();
        // A cluster can take this gate if it is the latest on every qubit of
        // the gate and its qubit set covers the gate.
        let candidate = g.qubits.first().and_then(|q0| latest_on.get(q0)).copied();
        let absorbable = candidate.is_some_and(|ci| {
            let c = &clusters[ci];
            g.qubits.iter().all(|q| {
                latest_on.get(q) == Some(&ci) && c.qubits.contains(q)
            })
        });
        if absorbable {
            clusters[candidate.unwrap()].gates.push(idx);
            continue;
        }
        // New cluster anchored at this gate; swallow immediately-preceding
        // clusters whose qubits it covers (pending 1-qubit runs, typically).
        let mut merged_gates: Vec<usize> = Vec::new();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for q in &g.qubits {
            if let Some(&ci) = latest_on.get(q) {
                if seen.contains(&ci) {
                    continue;
                }
                let c = &clusters[ci];
                let covered = c.qubits.iter().all(|cq| {
                    qset.contains(cq) && latest_on.get(cq) == Some(&ci)
                });
                if covered && !c.gates.is_empty() {
                    seen.insert(ci);
                }
            }
        }
        let mut donors: Vec<usize> = seen.into_iter().collect();
        donors.sort_by_key(|&ci| clusters[ci].anchor);
        for ci in donors {
            merged_gates.append(&mut clusters[ci].gates);
        }
        merged_gates.push(idx);
        let anchor = merged_gates[0];
        let ci = clusters.len();
        clusters.push(Cluster {
            qubits: qset.clone(),
            gates: merged_gates,
            anchor,
        });
        for q in &qset {
            latest_on.insert(*q, ci);
        }
    }
    clusters.retain(|c| !c.gates.is_empty());
    clusters.sort_by_key(|c| c.anchor);

    // Per-qubit cluster sequences, ordered by each cluster's first gate on
    // that qubit. Cluster gate runs never interleave on a qubit, so this is
    // the qubit's true precedence order (donor merges can put a cluster's
    // anchor long before its first touch of some qubit, so the global
    // anchor order is not usable here).
    let mut per_qubit: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (ci, c) in clusters.iter().enumerate() {
        let mut firsts: HashMap<usize, usize> = HashMap::new();
        for &gi in &c.gates {
            for &q in &gates[gi].qubits {
                firsts
                    .entry(q)
                    .and_modify(|m| *m = (*m).min(gi))
                    .or_insert(gi);
            }
        }
        for (q, first) in firsts {
            per_qubit.entry(q).or_default().push((first, ci));
        }
    }
    for seq in per_qubit.values_mut() {
        seq.sort_unstable();
    }
    let pred_of = |ci: usize, q: usize| -> Option<usize> {
        let seq = &per_qubit[&q];
        let pos = seq.iter().position(|&(_, x)| x == ci).unwrap();
        (pos > 0).then(|| seq[pos - 1].1)
    };
    // A cluster is ready once every neighbor further back in time on any of
    // its qubits is marked; only ready clusters may be marked, which keeps
    // the emitted order a linear extension of the per-qubit gate order.
    let is_ready = |ci: usize, marked: &[bool]| -> bool {
        clusters[ci]
            .qubits
            .iter()
            .all(|&q| pred_of(ci, q).is_none_or(|p| marked[p]))
    };

    // Phase 2: greedy growth over clusters.
    let mut marked = vec![false; clusters.len()];
    let mut done = 0;
    let mut out = Vec::new();
    while done < clusters.len() {
        let seed = (0..clusters.len())
            .find(|&ci| !marked[ci] && is_ready(ci, &marked))
            .expect("cluster precedence forms a cycle");
        marked[seed] = true;
        done += 1;
        let mut qubits: BTreeSet<usize> = clusters[seed].qubits.clone();
        let mut members = vec![seed];
        loop {
            // A cluster may join if it shares a qubit with the fused set,
            // fits within f, and is ready.
            let mut best: Option<(usize, usize, usize)> = None; // (anchor, min qubit, index)
            for (ci, c) in clusters.iter().enumerate() {
                if marked[ci] || c.qubits.is_disjoint(&qubits) {
                    continue;
                }
                let union_size = qubits.union(&c.qubits).count();
                if union_size > f || !is_ready(ci, &marked) {
                    continue;
                }
                let key = (c.anchor, *c.qubits.iter().next().unwrap(), ci);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
            match best {
                Some((_, _, ci)) => {
                    marked[ci] = true;
                    done += 1;
                    qubits.extend(clusters[ci].qubits.iter().copied());
                    members.push(ci);
                }
                None => break,
            }
        }
        let mut gate_ids: Vec<usize> = members
            .iter()
            .flat_map(|&ci| clusters[ci].gates.iter().copied())
            .collect();
        gate_ids.sort_unstable();
        out.push(FusedGate {
            qubits: qubits.into_iter().collect(),
            gates: gate_ids.into_iter().map(|i| gates[i].clone()).collect(),
        });
    }
    Ok(out)
}

/// Debug dump of a fusion plan: original gate indices per fused gate.
pub fn plan_json(fused: &[FusedGate]) -> serde_json::Value {
    json!(fused
        .iter()
        .map(|fg| {
            json!({
                "qubits": fg.qubits,
                "gates": fg.gate_ids(),
            })
        })
        .collect::<Vec<_>>())
}
