//! The explicit edge-weight coupling between exploration processes on the
//! PWIT pair and i.i.d. exponential edge weights on `K_n`.
//!
//! A session runs one exploration, then assigns every pair {i, i'} of `K_n`
//! exactly one value by the three-case rule: the endpoint whose mark appeared
//! first (unthinned) contributes the minimal child weight with the other
//! mark, scaled by 1/n; pairs where neither or both endpoints are roots fall
//! back to independent keyed exponentials.

use crate::exploration::{Exploration, MinimalRule, Start};
use crate::fpp::{self, pair_index, EdgeWeightSource};
use crate::pwit::{PwitSample, VertexId};
use crate::rng::{self, purpose};
use crate::weights::WeightFamily;
use std::collections::HashMap;

/// Children scanned per owner before giving up on a mark; the miss
/// probability at this cap is about exp(-64) per pair.
const SCAN_CAP_FACTOR: u64 = 64;

#[derive(Debug, Clone)]
struct SessionVertex {
    id: VertexId,
    parent: Option<usize>,
    x: f64,
    time: f64,
    mark: u32,
    thinned: bool,
    step: u64,
}

/// A finished exploration with the bookkeeping needed to derive `K_n` edge
/// weights: `N(i)`, `V(i)`, and the per-owner minimal child weights by mark.
pub struct CouplingSession {
    sample: PwitSample,
    n: u64,
    seed: u64,
    explored: Vec<SessionVertex>,
    /// mark -> arena index of its unthinned owner.
    owners: HashMap<u32, usize>,
    /// Per owner arena index: minimal child weight carrying each mark
    /// (1-based mark indexing; 0 unused), built on first use.
    child_min: HashMap<usize, Vec<f64>>,
    pub scan_cap_hits: u64,
}

/// Exploration rules a session can be driven by.
#[derive(Debug, Clone, Copy)]
pub enum SessionRule {
    Fpp { family: WeightFamily },
    Ip,
}

impl CouplingSession {
    /// Run `steps` exploration steps on a fresh sample and freeze the state.
    pub fn run(seed: u64, n: u64, rule: SessionRule, start: Start, steps: u64) -> Self {
        let mut sample = PwitSample::new(seed, n);
        let explored: Vec<SessionVertex> = {
            let rule = match rule {
                SessionRule::Fpp { family } => MinimalRule::FppTime {
                    family,
                    n,
                    normalized: false,
                },
                SessionRule::Ip => MinimalRule::IpWeight,
            };
            let mut ex = Exploration::new(&mut sample, rule, start);
            ex.run(steps);
            ex.explored()
                .iter()
                .map(|v| SessionVertex {
                    id: v.id.clone(),
                    parent: v.parent,
                    x: v.x,
                    time: v.time,
                    mark: v.mark,
                    thinned: v.thinned,
                    step: v.step,
                })
                .collect()
        };
        let mut owners = HashMap::new();
        for (i, v) in explored.iter().enumerate() {
            if !v.thinned {
                owners.insert(v.mark, i);
            }
        }
        CouplingSession {
            sample,
            n,
            seed,
            explored,
            owners,
            child_min: HashMap::new(),
            scan_cap_hits: 0,
        }
    }

    /// Exploration step at which mark `i` first appeared unthinned.
    pub fn first_step(&self, mark: u32) -> Option<u64> {
        self.owners.get(&mark).map(|&idx| self.explored[idx].step)
    }

    fn build_child_min(&mut self, owner: usize) {
        if self.child_min.contains_key(&owner) {
            return;
        }
        let id = self.explored[owner].id.clone();
        let n = self.n;
        let mut table = vec![f64::INFINITY; n as usize + 1];
        let mut found = 0u64;
        let cap = SCAN_CAP_FACTOR * n;
        let mut rank = 1u32;
        while found < n && (rank as u64) <= cap {
            let x = self.sample.child_weight(&id, rank);
            let m = self.sample.mark(&id.child(rank)) as usize;
            if table[m].is_infinite() {
                table[m] = x;
                found += 1;
            }
            rank += 1;
        }
        if found < n {
            self.scan_cap_hits += n - found;
        }
        self.child_min.insert(owner, table);
    }

    /// `X(i, i')`: minimal child weight of `V(i)` whose mark is `i'`.
    pub fn x_of(&mut self, mark_i: u32, mark_j: u32) -> Option<f64> {
        let owner = *self.owners.get(&mark_i)?;
        self.build_child_min(owner);
        let v = self.child_min[&owner][mark_j as usize];
        v.is_finite().then_some(v)
    }

    fn fallback(&self, i: u32, j: u32) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let bits = rng::keyed_u64(&[self.seed, purpose::FALLBACK_EDGE, lo as u64, hi as u64]);
        -rng::unit_open(bits).ln()
    }

    /// The full `K_n` assignment of exponential-scale weights `X_e`.
    ///
    /// Under any minimal-rule exploration these are i.i.d. Exp(1).
    pub fn coupled_weights(&mut self) -> CoupledAssignment {
        let n = self.n as u32;
        let mut weights = vec![0.0f64; (self.n * (self.n - 1) / 2) as usize];
        let mut fallback_edges = 0u64;
        for j in 2..=n {
            for i in 1..j {
                let ni = self.first_step(i);
                let nj = self.first_step(j);
                let x = match (ni, nj) {
                    (Some(a), Some(b)) if a < b => self.x_of(i, j),
                    (Some(a), Some(b)) if b < a => self.x_of(j, i),
                    (Some(_), Some(_)) => None, // equal steps: both roots
                    (Some(_), None) => self.x_of(i, j),
                    (None, Some(_)) => self.x_of(j, i),
                    (None, None) => None,
                };
                weights[pair_index(i, j)] = match x {
                    Some(v) => v / self.n as f64,
                    None => {
                        fallback_edges += 1;
                        self.fallback(i, j)
                    }
                };
            }
        }
        CoupledAssignment {
            n: self.n,
            x_weights: weights,
            fallback_edges,
            scan_cap_hits: self.scan_cap_hits,
        }
    }

    /// Debug trace as JSON lines: one record per exploration step with the
    /// vertex, the induced pair (parent mark, own mark), the rule key value,
    /// and the thinning flag.
    pub fn debug_trace_jsonl(&self) -> String {
        let mut out = String::new();
        for v in self.explored.iter().filter(|v| v.parent.is_some()) {
            let p = &self.explored[v.parent.unwrap()];
            let line = serde_json::json!({
                "step": v.step,
                "vertex": v.id.to_string(),
                "pair": [p.mark, v.mark],
                "key": v.time,
                "thinned": v.thinned,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// Audit of the next-not-thinned identity: every unthinned non-root
    /// vertex must be exactly the minimal child of its parent carrying its
    /// mark. Returns the number of vertices checked; panics on violation.
    pub fn audit_next_not_thinned(&mut self) -> usize {
        let checks: Vec<(u32, u32, f64, String)> = self
            .explored
            .iter()
            .filter(|v| !v.thinned && v.parent.is_some())
            .map(|v| {
                let p = &self.explored[v.parent.unwrap()];
                (p.mark, v.mark, v.x, v.id.to_string())
            })
            .collect();
        for (pi, vi, x, id) in &checks {
            let got = self.x_of(*pi, *vi);
            assert_eq!(
                got,
                Some(*x),
                "vertex {id}: X({pi},{vi}) disagrees with the explored edge"
            );
        }
        checks.len()
    }
}

/// Complete exponential-scale edge-weight assignment on `K_n`.
pub struct CoupledAssignment {
    pub n: u64,
    /// Triangular layout as in `fpp::pair_index`; values are `X_e`, i.e.
    /// exponential scale (i.i.d. mean-1 exponential in law).
    pub x_weights: Vec<f64>,
    pub fallback_edges: u64,
    pub scan_cap_hits: u64,
}

impl CoupledAssignment {
    pub fn x(&self, i: u32, j: u32) -> f64 {
        self.x_weights[pair_index(i, j)]
    }

    /// FPP weights `Y_e = g(X_e)` for the given family.
    pub fn to_edge_weights(&self, family: &WeightFamily) -> EdgeWeightSource {
        EdgeWeightSource::Coupled {
            n: self.n,
            weights: self.x_weights.iter().map(|&x| family.g(x)).collect(),
        }
    }
}

/// Outcome of replaying the smallest-weight tree against the thinned
/// exploration image.
#[derive(Debug, Clone)]
pub struct SwtCouplingReport {
    pub agree: bool,
    /// Number of unthinned growth steps compared.
    pub compared: usize,
    pub first_mismatch: Option<usize>,
    /// Max |tau_k - T_{v_k}|; zero when the coupling holds (identical
    /// floating-point arithmetic on both sides).
    pub max_time_gap: f64,
}

/// Run the one-source FPP exploration for `m` steps, derive the coupled
/// `K_n` weights, rerun Dijkstra on those weights, and compare the
/// smallest-weight tree growth with the image of the unthinned exploration,
/// edge for edge and time for time.
pub fn verify_swt_coupling(seed: u64, family: &WeightFamily, n: u64, m: u64) -> SwtCouplingReport {
    let mut session = CouplingSession::run(
        seed,
        n,
        SessionRule::Fpp { family: *family },
        Start::Root(1),
        m,
    );
    let assignment = session.coupled_weights();
    let source = assignment.to_edge_weights(family);

    // Image of the unthinned exploration: (parent mark, own mark, weight, time).
    let image: Vec<(u32, u32, f64, f64)> = session
        .explored
        .iter()
        .filter(|v| !v.thinned && v.parent.is_some())
        .map(|v| {
            let p = &session.explored[v.parent.unwrap()];
            (
                p.mark,
                v.mark,
                family.f_n(n, v.x).expect("x > 0"),
                v.time,
            )
        })
        .collect();

    let growth = fpp::swt_prefix(&source, 1, image.len()).expect("n >= 2");
    let mut first_mismatch = None;
    let mut max_time_gap = 0.0f64;
    for (k, ((pi, vi, w, t), step)) in image.iter().zip(growth.iter()).enumerate() {
        let edge_ok = step.from == *pi && step.vertex == *vi && step.weight == *w;
        let gap = (step.time - t).abs();
        max_time_gap = max_time_gap.max(gap);
        if !(edge_ok && gap == 0.0) && first_mismatch.is_none() {
            first_mismatch = Some(k);
        }
    }
    SwtCouplingReport {
        agree: first_mismatch.is_none(),
        compared: image.len(),
        first_mismatch,
        max_time_gap,
    }
}

#[derive(Debug, Clone)]
pub struct IpAgreementReport {
    pub agree: bool,
    pub first_divergence: Option<u64>,
}

/// Run the FPP and invasion explorations from root 1 on the same sample and
/// compare the first `m` explored vertices as sequences.
pub fn verify_ip_agreement(seed: u64, family: &WeightFamily, n: u64, m: u64) -> IpAgreementReport {
    let fpp_ids: Vec<VertexId> = {
        let mut sample = PwitSample::new(seed, n);
        let rule = MinimalRule::FppTime {
            family: *family,
            n,
            normalized: true,
        };
        let mut ex = Exploration::new(&mut sample, rule, Start::Root(1));
        ex.run(m);
        ex.explored().iter().map(|v| v.id.clone()).collect()
    };
    let ip_ids: Vec<VertexId> = {
        let mut sample = PwitSample::new(seed, n);
        let mut ex = Exploration::new(&mut sample, MinimalRule::IpWeight, Start::Root(1));
        ex.run(m);
        ex.explored().iter().map(|v| v.id.clone()).collect()
    };
    let first_divergence = fpp_ids
        .iter()
        .zip(ip_ids.iter())
        .position(|(a, b)| a != b)
        .map(|k| k as u64);
    IpAgreementReport {
        agree: first_divergence.is_none(),
        first_divergence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn pe(s: f64) -> WeightFamily {
        WeightFamily::PowerOfExp { s }
    }

    #[test]
    fn root_pair_uses_fallback_exponential() {
        let mut session = CouplingSession::run(9, 30, SessionRule::Ip, Start::BothRoots, 40);
        let a = session.coupled_weights();
        assert!(a.fallback_edges >= 1);
        let expect = session.fallback(1, 2);
        assert_eq!(a.x(1, 2), expect);
    }

    #[test]
    fn every_pair_assigned_once_and_positive() {
        let mut session =
            CouplingSession::run(4, 25, SessionRule::Fpp { family: pe(4.0) }, Start::BothRoots, 60);
        let a = session.coupled_weights();
        assert_eq!(a.x_weights.len(), 25 * 24 / 2);
        assert!(a.x_weights.iter().all(|&x| x > 0.0 && x.is_finite()));
        assert_eq!(a.scan_cap_hits, 0);
    }

    #[test]
    fn next_not_thinned_audit_passes() {
        // At strong disorder the exploration is path-like, so hereditary
        // thinning can leave very few unthinned vertices on a given seed;
        // require substance in aggregate, correctness per vertex.
        let mut total = 0;
        for seed in 0..20u64 {
            let mut session = CouplingSession::run(
                seed,
                40,
                SessionRule::Fpp { family: pe(6.0) },
                Start::BothRoots,
                100,
            );
            total += session.audit_next_not_thinned();
        }
        assert!(total > 50, "only {total} unthinned steps audited");
    }

    #[test]
    fn debug_trace_is_json_lines() {
        let session = CouplingSession::run(2, 30, SessionRule::Ip, Start::BothRoots, 15);
        let trace = session.debug_trace_jsonl();
        assert_eq!(trace.lines().count(), 15);
        for line in trace.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["step"].as_u64().unwrap() >= 1);
            assert!(v["pair"].as_array().unwrap().len() == 2);
        }
    }

    #[test]
    fn coupled_weights_look_exponential_in_aggregate() {
        // Smoke-scale version of the i.i.d. law: pool three fixed edges over
        // replicas and test each against Exp(1).
        let n = 20u64;
        let reps = 3000u64;
        let mut per_edge: Vec<Vec<f64>> = vec![Vec::new(); 3];
        let probes = [(1u32, 5u32), (3, 9), (17, 19)];
        for seed in 0..reps {
            let mut session = CouplingSession::run(
                seed,
                n,
                SessionRule::Fpp { family: pe(8.0) },
                Start::BothRoots,
                60,
            );
            let a = session.coupled_weights();
            for (k, &(i, j)) in probes.iter().enumerate() {
                per_edge[k].push(a.x(i, j));
            }
        }
        for (k, xs) in per_edge.iter().enumerate() {
            let d = stats::ks_distance(xs, |x| 1.0 - (-x).exp()).unwrap();
            let p = stats::ks_p_value(d, xs.len());
            assert!(p > 1e-3, "edge {k}: ks {d}, p {p}");
        }
    }

    #[test]
    fn swt_coupling_holds_with_exact_times() {
        for seed in 0..25u64 {
            let rep = verify_swt_coupling(seed, &pe(8.0), 200, 50);
            assert!(rep.agree, "seed {seed}: mismatch at {:?}", rep.first_mismatch);
            assert_eq!(rep.max_time_gap, 0.0, "seed {seed}");
            assert!(rep.compared > 0);
        }
    }

    #[test]
    fn swt_coupling_trivial_at_zero_steps() {
        let rep = verify_swt_coupling(1, &pe(8.0), 50, 0);
        assert!(rep.agree);
        assert_eq!(rep.compared, 0);
    }

    #[test]
    fn ip_agreement_always_holds_at_one_step() {
        for seed in 0..100u64 {
            let rep = verify_ip_agreement(seed, &pe(2.0), 1000, 1);
            assert!(rep.agree, "seed {seed}");
        }
    }

    #[test]
    fn ip_agreement_improves_with_disorder() {
        let seeds = 120u64;
        let mut strong = 0;
        let mut weak = 0;
        for seed in 0..seeds {
            if verify_ip_agreement(seed, &pe(64.0), 10_000, 10).agree {
                strong += 1;
            }
            if verify_ip_agreement(seed, &pe(1.0), 10_000, 10).agree {
                weak += 1;
            }
        }
        assert!(strong > weak, "strong {strong} weak {weak}");
        assert!(strong as f64 / seeds as f64 >= 0.9, "strong rate {strong}/{seeds}");
    }
}

