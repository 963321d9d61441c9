//! Invasion-percolation observables on the PWIT: the running maximum invaded
//! weight and first pond, the forward-maximum Markov chain along the
//! backbone, and a structural sampler of the invasion cluster built from that
//! chain with Poisson Galton–Watson branches.

use crate::exploration::{Exploration, MinimalRule, Start};
use crate::pgw::{self, SampledTree};
use crate::pwit::{PwitSample, VertexId};
use crate::rng::RngExt;
use rand_core::RngCore;

/// Observables of a finite-horizon invasion run from one root.
#[derive(Debug, Clone)]
pub struct IpObservables {
    /// Invaded edge weights in invasion order.
    pub invaded: Vec<f64>,
    /// Final running maximum; a lower bound for M that equals M once the
    /// maximum has stopped updating well before the horizon.
    pub m_hat: f64,
    /// Step (1-based) at which the running maximum last increased.
    pub last_max_update_step: u64,
    /// Runs whose maximum was still moving near the horizon, or never
    /// exceeded the critical value 1 (the true M is above 1 a.s., so such a
    /// maximum is certainly still pending), say nothing about M; they are
    /// flagged rather than silently included.
    pub censored: bool,
    /// Vertices invaded strictly before the edge achieving the final
    /// maximum, including the root.
    pub first_pond: Vec<VertexId>,
}

/// Run invasion percolation for `horizon` steps and collect its observables.
/// Runs with `last_max_update_step > 0.9 * horizon` are marked censored.
pub fn ip_observables(sample: &mut PwitSample, root: u8, horizon: u64) -> IpObservables {
    assert!(horizon >= 1);
    let mut ex = Exploration::new(sample, MinimalRule::IpWeight, Start::Root(root));
    ex.run(horizon);
    let explored = ex.explored();
    let mut m_hat = f64::NEG_INFINITY;
    let mut last_update = 0u64;
    let mut invaded = Vec::with_capacity(horizon as usize);
    for v in &explored[1..] {
        invaded.push(v.x);
        if v.x > m_hat {
            m_hat = v.x;
            last_update = v.step;
        }
    }
    let first_pond = explored
        .iter()
        .filter(|v| v.step < last_update)
        .map(|v| v.id.clone())
        .collect();
    IpObservables {
        invaded,
        m_hat,
        last_max_update_step: last_update,
        censored: last_update as f64 > 0.9 * horizon as f64 || m_hat <= 1.0,
        first_pond,
    }
}

/// Per-replica invasion observables as CSV
/// (columns seed, m_hat, last_max_update_step, pond_size, censored).
pub fn observables_csv(rows: &[(u64, IpObservables)]) -> String {
    let mut out = String::from("# schema=1\nseed,m_hat,last_max_update_step,pond_size,censored\n");
    for (seed, obs) in rows {
        out.push_str(&format!(
            "{seed},{},{},{},{}\n",
            obs.m_hat,
            obs.last_max_update_step,
            obs.first_pond.len(),
            obs.censored as u8
        ));
    }
    out
}

/// Probability that the forward maximum stays put: `m (1 - theta(m))`.
pub fn stay_probability(m: f64) -> f64 {
    m * (1.0 - pgw::survival_probability(m))
}

/// Sample the forward-maximum chain `(M_0, ..., M_k)`: `M_0` from the law
/// `P(M_0 <= x) = theta(x)`; at each step the chain stays with probability
/// `m(1 - theta(m))` and otherwise jumps below m with conditional CDF
/// `theta(m')/theta(m)`.
pub fn forward_max_chain<R: RngCore>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut chain = Vec::with_capacity(k + 1);
    let mut m = pgw::sample_m(rng);
    chain.push(m);
    for _ in 0..k {
        let theta = pgw::survival_probability(m);
        let stay = m * (1.0 - theta);
        if rng.uniform() >= stay {
            m = pgw::theta_inverse(rng.uniform() * theta);
        }
        chain.push(m);
    }
    chain
}

/// One off-backbone branch: a PGW tree plus per-edge PWIT weights, all below
/// the local forward maximum.
#[derive(Debug, Clone)]
pub struct BranchSample {
    pub tree: SampledTree,
    /// Weight of the edge above node i (i >= 1), uniform on [0, m_k].
    pub edge_weights: Vec<f64>,
}

/// Sample the off-backbone branch at a height with forward maximum `m_k`:
/// a PGW tree with the dual (subcritical) mean and Uniform[0, m_k] weights.
pub fn sample_branch<R: RngCore>(
    m_k: f64,
    size_cap: usize,
    height_cap: u32,
    rng: &mut R,
) -> BranchSample {
    let m_hat = m_k * (1.0 - pgw::survival_probability(m_k));
    let tree = pgw::sample_tree(m_hat, size_cap, height_cap, rng);
    let edge_weights = (1..tree.size).map(|_| m_k * rng.uniform()).collect();
    BranchSample { tree, edge_weights }
}

/// Invasion cluster sampled structurally from the forward-maximum chain.
#[derive(Debug, Clone)]
pub struct StructuralCluster {
    /// `M_0, ..., M_{k_max}`.
    pub forward_max: Vec<f64>,
    /// Backbone edge weights `X^BB_1, ..., X^BB_{k_max}`; entry k-1 is the
    /// edge between backbone heights k-1 and k.
    pub backbone_weights: Vec<f64>,
    /// Branches hanging off backbone heights `0..k_max`.
    pub branches: Vec<BranchSample>,
    pub truncated: bool,
}

impl StructuralCluster {
    /// Size of the first pond: every vertex in the branches strictly below
    /// the first strict decrease of the chain (the outlet height). `None`
    /// when the chain never drops within the sampled horizon or a pond
    /// branch hit its cap.
    pub fn pond_size(&self) -> Option<u64> {
        let outlet = (1..self.forward_max.len())
            .find(|&k| self.forward_max[k] < self.forward_max[k - 1])?;
        let mut total = 0u64;
        for branch in &self.branches[..outlet] {
            if branch.tree.truncated {
                return None;
            }
            total += branch.tree.size as u64;
        }
        Some(total)
    }
}

/// Sample the invasion cluster down to backbone height `k_max`.
pub fn structural_ip_sampler<R: RngCore>(
    k_max: usize,
    size_cap: usize,
    height_cap: u32,
    rng: &mut R,
) -> StructuralCluster {
    let forward_max = forward_max_chain(k_max, rng);
    let mut backbone_weights = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let (prev, cur) = (forward_max[k - 1], forward_max[k]);
        let w = if cur < prev { prev } else { cur * rng.uniform() };
        backbone_weights.push(w);
    }
    let mut truncated = false;
    let branches = (0..k_max)
        .map(|k| {
            let b = sample_branch(forward_max[k], size_cap, height_cap, rng);
            truncated |= b.tree.truncated;
            b
        })
        .collect();
    StructuralCluster {
        forward_max,
        backbone_weights,
        branches,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats;

    #[test]
    fn stay_probability_at_two() {
        assert!((stay_probability(2.0) - 0.406376).abs() < 1e-5);
    }

    #[test]
    fn chain_is_non_increasing_and_above_one() {
        let mut rng = stream(&[61]);
        for _ in 0..2000 {
            let chain = forward_max_chain(50, &mut rng);
            assert!(chain[0] > 1.0);
            for w in chain.windows(2) {
                assert!(w[1] <= w[0] && w[1] > 1.0);
            }
        }
    }

    #[test]
    fn chain_initial_law_matches_theta() {
        let mut rng = stream(&[62]);
        let m0: Vec<f64> = (0..20_000).map(|_| forward_max_chain(0, &mut rng)[0]).collect();
        let ks = stats::ks_distance(&m0, pgw::survival_probability).unwrap();
        assert!(ks < 0.015, "ks {ks}");
    }

    #[test]
    fn scaled_chain_tail_approaches_unit_exponential_mean() {
        let mut rng = stream(&[63]);
        let k = 200;
        let reps = 3000;
        let mean: f64 = (0..reps)
            .map(|_| {
                let chain = forward_max_chain(k, &mut rng);
                k as f64 * (chain[k] - 1.0)
            })
            .sum::<f64>()
            / reps as f64;
        assert!((0.85..=1.15).contains(&mean), "mean {mean}");
    }

    #[test]
    fn invasion_maximum_exceeds_one_and_pond_is_connected() {
        for seed in 0..200u64 {
            let mut sample = PwitSample::new(seed, 1_000_000);
            let obs = ip_observables(&mut sample, 1, 1500);
            if !obs.censored {
                assert!(obs.m_hat > 1.0, "seed {seed}: m_hat {}", obs.m_hat);
            }
            assert_eq!(obs.invaded.len(), 1500);
            // Pond is a subtree containing the root: every member's parent is
            // a member (roots aside).
            let set: std::collections::HashSet<_> = obs.first_pond.iter().cloned().collect();
            assert!(set.contains(&VertexId::root(1)));
            for v in &obs.first_pond {
                if let Some(p) = v.parent() {
                    assert!(set.contains(&p), "seed {seed}: pond not connected at {v}");
                }
            }
        }
    }

    #[test]
    fn invasion_maximum_law_matches_survival_probability() {
        // Pointwise comparison of the ECDF of the finite-horizon maximum with
        // theta(x), away from the critical value. All runs enter the ECDF:
        // a censored run's lower bound still classifies correctly at these
        // thresholds (its true maximum sits near 1), while excluding such
        // runs would systematically undercount the small-M mass.
        let mut values = Vec::new();
        let mut censored = 0usize;
        let reps = 3000u64;
        for seed in 0..reps {
            let mut sample = PwitSample::new(seed, 1_000_000);
            let obs = ip_observables(&mut sample, 1, 2000);
            if obs.censored {
                censored += 1;
            }
            values.push(obs.m_hat);
        }
        assert!((censored as f64) < 0.05 * reps as f64, "censored {censored}");
        for &x in &[1.2, 1.5, 2.0, 3.0] {
            let ecdf = values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64;
            let theta = pgw::survival_probability(x);
            assert!(
                (ecdf - theta).abs() < 0.02,
                "at x = {x}: ecdf {ecdf} theta {theta}"
            );
        }
    }

    #[test]
    fn observables_csv_shape() {
        let mut sample = PwitSample::new(3, 1000);
        let obs = ip_observables(&mut sample, 1, 50);
        let csv = observables_csv(&[(3, obs)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# schema=1");
        assert_eq!(lines[1], "seed,m_hat,last_max_update_step,pond_size,censored");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("3,"));
    }

    #[test]
    fn structural_cluster_respects_weight_supports() {
        let mut rng = stream(&[64]);
        for _ in 0..500 {
            let c = structural_ip_sampler(30, 100_000, 1_000_000, &mut rng);
            for k in 1..c.forward_max.len() {
                let (prev, cur) = (c.forward_max[k - 1], c.forward_max[k]);
                let w = c.backbone_weights[k - 1];
                if cur < prev {
                    assert_eq!(w, prev, "drop step must expose the old maximum");
                } else {
                    assert!(w <= cur && w >= 0.0);
                }
            }
            for (k, b) in c.branches.iter().enumerate() {
                for &w in &b.edge_weights {
                    assert!(w <= c.forward_max[k]);
                }
                assert_eq!(b.edge_weights.len(), b.tree.size - 1);
            }
        }
    }

    #[test]
    fn branch_sizes_follow_dual_progeny_law() {
        let m_k = 1.4;
        let m_hat = m_k * (1.0 - pgw::survival_probability(m_k));
        let mut rng = stream(&[65]);
        let reps = 100_000;
        let mut counts = [0usize; 11];
        for _ in 0..reps {
            let b = sample_branch(m_k, 100_000, 1_000_000, &mut rng);
            if b.tree.size <= 10 {
                counts[b.tree.size] += 1;
            }
        }
        for k in 1..=10u64 {
            let p = counts[k as usize] as f64 / reps as f64;
            let expect = pgw::total_progeny_pmf(m_hat, k);
            let se = (expect * (1.0 - expect) / reps as f64).sqrt();
            assert!(
                (p - expect).abs() < 3.0 * se + 1e-4,
                "k {k}: p {p} expect {expect}"
            );
        }
    }

    #[test]
    fn structural_and_direct_pond_sizes_agree_in_law() {
        // Desk-scale consistency of the backbone description with direct
        // invasion: two-sample KS on first-pond sizes.
        let mut rng = stream(&[66]);
        let reps = 4000;
        let mut structural = Vec::new();
        while structural.len() < reps {
            let c = structural_ip_sampler(64, 100_000, 1_000_000, &mut rng);
            if let Some(sz) = c.pond_size() {
                structural.push(sz as f64);
            }
        }
        let mut direct = Vec::new();
        let mut seed = 0u64;
        while direct.len() < reps {
            let mut sample = PwitSample::new(1_000_000 + seed, 1_000_000);
            seed += 1;
            let obs = ip_observables(&mut sample, 1, 1500);
            if !obs.censored {
                direct.push(obs.first_pond.len() as f64);
            }
        }
        let d = stats::ks_two_sample(&structural, &direct).unwrap();
        assert!(d < 0.05, "two-sample ks {d}");
    }
}
