//! Poisson Galton–Watson analytics and samplers: survival probability and its
//! inverse, the duality transform, the exact total-progeny law, tree sampling,
//! and the law of the largest invaded weight `M`.

use crate::rng::RngExt;
use rand_core::RngCore;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgwError {
    #[error("offspring mean must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("dual mean requires m > 1, got {0}")]
    NotSupercritical(f64),
}

/// Survival probability theta(m) of a Poisson(m) Galton–Watson tree:
/// the largest root of `1 - theta = exp(-m theta)`.
///
/// Zero for m <= 1; for m > 1 solved by bisection to absolute residual
/// below 1e-13.
pub fn survival_probability(m: f64) -> f64 {
    assert!(m > 0.0 && m.is_finite(), "mean must be positive");
    if m <= 1.0 {
        return 0.0;
    }
    // phi(t) = 1 - t - exp(-m t); phi > 0 left of the root, < 0 right of it.
    let phi = |t: f64| 1.0 - t - (-m * t).exp();
    let mut lo = 1e-14;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse of theta: the m > 1 with `theta(m) = u`, from the fixed point
/// `1 - u = exp(-m u)` solved for m.
pub fn theta_inverse(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "u must lie in (0,1)");
    -(-u).ln_1p() / u
}

/// Dual (subcritical) mean `m_hat = m (1 - theta(m)) < 1` for m > 1.
pub fn dual_mean(m: f64) -> Result<f64, PgwError> {
    if !(m.is_finite() && m > 0.0) {
        return Err(PgwError::BadMean(m));
    }
    if m <= 1.0 {
        return Err(PgwError::NotSupercritical(m));
    }
    Ok(m * (1.0 - survival_probability(m)))
}

/// ln P_m(|tau| = k) for the exact total-progeny law
/// `P_m(|tau| = k) = e^{-mk} (mk)^{k-1} / k!`.
pub fn total_progeny_ln_pmf(m: f64, k: u64) -> f64 {
    assert!(m > 0.0 && k >= 1);
    let kf = k as f64;
    -m * kf + (kf - 1.0) * (m * kf).ln() - ln_gamma(kf + 1.0)
}

/// P_m(|tau| = k); underflows to 0 for very large k.
pub fn total_progeny_pmf(m: f64, k: u64) -> f64 {
    total_progeny_ln_pmf(m, k).exp()
}

/// One sampled Poisson Galton–Watson tree in breadth-first order.
#[derive(Debug, Clone, Serialize)]
pub struct SampledTree {
    /// parent[i] is the index of node i's parent; parent[0] is unused.
    pub parent: Vec<u32>,
    pub child_counts: Vec<u32>,
    pub height: u32,
    pub size: usize,
    /// True when generation stopped at the size or height cap.
    pub truncated: bool,
}

/// Sample a PGW(m) tree breadth-first. Supercritical trees are infinite with
/// positive probability, so both caps are mandatory.
pub fn sample_tree<R: RngCore>(
    m: f64,
    size_cap: usize,
    height_cap: u32,
    rng: &mut R,
) -> SampledTree {
    assert!(size_cap >= 1 && height_cap >= 1);
    let mut parent = vec![0u32];
    let mut child_counts = vec![0u32];
    let mut depth = vec![0u32];
    let mut truncated = false;
    let mut head = 0usize;
    let mut height = 0u32;
    while head < parent.len() {
        let d = depth[head];
        if d >= height_cap {
            truncated = true;
            head += 1;
            continue;
        }
        let k = rng.poisson(m) as u32;
        child_counts[head] = k;
        for _ in 0..k {
            if parent.len() >= size_cap {
                truncated = true;
                break;
            }
            parent.push(head as u32);
            child_counts.push(0);
            depth.push(d + 1);
            height = height.max(d + 1);
        }
        if truncated && parent.len() >= size_cap {
            break;
        }
        head += 1;
    }
    SampledTree {
        size: parent.len(),
        parent,
        child_counts,
        height,
        truncated,
    }
}

/// Draw one `M` with `P(M <= x) = theta(x)`: the largest weight invasion
/// percolation on the PWIT ever accepts. Always exceeds 1.
pub fn sample_m<R: RngCore>(rng: &mut R) -> f64 {
    theta_inverse(rng.uniform())
}

/// Total-progeny PMF table as CSV (columns m, k, pmf).
pub fn progeny_pmf_csv(means: &[f64], k_max: u64) -> String {
    let mut out = String::from("# schema=1\nm,k,pmf\n");
    for &m in means {
        for k in 1..=k_max {
            out.push_str(&format!("{m},{k},{}\n", total_progeny_pmf(m, k)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn survival_zero_at_and_below_one() {
        assert_eq!(survival_probability(1.0), 0.0);
        assert_eq!(survival_probability(0.3), 0.0);
    }

    #[test]
    fn survival_at_two() {
        let t = survival_probability(2.0);
        assert!((1.0 - t - (-2.0 * t).exp()).abs() < 1e-13, "residual");
        assert!((t - 0.796812).abs() < 1e-6, "theta(2) = {t}");
    }

    #[test]
    fn survival_near_critical_asymptote() {
        let t = survival_probability(1.01);
        assert!((t - 0.02).abs() < 0.05 * 0.02 + 5e-4, "theta(1.01) = {t}");
        assert!((t / 0.02 - 1.0).abs() < 0.05 || (t - 0.0197).abs() < 3e-4);
    }

    #[test]
    fn survival_fixed_point_residual_on_grid() {
        for &m in &[1.001, 1.01, 1.1, 1.5, 2.0, 3.0, 5.0, 10.0] {
            let t = survival_probability(m);
            assert!(
                (1.0 - t - (-m * t).exp()).abs() < 1e-12,
                "residual at m = {m}"
            );
        }
    }

    #[test]
    fn survival_is_non_decreasing() {
        let mut prev = 0.0;
        for i in 0..400 {
            let m = 0.5 + i as f64 * 0.025;
            let t = survival_probability(m);
            assert!(t >= prev - 1e-14, "decrease at m = {m}");
            prev = t;
        }
    }

    #[test]
    fn theta_inverse_round_trip() {
        for &m in &[1.05, 1.3, 2.0, 4.0, 9.0] {
            let t = survival_probability(m);
            let back = theta_inverse(t);
            assert!((back - m).abs() < 1e-9, "m {m} back {back}");
        }
    }

    #[test]
    fn dual_mean_values() {
        let mh = dual_mean(2.0).unwrap();
        assert!((mh - 2.0 * (1.0 - 0.7968121300200202)).abs() < 1e-6);
        assert!((mh - 0.406376).abs() < 1e-5);
        // 1 - m_hat ~ m - 1 near criticality.
        let eps = 1e-3;
        let mh = dual_mean(1.0 + eps).unwrap();
        assert!(((1.0 - mh) / eps - 1.0).abs() < 0.1, "1 - m_hat = {}", 1.0 - mh);
        assert!(dual_mean(10.0).unwrap() < 1.0);
        assert!(dual_mean(1.0).is_err());
    }

    #[test]
    fn progeny_pmf_small_cases() {
        assert!((total_progeny_pmf(0.5, 1) - (-0.5f64).exp()).abs() < 1e-12);
        let expect = 1.5 * (-3.0f64).exp();
        assert!((total_progeny_pmf(1.0, 3) - expect).abs() < 1e-12);
    }

    #[test]
    fn progeny_pmf_matches_stirling_form() {
        let m = 1.0;
        let k = 100u64;
        let exact = total_progeny_pmf(m, k);
        let stirling = 1.0 / (m * (2.0 * std::f64::consts::PI * (k as f64).powi(3)).sqrt())
            * (-(m - 1.0 - m.ln()) * k as f64).exp();
        assert!((exact / stirling - 1.0).abs() < 0.02, "ratio {}", exact / stirling);
    }

    #[test]
    fn progeny_partial_sum_reaches_extinction_probability() {
        let m = 1.2;
        let target = 1.0 - survival_probability(m);
        let sum: f64 = (1..=100_000).map(|k| total_progeny_pmf(m, k)).sum();
        assert!((sum - target).abs() < 1e-4, "sum {sum} target {target}");
    }

    #[test]
    fn sampled_tree_size_distribution() {
        let m = 0.9;
        let mut rng = stream(&[21]);
        let reps = 100_000;
        let mut singletons = 0usize;
        for _ in 0..reps {
            let t = sample_tree(m, 1_000_000, 1_000_000, &mut rng);
            assert!(!t.truncated);
            if t.size == 1 {
                singletons += 1;
            }
        }
        let p = singletons as f64 / reps as f64;
        let expect = total_progeny_pmf(m, 1);
        let se = (expect * (1.0 - expect) / reps as f64).sqrt();
        assert!((p - expect).abs() < 3.0 * se, "p {p} expect {expect}");
    }

    #[test]
    fn subcritical_truncation_is_rare() {
        let mut rng = stream(&[22]);
        let mut truncated = 0usize;
        let reps = 20_000;
        for _ in 0..reps {
            if sample_tree(0.5, 1_000_000, 1_000_000, &mut rng).truncated {
                truncated += 1;
            }
        }
        assert!((truncated as f64 / reps as f64) < 1e-3);
    }

    #[test]
    fn size_cap_one_truncates_any_birth() {
        let mut rng = stream(&[23]);
        for _ in 0..200 {
            let t = sample_tree(5.0, 1, 10, &mut rng);
            assert_eq!(t.size, 1);
            if t.child_counts[0] > 0 || t.truncated {
                // A root attempting children under size_cap=1 must be flagged.
                assert!(t.truncated);
                return;
            }
        }
        panic!("mean-5 root never produced a child in 200 draws");
    }

    #[test]
    fn sample_m_median_and_support() {
        // theta(x) = 1/2 at x = 2 ln 2.
        assert!((theta_inverse(0.5) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let mut rng = stream(&[24]);
        let mut xs: Vec<f64> = (0..100_000).map(|_| sample_m(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 1.0));
        xs.sort_unstable_by(|a, b| a.total_cmp(b));
        let med = xs[xs.len() / 2];
        assert!((1.37..=1.40).contains(&med), "median {med}");
    }

    #[test]
    fn pmf_csv_table_shape() {
        let csv = progeny_pmf_csv(&[0.5, 1.2], 3);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# schema=1");
        assert_eq!(lines[1], "m,k,pmf");
        assert_eq!(lines.len(), 2 + 6);
        assert!(lines[2].starts_with("0.5,1,"));
    }

    #[test]
    fn duality_of_conditioned_supercritical_trees() {
        // Size law of PGW(1.5) conditioned on extinction matches PGW(m_hat).
        let m = 1.5;
        let mh = dual_mean(m).unwrap();
        let mut rng = stream(&[25]);
        let reps = 100_000;
        let cap = 5_000;
        let mut finite = 0usize;
        let mut counts = [0usize; 11];
        for _ in 0..reps {
            let t = sample_tree(m, cap, 1_000_000, &mut rng);
            if t.truncated {
                continue; // treated as survival
            }
            finite += 1;
            if t.size <= 10 {
                counts[t.size] += 1;
            }
        }
        for k in 1..=10u64 {
            let p = counts[k as usize] as f64 / finite as f64;
            let expect = total_progeny_pmf(mh, k);
            let se = (expect * (1.0 - expect) / finite as f64).sqrt();
            assert!(
                (p - expect).abs() < 3.0 * se + 1e-4,
                "k={k}: p {p} expect {expect}"
            );
        }
    }
}
