//! Adaptive Gauss–Kronrod quadrature (7/15 pair, bisection refinement).
//!
//! The integrands in this crate are smooth away from a boundary layer whose
//! width shrinks like `1/s_n`; plain bisection reaches that scale in
//! `O(log s_n)` levels, so no substitution tricks are needed.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: estimate {estimate}, error {error}, evals {evals}")]
    NoConvergence {
        estimate: f64,
        error: f64,
        evals: u64,
    },
    #[error("quadrature produced a non-finite value on [{a}, {b}]")]
    NonFinite { a: f64, b: f64 },
}

/// 15-point Kronrod abscissae (positive half, descending) and weights, plus
/// the embedded 7-point Gauss weights. QUADPACK dqk15 constants.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

struct Panel {
    value: f64,
    error: f64,
}

fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kron = 0.0;
    let mut gauss = 0.0;
    for i in 0..8 {
        let (lo, hi) = if XGK[i] == 0.0 {
            let v = f(mid);
            (v, 0.0)
        } else {
            (f(mid - half * XGK[i]), f(mid + half * XGK[i]))
        };
        let pair = lo + hi;
        kron += WGK[i] * pair;
        // Gauss nodes sit at the odd Kronrod indices.
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        } else if XGK[i] == 0.0 {
            gauss += WG[3] * lo;
        }
    }
    let value = kron * half;
    let diff = (kron - gauss) * half;
    // QUADPACK-style sharpened error estimate.
    let error = (200.0 * diff.abs()).powf(1.5).min(diff.abs());
    Panel { value, error }
}

pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: u64,
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol` (plus a
/// relative floor of 1e-12). Adaptive bisection, worst-panel-first.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let mut evals = 15u64;
    let first = kronrod_panel(&mut f, a, b);
    // (error, a, b, value); a simple vec scan is fine at these panel counts.
    let mut panels: Vec<(f64, f64, f64, f64)> = vec![(first.error, a, b, first.value)];
    let max_panels = 4096;
    loop {
        let total: f64 = panels.iter().map(|p| p.3).sum();
        let err: f64 = panels.iter().map(|p| p.0).sum();
        if !total.is_finite() {
            return Err(QuadError::NonFinite { a, b });
        }
        let tol = abs_tol.max(1e-12 * total.abs());
        if err <= tol {
            return Ok(QuadResult {
                value: total,
                error: err,
                evals,
            });
        }
        if panels.len() >= max_panels {
            return Err(QuadError::NoConvergence {
                estimate: total,
                error: err,
                evals,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .map(|(i, _)| i)
            .unwrap();
        let (_, pa, pb, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // Interval at floating-point resolution; keep its estimate.
            let p = kronrod_panel(&mut f, pa, pb);
            panels.push((0.0, pa, pb, p.value));
            evals += 15;
            continue;
        }
        let left = kronrod_panel(&mut f, pa, mid);
        let right = kronrod_panel(&mut f, mid, pb);
        evals += 30;
        panels.push((left.error, pa, mid, left.value));
        panels.push((right.error, mid, pb, right.value));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness_of_the_pair() {
        // Degree-13 polynomial: exact for Gauss-7 and Kronrod-15 alike, so the
        // panel error estimate collapses; catches typos in the tables.
        let mut f = |x: f64| x.powi(13) + 3.0 * x.powi(7) - x + 0.25;
        let p = kronrod_panel(&mut f, -1.0, 1.0);
        assert!((p.value - 0.5).abs() < 1e-14, "value {}", p.value);
        assert!(p.error < 1e-12, "error {}", p.error);
    }

    #[test]
    fn smooth_integrals() {
        let r = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-12);
        let r = integrate(|x: f64| (-x).exp(), 0.0, 60.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_layer_integrand() {
        // exp(-c x^s) with s = 256: layer of width ~1/s at x = 1;
        // compare against the closed form (Gamma(1+1/s)/c^(1/s)).
        let s = 256.0;
        let c = 0.561_459_48;
        let r = integrate(|x: f64| (-c * x.powf(s)).exp(), 0.0, 2.0, 1e-11).unwrap();
        let expect = statrs::function::gamma::gamma(1.0 + 1.0 / s) / c.powf(1.0 / s);
        assert!(
            (r.value - expect).abs() < 1e-9,
            "value {} expect {expect}",
            r.value
        );
    }
}
