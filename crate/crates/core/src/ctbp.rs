//! Continuous-time branching process machinery: the Malthusian parameter
//! `lambda_n` solving `mu_hat_n(lambda_n) = 1`, the exponentially discounted
//! future-offspring functional, the two-source freezing construction, frozen
//! cluster statistics, and lucky-vertex detection.
//!
//! All times are handled in units of `f_n(1)`. At large disorder `f_n(1)`
//! collapses toward the bottom of the f64 range while ratios `f_n(x)/f_n(1)`
//! stay representable, so the dimensionless form is the only numerically
//! viable one. The dimensionless Malthusian unknown is `c = lambda_n f_n(1)`.

use crate::exploration::{Exploration, MinimalRule, Start};
use crate::pwit::{PwitSample, VertexId};
use crate::quad::{self, QuadError};
use crate::weights::{WeightError, WeightFamily};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CtbpError {
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("Malthusian bisection failed: residual {residual} after {evals} integrand evals")]
    MalthusianNoConvergence { residual: f64, evals: u64 },
    #[error("step cap {cap} exhausted before freezing (discounted value {value}, target {target}, {volume} vertices explored)")]
    CapExhausted {
        cap: u64,
        value: f64,
        target: f64,
        volume: usize,
    },
}

/// Exponential cutoff: integrands below exp(-TAIL) of their peak are dropped.
const TAIL: f64 = 45.0;

/// The Malthusian parameter of the `f_n`-driven branching process.
#[derive(Debug, Clone)]
pub struct Malthusian {
    pub family: WeightFamily,
    pub n: u64,
    /// Dimensionless product `lambda_n * f_n(1)`.
    pub c: f64,
    /// `lambda_n` itself; may overflow to inf at extreme disorder, in which
    /// case `ln_lambda` remains meaningful.
    pub lambda: f64,
    pub ln_lambda: f64,
    /// |mu_hat(lambda_n) - 1| at the solution.
    pub residual: f64,
    pub integrand_evals: u64,
}

impl Malthusian {
    /// `f_n(x) / f_n(1)`.
    fn f_hat(&self, ln_f1: f64, x: f64) -> f64 {
        (self.family.ln_f_n(self.n, x).expect("x > 0") - ln_f1).exp()
    }
}

/// `mu_hat(lambda) = int_0^inf exp(-lambda f_n(x)) dx` for `lambda = c/f_n(1)`,
/// evaluated in the dimensionless form.
fn mu_hat_dimensionless(
    family: &WeightFamily,
    n: u64,
    c: f64,
) -> Result<(f64, u64), CtbpError> {
    let ln_f1 = family.ln_f_n(n, 1.0)?;
    let upper = family.f_n_inverse_ratio(n, TAIL / c)?;
    let f = |x: f64| {
        if x <= 0.0 {
            return 1.0;
        }
        (-c * (family.ln_f_n(n, x).expect("x > 0") - ln_f1).exp()).exp()
    };
    let r = quad::integrate(f, 0.0, upper, 1e-10)?;
    Ok((r.value, r.evals))
}

/// Solve `mu_hat_n(lambda_n) = 1` for `lambda_n` by bisection in
/// `c = lambda_n f_n(1)`. `mu_hat` is strictly decreasing in `c`.
pub fn malthusian(family: &WeightFamily, n: u64) -> Result<Malthusian, CtbpError> {
    family.validate()?;
    let mut evals = 0u64;
    let mut eval = |c: f64| -> Result<f64, CtbpError> {
        let (v, e) = mu_hat_dimensionless(family, n, c)?;
        evals += e;
        Ok(v)
    };
    // Bracket the root; e^-gamma is the large-disorder limit of c.
    let mut lo = 0.561_459_483_566_885;
    let mut hi = lo;
    if eval(lo)? > 1.0 {
        for _ in 0..80 {
            hi = lo * 2.0;
            if eval(hi)? <= 1.0 {
                break;
            }
            lo = hi;
        }
    } else {
        for _ in 0..80 {
            lo = hi / 2.0;
            if eval(lo)? >= 1.0 {
                break;
            }
            hi = lo;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / hi < 1e-13 {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let residual = (eval(c)? - 1.0).abs();
    if residual > 1e-8 {
        return Err(CtbpError::MalthusianNoConvergence { residual, evals });
    }
    let ln_f1 = family.ln_f_n(n, 1.0)?;
    let ln_lambda = c.ln() - ln_f1;
    Ok(Malthusian {
        family: *family,
        n,
        c,
        lambda: ln_lambda.exp(),
        ln_lambda,
        residual,
        integrand_evals: evals,
    })
}

/// Expected discounted future offspring of one vertex of scaled age `a >= 0`
/// (age in units of `f_n(1)`):
/// `int_{f_n^{-1}(a f_n(1))}^inf exp(-lambda_n (f_n(x) - a f_n(1))) dx`.
pub fn vertex_discount(mal: &Malthusian, age_scaled: f64) -> Result<f64, CtbpError> {
    debug_assert!(age_scaled >= 0.0);
    let family = &mal.family;
    let n = mal.n;
    let ln_f1 = family.ln_f_n(n, 1.0)?;
    let z = if age_scaled == 0.0 {
        0.0
    } else {
        family.f_n_inverse_ratio(n, age_scaled)?
    };
    let upper = family.f_n_inverse_ratio(n, age_scaled + TAIL / mal.c)?;
    let f = |x: f64| {
        if x <= 0.0 {
            return 1.0;
        }
        let fh = mal.f_hat(ln_f1, x);
        (-mal.c * (fh - age_scaled)).exp().min(1.0)
    };
    let r = quad::integrate(f, z, upper, 1e-9)?;
    Ok(r.value)
}

/// Discounted-offspring functional: the sum of `vertex_discount` over an
/// explored set with the given scaled ages. Direct quadrature per vertex;
/// the freezing loop uses the tabulated fast path instead.
pub fn discounted_offspring(mal: &Malthusian, ages_scaled: &[f64]) -> Result<f64, CtbpError> {
    let mut total = 0.0;
    for &a in ages_scaled {
        total += vertex_discount(mal, a)?;
    }
    Ok(total)
}

/// Tabulated `vertex_discount` as a function of `z = f_n^{-1}(age)`, split
/// into a smooth zone below the boundary layer, a finely resolved layer
/// around z = 1, and a log-log tail. Validated against direct quadrature in
/// tests; ages beyond the table fall back to quadrature.
pub struct DiscountTable {
    zone_a: Vec<f64>,
    a_step: f64,
    a_hi: f64,
    zone_b: Vec<f64>,
    b_lo: f64,
    b_step: f64,
    b_hi: f64,
    /// (ln z, ln phi) pairs on a uniform ln-z grid.
    zone_c: Vec<f64>,
    c_lo_ln: f64,
    c_step: f64,
    c_hi: f64,
    /// Whether the tabulated function is non-increasing in age; enables the
    /// jump-only crossing argument in the freezing loop.
    pub non_increasing: bool,
    ln_f1: f64,
}

impl DiscountTable {
    pub fn build(mal: &Malthusian) -> Result<Self, CtbpError> {
        let s = mal.family.s_n(mal.n).max(1.0);
        let w = (8.0 / s).min(0.5);
        let a_hi = 1.0 - w;
        let b_hi = 1.0 + w;
        let c_hi = 50.0f64;
        let na = 512;
        let nb = 1024;
        let a_step = a_hi / na as f64;
        let mut zone_a = Vec::with_capacity(na + 1);
        for i in 0..=na {
            zone_a.push(phi_of_z(mal, i as f64 * a_step)?);
        }
        let b_step = (b_hi - a_hi) / nb as f64;
        let mut zone_b = Vec::with_capacity(nb + 1);
        for i in 0..=nb {
            zone_b.push(phi_of_z(mal, a_hi + i as f64 * b_step)?);
        }
        let c_lo_ln = b_hi.ln();
        let c_step = 1.0 / 512.0;
        let nc = ((c_hi.ln() - c_lo_ln) / c_step).ceil() as usize;
        let mut zone_c = Vec::with_capacity(nc + 1);
        for i in 0..=nc {
            let z = (c_lo_ln + i as f64 * c_step).exp();
            zone_c.push(phi_of_z(mal, z)?.max(1e-300).ln());
        }
        let mut non_increasing = true;
        let mut prev = f64::INFINITY;
        for &v in zone_a.iter().chain(zone_b.iter()) {
            if v > prev + 1e-9 {
                non_increasing = false;
            }
            prev = v;
        }
        for &lv in &zone_c {
            if lv.exp() > prev + 1e-9 {
                non_increasing = false;
            }
            prev = lv.exp();
        }
        Ok(DiscountTable {
            zone_a,
            a_step,
            a_hi,
            zone_b,
            b_lo: a_hi,
            b_step,
            b_hi,
            zone_c,
            c_lo_ln,
            c_step,
            c_hi,
            non_increasing,
            ln_f1: mal.family.ln_f_n(mal.n, 1.0)?,
        })
    }

    fn interp(grid: &[f64], lo: f64, step: f64, x: f64) -> f64 {
        let t = (x - lo) / step;
        let i = (t.floor() as usize).min(grid.len() - 2);
        let frac = (t - i as f64).clamp(0.0, 1.0);
        grid[i] + frac * (grid[i + 1] - grid[i])
    }

    /// phi at `z = f_n^{-1}(age)`; `None` when z exceeds the table.
    fn eval_z(&self, z: f64) -> Option<f64> {
        if z <= 0.0 {
            return Some(self.zone_a[0]);
        }
        if z <= self.a_hi {
            return Some(Self::interp(&self.zone_a, 0.0, self.a_step, z));
        }
        if z <= self.b_hi {
            return Some(Self::interp(&self.zone_b, self.b_lo, self.b_step, z));
        }
        if z <= self.c_hi {
            return Some(Self::interp(&self.zone_c, self.c_lo_ln, self.c_step, z.ln()).exp());
        }
        None
    }

    /// phi for a scaled age, falling back to quadrature past the table.
    pub fn eval_age(&self, mal: &Malthusian, age_scaled: f64) -> Result<f64, CtbpError> {
        if age_scaled <= 0.0 {
            return Ok(self.zone_a[0]);
        }
        let z = mal
            .family
            .f_n_inverse_ln(mal.n, age_scaled.ln() + self.ln_f1)?;
        match self.eval_z(z) {
            Some(v) => Ok(v),
            None => vertex_discount(mal, age_scaled),
        }
    }
}

fn phi_of_z(mal: &Malthusian, z: f64) -> Result<f64, CtbpError> {
    let ln_f1 = mal.family.ln_f_n(mal.n, 1.0)?;
    let age = if z == 0.0 { 0.0 } else { mal.f_hat(ln_f1, z) };
    let upper = mal.family.f_n_inverse_ratio(mal.n, age + TAIL / mal.c)?;
    let f = |x: f64| {
        if x <= z {
            return 1.0;
        }
        (-mal.c * (mal.f_hat(ln_f1, x) - age)).exp().min(1.0)
    };
    Ok(quad::integrate(f, z, upper, 1e-9)?.value)
}

/// On-off clock of one side of the frozen two-source process:
/// `R_j(t) = (t ^ T_fr) + ((t - T_unfr) v 0)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OnOffClock {
    pub t_fr: f64,
    pub t_unfr: f64,
}

impl OnOffClock {
    pub fn run_time(&self, t: f64) -> f64 {
        t.min(self.t_fr) + (t - self.t_unfr).max(0.0)
    }

    /// Left-continuous inverse: the wall time at which the side's internal
    /// clock reaches `y`.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= self.t_fr {
            y
        } else {
            self.t_unfr - self.t_fr + y
        }
    }
}

/// Freezing outcome for one source.
#[derive(Debug, Clone)]
pub struct SideFreeze {
    /// Freezing time in units of `f_n(1)`.
    pub t_fr: f64,
    /// Value of the discounted-offspring functional at `t_fr`.
    pub crossing_value: f64,
    /// `f_n^{-1}(T_fr)`.
    pub fn_inv_t_fr: f64,
    /// True when the threshold was crossed between births (continuous
    /// crossing refined by bisection) rather than by a birth jump.
    pub interior_crossing: bool,
    pub volume: usize,
    /// Max generation |v| in the frozen side.
    pub diameter: u32,
    pub births: u64,
    /// Explored vertices at freezing with their scaled birth times.
    pub cluster: Vec<(VertexId, f64)>,
}

#[derive(Debug, Clone)]
pub struct FreezeRecord {
    pub s_n: f64,
    pub sides: [SideFreeze; 2],
    pub t_unfr: f64,
    pub volume: usize,
    pub diameter: u32,
    pub clocks: [OnOffClock; 2],
}

#[derive(Debug, Clone, Copy)]
pub struct FreezeCaps {
    pub max_steps: u64,
}

impl Default for FreezeCaps {
    fn default() -> Self {
        FreezeCaps { max_steps: 400_000 }
    }
}

/// Evolve one source's FPP exploration until its discounted-offspring
/// functional first reaches `s_n`.
pub fn freeze_side(
    sample: &mut PwitSample,
    mal: &Malthusian,
    table: &DiscountTable,
    root: u8,
    caps: FreezeCaps,
) -> Result<SideFreeze, CtbpError> {
    let s_n = mal.family.s_n(mal.n);
    let rule = MinimalRule::FppTime {
        family: mal.family,
        n: mal.n,
        normalized: true,
    };
    let mut ex = Exploration::new(sample, rule, Start::Root(root));
    let phi_sum = |ex: &Exploration, t: f64, mal: &Malthusian| -> Result<f64, CtbpError> {
        let mut total = 0.0;
        for v in ex.explored() {
            total += table.eval_age(mal, t - v.time)?;
        }
        Ok(total)
    };

    // Upper bound on the functional just after the latest birth. With a
    // non-increasing per-vertex discount the functional only grows at birth
    // jumps (each of size 1), so the bound advances by 1 per birth and the
    // expensive exact sum is needed only when the bound can reach s_n.
    let mut bound = table.eval_age(mal, 0.0)?;
    let exact_mode = !table.non_increasing;
    let mut t_prev = 0.0f64;
    if bound >= s_n {
        // Degenerate threshold: frozen at time zero.
        return Ok(SideFreeze {
            t_fr: 0.0,
            crossing_value: bound,
            fn_inv_t_fr: 0.0,
            interior_crossing: false,
            volume: 1,
            diameter: 0,
            births: 0,
            cluster: vec![(VertexId::root(root), 0.0)],
        });
    }
    loop {
        if ex.steps() >= caps.max_steps {
            return Err(CtbpError::CapExhausted {
                cap: caps.max_steps,
                value: bound,
                target: s_n,
                volume: ex.explored().len(),
            });
        }
        let t_next = ex.peek_key();
        let must_check = exact_mode || bound + 1.0 >= s_n;
        if must_check {
            let before = phi_sum(&ex, t_next, mal)?;
            if exact_mode && before >= s_n {
                // Continuous crossing inside (t_prev, t_next): bisect. The
                // functional is continuous between births.
                let mut lo = t_prev;
                let mut hi = t_next;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if phi_sum(&ex, mid, mal)? >= s_n {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-12 * hi.max(1.0) {
                        break;
                    }
                }
                let t_fr = hi;
                let cluster: Vec<(VertexId, f64)> = ex
                    .explored()
                    .iter()
                    .map(|v| (v.id.clone(), v.time))
                    .collect();
                let diameter = ex.explored().iter().map(|v| v.depth).max().unwrap_or(0);
                return Ok(SideFreeze {
                    t_fr,
                    crossing_value: s_n,
                    fn_inv_t_fr: fn_inv_scaled(mal, t_fr)?,
                    interior_crossing: true,
                    volume: cluster.len(),
                    diameter,
                    births: ex.steps(),
                    cluster,
                });
            }
            if before + 1.0 >= s_n {
                // The birth jump crosses the threshold.
                ex.step();
                let t_fr = t_next;
                let cluster: Vec<(VertexId, f64)> = ex
                    .explored()
                    .iter()
                    .map(|v| (v.id.clone(), v.time))
                    .collect();
                let diameter = ex.explored().iter().map(|v| v.depth).max().unwrap_or(0);
                return Ok(SideFreeze {
                    t_fr,
                    crossing_value: before + 1.0,
                    fn_inv_t_fr: fn_inv_scaled(mal, t_fr)?,
                    interior_crossing: false,
                    volume: cluster.len(),
                    diameter,
                    births: ex.steps(),
                    cluster,
                });
            }
            ex.step();
            bound = before + 1.0;
        } else {
            ex.step();
            bound += 1.0;
        }
        t_prev = t_next;
    }
}

fn fn_inv_scaled(mal: &Malthusian, t_scaled: f64) -> Result<f64, CtbpError> {
    if t_scaled <= 0.0 {
        return Ok(0.0);
    }
    let ln_f1 = mal.family.ln_f_n(mal.n, 1.0)?;
    Ok(mal.family.f_n_inverse_ln(mal.n, t_scaled.ln() + ln_f1)?)
}

/// Run the two-source freezing construction on one PWIT pair.
pub fn run_with_freezing(
    sample: &mut PwitSample,
    mal: &Malthusian,
    table: &DiscountTable,
    caps: FreezeCaps,
) -> Result<FreezeRecord, CtbpError> {
    let side1 = freeze_side(sample, mal, table, 1, caps)?;
    let side2 = freeze_side(sample, mal, table, 2, caps)?;
    let t_unfr = side1.t_fr.max(side2.t_fr);
    let volume = side1.volume + side2.volume;
    let diameter = side1.diameter.max(side2.diameter);
    let clocks = [
        OnOffClock {
            t_fr: side1.t_fr,
            t_unfr,
        },
        OnOffClock {
            t_fr: side2.t_fr,
            t_unfr,
        },
    ];
    Ok(FreezeRecord {
        s_n: mal.family.s_n(mal.n),
        sides: [side1, side2],
        t_unfr,
        volume,
        diameter,
        clocks,
    })
}

/// Scaling summary across an `s_n` grid: medians and 0.9-quantiles of
/// volume/s_n^2 and diameter/s_n.
#[derive(Debug, Clone, Serialize)]
pub struct FrozenScalingRow {
    pub s_n: f64,
    pub replicas: usize,
    pub vol_over_s2_med: f64,
    pub vol_over_s2_q90: f64,
    pub diam_over_s_med: f64,
    pub diam_over_s_q90: f64,
}

pub fn frozen_stats(groups: &[(f64, Vec<FreezeRecord>)]) -> Vec<FrozenScalingRow> {
    groups
        .iter()
        .map(|(s_n, records)| {
            let vols: Vec<f64> = records
                .iter()
                .map(|r| r.volume as f64 / (s_n * s_n))
                .collect();
            let diams: Vec<f64> = records.iter().map(|r| r.diameter as f64 / s_n).collect();
            FrozenScalingRow {
                s_n: *s_n,
                replicas: records.len(),
                vol_over_s2_med: crate::stats::quantile(&vols, 0.5).unwrap_or(f64::NAN),
                vol_over_s2_q90: crate::stats::quantile(&vols, 0.9).unwrap_or(f64::NAN),
                diam_over_s_med: crate::stats::quantile(&diams, 0.5).unwrap_or(f64::NAN),
                diam_over_s_q90: crate::stats::quantile(&diams, 0.9).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Count descendants of `v` born within one `f_n(1)` of its own birth,
/// stopping early at `cap`.
pub fn descendants_within_unit_age(
    sample: &mut PwitSample,
    family: &WeightFamily,
    n: u64,
    v: &VertexId,
    cap: u64,
) -> u64 {
    let rule = MinimalRule::FppTime {
        family: *family,
        n,
        normalized: true,
    };
    let mut ex = Exploration::new(sample, rule, Start::Subtree(v.clone()));
    let mut count = 0u64;
    while count < cap && ex.peek_key() <= 1.0 {
        ex.step();
        count += 1;
    }
    count
}

/// Whether `v` has at least `r * s_n^2` descendants by age `f_n(1)`.
pub fn is_lucky(
    sample: &mut PwitSample,
    family: &WeightFamily,
    n: u64,
    v: &VertexId,
    r: f64,
) -> bool {
    let s = family.s_n(n);
    let threshold = (r * s * s).ceil().max(1.0) as u64;
    descendants_within_unit_age(sample, family, n, v, threshold) >= threshold
}

/// Explore `horizon` births from `root` and report which explored vertices
/// are `r`-lucky, with their birth times (units of `f_n(1)`).
pub fn detect_lucky(
    sample: &mut PwitSample,
    family: &WeightFamily,
    n: u64,
    root: u8,
    r: f64,
    horizon: u64,
) -> Vec<(VertexId, f64)> {
    let rule = MinimalRule::FppTime {
        family: *family,
        n,
        normalized: true,
    };
    let vertices: Vec<(VertexId, f64)> = {
        let mut ex = Exploration::new(sample, rule, Start::Root(root));
        ex.run(horizon);
        ex.explored()
            .iter()
            .map(|v| (v.id.clone(), v.time))
            .collect()
    };
    vertices
        .into_iter()
        .filter(|(id, _)| is_lucky(sample, family, n, id, r))
        .collect()
}
