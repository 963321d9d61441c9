//! First passage percolation on the complete graph: single-source
//! smallest-weight trees, the optimal 1-2 path, an exhaustive oracle, and a
//! disorder-stable variant that works directly in `f_n^{-1}` coordinates.

use crate::rng::{self, purpose};
use crate::weights::WeightFamily;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FppError {
    #[error("brute force supports n <= 8, got {0}")]
    TooLarge(u64),
    #[error("n must be at least 2, got {0}")]
    TooSmall(u64),
}

/// Supplies the `n(n-1)/2` edge weights of `K_n`.
///
/// Iid mode generates each weight on demand from a stream keyed by the
/// unordered pair; nothing is stored and a pair queried twice returns the
/// same value. Coupled mode carries a dense assignment produced by the
/// PWIT coupling.
pub enum EdgeWeightSource {
    Iid {
        family: WeightFamily,
        n: u64,
        seed: u64,
    },
    Coupled {
        n: u64,
        /// Upper-triangular weights: pair (i, j), i < j, 1-based, at
        /// `(j-2)(j-1)/2 + (i-1)`.
        weights: Vec<f64>,
    },
}

/// Index of the unordered pair {i, j} (1-based, i != j) in triangular layout.
pub fn pair_index(i: u32, j: u32) -> usize {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    ((hi as usize - 2) * (hi as usize - 1)) / 2 + (lo as usize - 1)
}

impl EdgeWeightSource {
    pub fn n(&self) -> u64 {
        match self {
            EdgeWeightSource::Iid { n, .. } => *n,
            EdgeWeightSource::Coupled { n, .. } => *n,
        }
    }

    /// The underlying unit exponential for pair {i, j} in Iid mode.
    fn iid_exponential(seed: u64, i: u32, j: u32) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let bits = rng::keyed_u64(&[seed, purpose::EDGE_WEIGHT, lo as u64, hi as u64]);
        -rng::unit_open(bits).ln()
    }

    pub fn weight(&self, i: u32, j: u32) -> f64 {
        debug_assert!(i != j);
        match self {
            EdgeWeightSource::Iid { family, seed, .. } => {
                family.g(Self::iid_exponential(*seed, i, j))
            }
            EdgeWeightSource::Coupled { weights, .. } => weights[pair_index(i, j)],
        }
    }
}

/// One adjoined vertex of a smallest-weight tree, in growth order.
#[derive(Debug, Clone)]
pub struct GrowthStep {
    pub step: u32,
    pub vertex: u32,
    pub from: u32,
    pub weight: f64,
    /// Arrival time tau_k = d(src, vertex).
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct FppResult {
    pub n: u64,
    /// Total weight of the optimal 1-2 path.
    pub w: f64,
    /// Edge count of that path.
    pub hops: u32,
    /// Vertex list from 1 to 2.
    pub path: Vec<u32>,
    /// Smallest-weight tree growth from vertex 1 up to the settling of 2.
    pub growth: Vec<GrowthStep>,
    /// Exact tentative-distance ties observed (broken by vertex index).
    pub tie_events: u64,
}

#[derive(Clone, Copy)]
struct HeapEntry {
    d: f64,
    /// Weight of the edge that produced this tentative distance; exact
    /// distance ties settle by smaller edge weight, mirroring the boundary
    /// tie-break of the PWIT exploration so the coupling stays exact.
    w: f64,
    v: u32,
}
impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap: smaller distance, then smaller edge weight, then index.
        other
            .d
            .total_cmp(&self.d)
            .then_with(|| other.w.total_cmp(&self.w))
            .then_with(|| other.v.cmp(&self.v))
    }
}

struct Dijkstra {
    dist: Vec<f64>,
    pred: Vec<u32>,
    order: Vec<u32>,
    ties: u64,
}

/// Best-first search over the implicit dense graph. `combine` folds an edge
/// weight onto a path value (ordinary addition for FPP; an l^s sum for the
/// disorder-stable variant). Stops once `stop_at` is settled (0: never) or
/// `max_settled` vertices are settled.
fn dijkstra<W, C>(n: u64, weight_of: W, combine: C, src: u32, stop_at: u32, max_settled: usize) -> Dijkstra
where
    W: Fn(u32, u32) -> f64,
    C: Fn(f64, f64) -> f64,
{
    let nn = n as usize;
    let mut dist = vec![f64::INFINITY; nn + 1];
    let mut pred = vec![0u32; nn + 1];
    let mut pred_w = vec![f64::INFINITY; nn + 1];
    let mut settled = vec![false; nn + 1];
    let mut order = Vec::new();
    let mut ties = 0u64;
    let mut heap = BinaryHeap::new();
    dist[src as usize] = 0.0;
    heap.push(HeapEntry {
        d: 0.0,
        w: 0.0,
        v: src,
    });
    while let Some(HeapEntry { d, w: _, v }) = heap.pop() {
        if settled[v as usize] || d > dist[v as usize] {
            continue;
        }
        settled[v as usize] = true;
        if v != src {
            order.push(v);
        }
        if v == stop_at || order.len() >= max_settled {
            break;
        }
        for w in 1..=n as u32 {
            if settled[w as usize] || w == v {
                continue;
            }
            let ew = weight_of(v, w);
            let nd = combine(d, ew);
            match nd.total_cmp(&dist[w as usize]) {
                std::cmp::Ordering::Less => {
                    dist[w as usize] = nd;
                    pred[w as usize] = v;
                    pred_w[w as usize] = ew;
                    heap.push(HeapEntry { d: nd, w: ew, v: w });
                }
                std::cmp::Ordering::Equal => {
                    ties += 1;
                    if ew < pred_w[w as usize] {
                        pred[w as usize] = v;
                        pred_w[w as usize] = ew;
                        heap.push(HeapEntry { d: nd, w: ew, v: w });
                    }
                }
                std::cmp::Ordering::Greater => {}
            }
        }
    }
    Dijkstra {
        dist,
        pred,
        order,
        ties,
    }
}

fn extract_path(pred: &[u32], src: u32, dst: u32) -> Vec<u32> {
    let mut path = vec![dst];
    let mut v = dst;
    while v != src {
        v = pred[v as usize];
        path.push(v);
    }
    path.reverse();
    path
}

fn growth_record<W: Fn(u32, u32) -> f64>(d: &Dijkstra, weight_of: W) -> Vec<GrowthStep> {
    d.order
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let from = d.pred[v as usize];
            GrowthStep {
                step: (k + 1) as u32,
                vertex: v,
                from,
                weight: weight_of(from, v),
                time: d.dist[v as usize],
            }
        })
        .collect()
}

/// Exact optimal path between vertices 1 and 2, with the smallest-weight-tree
/// growth record from vertex 1 up to the moment 2 is settled.
pub fn shortest_weight(source: &EdgeWeightSource) -> Result<FppResult, FppError> {
    let n = source.n();
    if n < 2 {
        return Err(FppError::TooSmall(n));
    }
    let weight_of = |a: u32, b: u32| source.weight(a, b);
    let d = dijkstra(n, weight_of, |a, b| a + b, 1, 2, usize::MAX);
    let path = extract_path(&d.pred, 1, 2);
    Ok(FppResult {
        n,
        w: d.dist[2],
        hops: (path.len() - 1) as u32,
        path,
        growth: growth_record(&d, weight_of),
        tie_events: d.ties,
    })
}

/// First `m` adjoined vertices of the smallest-weight tree from `src`.
pub fn swt_prefix(
    source: &EdgeWeightSource,
    src: u32,
    m: usize,
) -> Result<Vec<GrowthStep>, FppError> {
    let n = source.n();
    if n < 2 {
        return Err(FppError::TooSmall(n));
    }
    assert!(m <= (n - 1) as usize, "prefix longer than the graph");
    let weight_of = |a: u32, b: u32| source.weight(a, b);
    let d = dijkstra(n, weight_of, |a, b| a + b, src, 0, m);
    Ok(growth_record(&d, weight_of))
}

/// Exhaustive minimum over all simple 1-2 paths. Oracle for `shortest_weight`.
pub fn brute_force(source: &EdgeWeightSource) -> Result<(f64, u32, Vec<u32>), FppError> {
    let n = source.n();
    if n < 2 {
        return Err(FppError::TooSmall(n));
    }
    if n > 8 {
        return Err(FppError::TooLarge(n));
    }
    let mut best_w = f64::INFINITY;
    let mut best_path: Vec<u32> = Vec::new();
    let mut stack_path = vec![1u32];
    let mut visited = vec![false; n as usize + 1];
    visited[1] = true;
    fn dfs(
        source: &EdgeWeightSource,
        n: u32,
        path: &mut Vec<u32>,
        visited: &mut Vec<bool>,
        acc: f64,
        best_w: &mut f64,
        best_path: &mut Vec<u32>,
    ) {
        let here = *path.last().unwrap();
        if here == 2 {
            if acc < *best_w {
                *best_w = acc;
                *best_path = path.clone();
            }
            return;
        }
        for next in 2..=n {
            if visited[next as usize] {
                continue;
            }
            visited[next as usize] = true;
            path.push(next);
            dfs(
                source,
                n,
                path,
                visited,
                acc + source.weight(here, next),
                best_w,
                best_path,
            );
            path.pop();
            visited[next as usize] = false;
        }
    }
    dfs(
        source,
        n as u32,
        &mut stack_path,
        &mut visited,
        0.0,
        &mut best_w,
        &mut best_path,
    );
    Ok((best_w, (best_path.len() - 1) as u32, best_path))
}

/// Result of the disorder-stable 1-2 query for `Y = E^{s_n}` weights.
#[derive(Debug, Clone)]
pub struct DisorderResult {
    /// `f_n^{-1}(W_n)`, computed without ever forming W_n itself.
    pub fn_inv_w: f64,
    /// ln W_n (W_n itself can be far outside f64 range).
    pub ln_w: f64,
    pub hops: u32,
    pub tie_events: u64,
}

/// `(a^s + b^s)^{1/s}` evaluated without overflow for a, b >= 0.
pub fn lp_sum(a: f64, b: f64, s: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == 0.0 {
        return hi;
    }
    let r = (s * (lo / hi).ln()).exp();
    hi * ((r.ln_1p()) / s).exp()
}

/// Optimal 1-2 weight for the `E^{s}` family, run in `f_n^{-1}` coordinates:
/// every path value is stored as `n * W^{1/s}`-style l^s accumulations of the
/// PWIT-scale weights `x_e = n E_e`, so no intermediate quantity leaves the
/// representable range even when `f_n(1) = n^{-s}` underflows.
///
/// The path and hop structure coincide with `shortest_weight` on the same
/// weights because `y -> f_n^{-1}(y)` is strictly increasing.
///
/// The relaxation loop is the hot path of the weight-scaling experiment
/// (n(n-1)/2 implicit edges per replica); a candidate edge with
/// `x >= dist[w]` can never improve `w`, and that test can be done in
/// uniform space (`u <= exp(-dist[w]/n)`) without evaluating any logarithm.
pub fn shortest_weight_disorder(n: u64, s: f64, seed: u64) -> DisorderResult {
    let nf = n as f64;
    let nn = n as usize;
    let mut dist = vec![f64::INFINITY; nn + 1];
    // exp(-dist[w]/n): skip threshold in uniform space; -1 marks "untouched".
    let mut thr = vec![-1.0f64; nn + 1];
    let mut pred = vec![0u32; nn + 1];
    let mut settled = vec![false; nn + 1];
    let mut ties = 0u64;
    let mut hi_heap = BinaryHeap::new();
    dist[1] = 0.0;
    hi_heap.push(HeapEntry { d: 0.0, w: 0.0, v: 1 });
    // Below this ratio the small term of the l^s sum is beyond f64 resolution.
    let ratio_floor = (-40.0 / s).exp();
    while let Some(HeapEntry { d, w: _, v }) = hi_heap.pop() {
        if settled[v as usize] || d > dist[v as usize] {
            continue;
        }
        settled[v as usize] = true;
        if v == 2 {
            break;
        }
        for w in 1..=n as u32 {
            if settled[w as usize] || w == v {
                continue;
            }
            let u = rng::unit_open(rng::keyed_u64(&[
                seed,
                purpose::EDGE_WEIGHT,
                v.min(w) as u64,
                v.max(w) as u64,
            ]));
            if u <= thr[w as usize] {
                continue;
            }
            let x = -nf * u.ln();
            let nd = if d <= x * ratio_floor {
                x
            } else if x <= d * ratio_floor {
                d
            } else {
                lp_sum(d, x, s)
            };
            match nd.total_cmp(&dist[w as usize]) {
                std::cmp::Ordering::Less => {
                    dist[w as usize] = nd;
                    thr[w as usize] = (-nd / nf).exp();
                    pred[w as usize] = v;
                    hi_heap.push(HeapEntry { d: nd, w: x, v: w });
                }
                std::cmp::Ordering::Equal => ties += 1,
                std::cmp::Ordering::Greater => {}
            }
        }
    }
    let path = extract_path(&pred, 1, 2);
    let fn_inv_w = dist[2];
    DisorderResult {
        fn_inv_w,
        ln_w: s * (fn_inv_w.ln() - nf.ln()),
        hops: (path.len() - 1) as u32,
        tie_events: ties,
    }
}
