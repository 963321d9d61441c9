//! Lazy realization of one or two Poisson-weighted infinite trees.
//!
//! Vertices are Ulam–Harris addresses under a root tag in {1, 2}. Each
//! vertex's ordered child weights are the points of a unit-rate Poisson
//! process (cumulative sums of unit exponentials) and each non-root vertex
//! carries a uniform mark on [n]; root j is marked j. Every query is answered
//! from a per-vertex keyed stream, so the realization is a deterministic
//! function of the seed regardless of query order, and two explorations that
//! walk the same sample see the same tree.

use crate::rng::{self, purpose, RngExt};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt;

/// Ulam–Harris address: root tag plus a sequence of 1-based child indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    root: u8,
    path: Vec<u32>,
}

impl VertexId {
    pub fn root(j: u8) -> Self {
        assert!(j == 1 || j == 2, "root tag must be 1 or 2");
        VertexId { root: j, path: Vec::new() }
    }

    pub fn child(&self, k: u32) -> Self {
        debug_assert!(k >= 1, "child indices are 1-based");
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(k);
        VertexId { root: self.root, path }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.path.is_empty() {
            return None;
        }
        Some(VertexId {
            root: self.root,
            path: self.path[..self.path.len() - 1].to_vec(),
        })
    }

    pub fn root_tag(&self) -> u8 {
        self.root
    }

    pub fn path(&self) -> &[u32] {
        &self.path
    }

    /// Generation |v|: distance from the root.
    pub fn depth(&self) -> u32 {
        self.path.len() as u32
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    fn key_parts(&self, seed: u64, tag: u64) -> Vec<u64> {
        let mut parts = Vec::with_capacity(3 + self.path.len());
        parts.push(seed);
        parts.push(tag);
        parts.push(self.root as u64);
        parts.extend(self.path.iter().map(|&k| k as u64));
        parts
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)?;
        for k in &self.path {
            write!(f, ".{k}")?;
        }
        Ok(())
    }
}

/// Child weights are extended in blocks to amortize stream setup.
const CHILD_BLOCK: usize = 16;

struct ChildMemo {
    /// Strictly increasing cumulative sums of unit exponentials.
    weights: Vec<f64>,
    rng: ChaCha8Rng,
}

/// One seed-deterministic realization of the pair of PWITs with marks on [n].
pub struct PwitSample {
    seed: u64,
    n: u64,
    children: HashMap<VertexId, ChildMemo>,
    marks: HashMap<VertexId, u32>,
}

impl PwitSample {
    pub fn new(seed: u64, n: u64) -> Self {
        assert!(n >= 2, "mark range must have at least two values");
        PwitSample {
            seed,
            n,
            children: HashMap::new(),
            marks: HashMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn ensure_children(&mut self, v: &VertexId, k: usize) -> &ChildMemo {
        let memo = self.children.entry(v.clone()).or_insert_with(|| ChildMemo {
            weights: Vec::new(),
            rng: rng::stream(&v.key_parts(self.seed, purpose::CHILD_WEIGHTS)),
        });
        while memo.weights.len() < k {
            let mut last = memo.weights.last().copied().unwrap_or(0.0);
            for _ in 0..CHILD_BLOCK {
                last += memo.rng.exp1();
                memo.weights.push(last);
            }
        }
        memo
    }

    /// The first k ordered child weights `X_{v1} < ... < X_{vk}`.
    pub fn child_weights(&mut self, v: &VertexId, k: usize) -> &[f64] {
        assert!(k >= 1);
        let memo = self.ensure_children(v, k);
        &memo.weights[..k]
    }

    /// Child weight `X_{v k}` for 1-based rank k.
    pub fn child_weight(&mut self, v: &VertexId, k: u32) -> f64 {
        let memo = self.ensure_children(v, k as usize);
        memo.weights[(k - 1) as usize]
    }

    /// All child weights at most `x`, in increasing order. The count is
    /// Poisson(x) distributed.
    pub fn children_below(&mut self, v: &VertexId, x: f64) -> Vec<f64> {
        assert!(x > 0.0);
        let mut k = CHILD_BLOCK;
        loop {
            let memo = self.ensure_children(v, k);
            if let Some(&last) = memo.weights.last() {
                if last > x {
                    let cut = memo.weights.partition_point(|&w| w <= x);
                    return memo.weights[..cut].to_vec();
                }
            }
            k += CHILD_BLOCK;
        }
    }

    /// The mark `M_v`: root j carries j, every other vertex an independent
    /// uniform on {1, ..., n}. Memoized.
    pub fn mark(&mut self, v: &VertexId) -> u32 {
        if v.is_root() {
            return v.root_tag() as u32;
        }
        if let Some(&m) = self.marks.get(v) {
            return m;
        }
        // Single uniform per vertex: a keyed splitmix chain with rejection is
        // exact and much cheaper than standing up a full stream.
        let mut h = rng::fold_key(&v.key_parts(self.seed, purpose::MARK));
        let n = self.n;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        let m = loop {
            h = rng::splitmix64(h);
            if h <= zone {
                break (h % n + 1) as u32;
            }
        };
        self.marks.insert(v.clone(), m);
        m
    }
}

/// One explored vertex in serializable form: address path, edge weight to the
/// parent, and mark.
#[derive(Debug, Clone, Serialize)]
pub struct SubtreeEntry {
    pub root: u8,
    pub path: Vec<u32>,
    pub weight: f64,
    pub mark: u32,
}

pub fn subtree_to_json(entries: &[SubtreeEntry]) -> String {
    serde_json::to_string(entries).expect("subtree entries serialize")
}
