//! Minimal-rule exploration processes on one or two PWITs: generic stepping,
//! the first-passage and invasion rules, thinning, and the induced subgraph
//! of `K_n` under marks.
//!
//! The frontier is lazy but exact: for every explored vertex only its next
//! unexplored child sits in the priority queue. Children are weight-ordered
//! and every rule key is increasing in the child weight, so the queue minimum
//! is always the true minimum over the full infinite boundary.

use crate::pwit::{PwitSample, SubtreeEntry, VertexId};
use crate::weights::WeightFamily;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

/// Exploration policy. Keys are compared per step; smaller is explored first.
#[derive(Debug, Clone)]
pub enum MinimalRule {
    /// First passage order: key is the arrival time `T_parent + f_n(X)`.
    /// With `normalized` set, times are kept in units of `f_n(1)`, which keeps
    /// the arithmetic in range at large disorder; the order is unchanged.
    FppTime {
        family: WeightFamily,
        n: u64,
        normalized: bool,
    },
    /// Invasion order: key is the PWIT edge weight itself.
    IpWeight,
    /// Invasion order via the lexicographic comparison of the descending
    /// sorted weight vectors along root paths. Equivalent to `IpWeight` as a
    /// cluster-growing rule; used to cross-check that equivalence.
    IpLexicographic,
}

/// How a two-root invasion run picks its side each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideSelection {
    /// Step in tree 1, then tree 2, alternating.
    Alternate,
    /// Always take the globally smallest boundary key.
    GlobalMin,
}

/// Where the exploration starts.
#[derive(Debug, Clone)]
pub enum Start {
    Root(u8),
    BothRoots,
    /// Re-rooted descendant exploration of an arbitrary vertex, time-shifted
    /// to start at zero.
    Subtree(VertexId),
}

#[derive(Debug, Clone)]
enum Key {
    Scalar(f64),
    Lex(Vec<f64>),
}

impl Key {
    fn cmp_key(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Key::Scalar(a), Key::Scalar(b)) => a.total_cmp(b),
            (Key::Lex(a), Key::Lex(b)) => {
                for (x, y) in a.iter().zip(b.iter()) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => unreachable!("rule keys do not mix within one run"),
        }
    }
}

struct Candidate {
    key: Key,
    id: VertexId,
    parent: usize,
    rank: u32,
    x: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the smallest key pops first.
        // Exact key ties break by the candidate's own edge weight, then by
        // Ulam-Harris order. Time keys tie only when the sub-ulp corrections
        // to an arrival sum are unrepresentable; there the true refinement is
        // the invasion order on the candidates' own weights.
        other
            .key
            .cmp_key(&self.key)
            .then_with(|| other.x.total_cmp(&self.x))
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// One explored vertex.
#[derive(Debug, Clone)]
pub struct Explored {
    pub id: VertexId,
    pub parent: Option<usize>,
    /// PWIT edge weight to the parent; 0 for a start vertex.
    pub x: f64,
    /// FPP arrival time under `FppTime`; the invaded weight under IP rules.
    pub time: f64,
    pub mark: u32,
    pub thinned: bool,
    /// Adjoin step; start vertices carry 0.
    pub step: u64,
    /// Generation distance from the start vertex.
    pub depth: u32,
    /// Descending sorted root-path weight vector (IpLexicographic only).
    okey: Option<Vec<f64>>,
}

/// Exploration state over a borrowed PWIT sample.
pub struct Exploration<'a> {
    sample: &'a mut PwitSample,
    rule: MinimalRule,
    side: SideSelection,
    explored: Vec<Explored>,
    /// One frontier per root slot; single-start runs use slot 0.
    heaps: [BinaryHeap<Candidate>; 2],
    mark_owner: HashMap<u32, usize>,
    steps: u64,
    tie_events: u64,
    two_sided: bool,
}

impl<'a> Exploration<'a> {
    pub fn new(sample: &'a mut PwitSample, rule: MinimalRule, start: Start) -> Self {
        Self::with_side(sample, rule, start, SideSelection::Alternate)
    }

    pub fn with_side(
        sample: &'a mut PwitSample,
        rule: MinimalRule,
        start: Start,
        side: SideSelection,
    ) -> Self {
        let starts: Vec<VertexId> = match &start {
            Start::Root(j) => vec![VertexId::root(*j)],
            Start::BothRoots => vec![VertexId::root(1), VertexId::root(2)],
            Start::Subtree(v) => vec![v.clone()],
        };
        let mut ex = Exploration {
            sample,
            rule,
            side,
            explored: Vec::new(),
            heaps: [BinaryHeap::new(), BinaryHeap::new()],
            mark_owner: HashMap::new(),
            steps: 0,
            tie_events: 0,
            two_sided: matches!(start, Start::BothRoots),
        };
        for (slot, id) in starts.into_iter().enumerate() {
            let mark = ex.sample.mark(&id);
            let okey = match ex.rule {
                MinimalRule::IpLexicographic => Some(Vec::new()),
                _ => None,
            };
            ex.explored.push(Explored {
                id,
                parent: None,
                x: 0.0,
                time: 0.0,
                mark,
                thinned: false,
                step: 0,
                depth: 0,
                okey,
            });
            ex.mark_owner.insert(mark, slot);
            let cand = ex.candidate(slot, 1);
            ex.heaps[slot].push(cand);
        }
        ex
    }

    fn candidate(&mut self, parent: usize, rank: u32) -> Candidate {
        let x = self.sample.child_weight(&self.explored[parent].id, rank);
        let key = match &self.rule {
            MinimalRule::FppTime {
                family,
                n,
                normalized,
            } => {
                let contrib = if *normalized {
                    family.f_n_ratio(*n, x)
                } else {
                    family.f_n(*n, x)
                }
                .expect("x > 0");
                Key::Scalar(self.explored[parent].time + contrib)
            }
            MinimalRule::IpWeight => Key::Scalar(x),
            MinimalRule::IpLexicographic => {
                let base = self.explored[parent]
                    .okey
                    .as_ref()
                    .expect("lex keys maintained");
                let mut v = Vec::with_capacity(base.len() + 1);
                let pos = base.partition_point(|&w| w > x);
                v.extend_from_slice(&base[..pos]);
                v.push(x);
                v.extend_from_slice(&base[pos..]);
                Key::Lex(v)
            }
        };
        Candidate {
            key,
            id: self.explored[parent].id.child(rank),
            parent,
            rank,
            x,
        }
    }

    fn pick_heap(&self) -> usize {
        if !self.two_sided {
            return 0;
        }
        match (&self.rule, self.side) {
            (MinimalRule::FppTime { .. }, _) | (_, SideSelection::GlobalMin) => {
                match (self.heaps[0].peek(), self.heaps[1].peek()) {
                    (Some(a), Some(b)) => {
                        if a.cmp(b) == Ordering::Less {
                            1
                        } else {
                            0
                        }
                    }
                    (Some(_), None) => 0,
                    _ => 1,
                }
            }
            (_, SideSelection::Alternate) => (self.steps % 2) as usize,
        }
    }

    /// Adjoin the minimal boundary vertex. Returns its arena index.
    pub fn step(&mut self) -> usize {
        let slot = self.pick_heap();
        let cand = self.heaps[slot].pop().expect("frontier is never empty");
        if let Some(next) = self.heaps[slot].peek() {
            if cand.key.cmp_key(&next.key) == Ordering::Equal {
                self.tie_events += 1;
            }
        }
        self.steps += 1;
        let parent = cand.parent;
        let mark = self.sample.mark(&cand.id);
        let thinned = self.explored[parent].thinned || self.mark_owner.contains_key(&mark);
        let time = match cand.key {
            Key::Scalar(t) => t,
            Key::Lex(_) => cand.x,
        };
        let okey = match cand.key {
            Key::Lex(v) => Some(v),
            _ => None,
        };
        let idx = self.explored.len();
        self.explored.push(Explored {
            id: cand.id,
            parent: Some(parent),
            x: cand.x,
            time,
            mark,
            thinned,
            step: self.steps,
            depth: self.explored[parent].depth + 1,
            okey,
        });
        if !thinned {
            self.mark_owner.insert(mark, idx);
        }
        let sibling = self.candidate(parent, cand.rank + 1);
        self.heaps[slot].push(sibling);
        let child = self.candidate(idx, 1);
        self.heaps[slot].push(child);
        idx
    }

    /// Run `m` steps.
    pub fn run(&mut self, m: u64) {
        for _ in 0..m {
            self.step();
        }
    }

    pub fn explored(&self) -> &[Explored] {
        &self.explored
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn tie_events(&self) -> u64 {
        self.tie_events
    }

    pub fn sample(&self) -> &PwitSample {
        self.sample
    }

    pub fn sample_mut(&mut self) -> &mut PwitSample {
        self.sample
    }

    /// The smallest boundary key currently on the frontier (FPP: next birth
    /// time; IP: next invaded weight).
    pub fn peek_key(&self) -> f64 {
        let slot = self.pick_heap();
        match &self.heaps[slot].peek().expect("frontier non-empty").key {
            Key::Scalar(t) => *t,
            Key::Lex(v) => *v.first().unwrap_or(&0.0),
        }
    }

    /// Arena index of the unthinned vertex owning `mark`, if any.
    pub fn owner_of_mark(&self, mark: u32) -> Option<usize> {
        self.mark_owner.get(&mark).copied()
    }

    /// Exploration step at which `mark` first appeared unthinned (`N(i)`).
    pub fn mark_first_step(&self, mark: u32) -> Option<u64> {
        self.owner_of_mark(mark).map(|i| self.explored[i].step)
    }

    /// Vertices and edges of the subgraph of `K_n` induced by the marks of
    /// unthinned explored vertices.
    pub fn induced_subgraph(&self) -> (Vec<u32>, Vec<(u32, u32)>) {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for v in &self.explored {
            if v.thinned {
                continue;
            }
            vertices.push(v.mark);
            if let Some(p) = v.parent {
                edges.push((self.explored[p].mark, v.mark));
            }
        }
        (vertices, edges)
    }

    /// Serializable entries for the explored vertices.
    pub fn subtree_entries(&self) -> Vec<SubtreeEntry> {
        self.explored
            .iter()
            .map(|v| SubtreeEntry {
                root: v.id.root_tag(),
                path: v.id.path().to_vec(),
                weight: v.x,
                mark: v.mark,
            })
            .collect()
    }

    /// CSV trace: step, vertex, weight, mark, arrival, thinned.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# schema=1")?;
        writeln!(out, "step,vertex,weight,mark,arrival,thinned")?;
        for v in &self.explored {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                v.step, v.id, v.x, v.mark, v.time, v.thinned as u8
            )?;
        }
        Ok(())
    }
}
