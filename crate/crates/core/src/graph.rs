//! Simple undirected graphs with stable vertex identities, plus equality
//! constraints ("pins") on vertex values.
//!
//! Removal never relabels: a removed vertex leaves a tombstone so that
//! derived subgraphs, constraint sets, and memo keys all speak about the
//! same vertex indices as the original input.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::Params;

/// Undirected graph on vertices `0..m`, some of which may have been removed.
///
/// The adjacency structure is immutable and shared between derived graphs;
/// cloning and `remove_vertex` are cheap. Neighbor queries silently skip
/// removed endpoints.
#[derive(Clone, Debug)]
pub struct Graph {
    adj: Arc<Vec<Vec<u32>>>,
    removed: Vec<bool>,
    live: usize,
}

impl Graph {
    /// Builds a graph from an explicit vertex count and edge list.
    ///
    /// Rejects self-loops, duplicate edges (in either orientation), and
    /// endpoints outside `0..m`.
    pub fn from_edges(m: u32, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); m as usize];
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(Error::InvalidParams(format!("self-loop at vertex {u}")));
            }
            if u >= m || v >= m {
                return Err(Error::VertexOutOfRange(u.max(v)));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::InvalidParams(format!(
                    "duplicate edge {} {}",
                    key.0, key.1
                )));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            removed: vec![false; m as usize],
            live: m as usize,
            adj: Arc::new(adj),
        })
    }

    /// Parses the plain-text edge-list format:
    ///
    /// ```text
    /// # comment
    /// vertices 4
    /// 0 1
    /// 1 2
    /// ```
    ///
    /// The `vertices` line is optional; without it the vertex count is one
    /// past the largest index mentioned. Blank lines and `#` comments are
    /// skipped anywhere.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared: Option<u32> = None;
        let mut edges: Vec<(u32, u32)> = Vec::new();
        let mut max_index: Option<u32> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let first = tokens.next().expect("non-empty line");
            if first == "vertices" {
                if declared.is_some() {
                    return Err(Error::GraphParse {
                        line: line_no,
                        msg: "repeated vertices line".into(),
                    });
                }
                let count = tokens
                    .next()
                    .ok_or_else(|| Error::GraphParse {
                        line: line_no,
                        msg: "vertices line missing a count".into(),
                    })?
                    .parse::<u32>()
                    .map_err(|e| Error::GraphParse {
                        line: line_no,
                        msg: format!("bad vertex count: {e}"),
                    })?;
                if tokens.next().is_some() {
                    return Err(Error::GraphParse {
                        line: line_no,
                        msg: "trailing tokens after vertex count".into(),
                    });
                }
                declared = Some(count);
                continue;
            }
            let u = first.parse::<u32>().map_err(|e| Error::GraphParse {
                line: line_no,
                msg: format!("bad vertex index {first:?}: {e}"),
            })?;
            let second = tokens.next().ok_or_else(|| Error::GraphParse {
                line: line_no,
                msg: "edge line needs two endpoints".into(),
            })?;
            let v = second.parse::<u32>().map_err(|e| Error::GraphParse {
                line: line_no,
                msg: format!("bad vertex index {second:?}: {e}"),
            })?;
            if tokens.next().is_some() {
                return Err(Error::GraphParse {
                    line: line_no,
                    msg: "trailing tokens after edge".into(),
                });
            }
            max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
            edges.push((u, v));
        }
        let m = match (declared, max_index) {
            (Some(m), Some(hi)) => {
                if hi >= m {
                    return Err(Error::GraphParse {
                        line: 0,
                        msg: format!("edge endpoint {hi} exceeds declared vertex count {m}"),
                    });
                }
                m
            }
            (Some(m), None) => m,
            (None, Some(hi)) => hi + 1,
            (None, None) => 0,
        };
        Self::from_edges(m, &edges).map_err(|e| match e {
            Error::InvalidParams(msg) => Error::GraphParse { line: 0, msg },
            other => other,
        })
    }

    /// Path on `m` vertices: `0 - 1 - … - m−1`.
    pub fn path(m: u32) -> Self {
        let edges: Vec<_> = (1..m).map(|v| (v - 1, v)).collect();
        Self::from_edges(m, &edges).expect("path edges are valid")
    }

    /// Star with center `0` and `leaves` leaves (so `leaves + 1` vertices).
    pub fn star(leaves: u32) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        Self::from_edges(leaves + 1, &edges).expect("star edges are valid")
    }

    /// Complete graph on `m` vertices.
    pub fn complete(m: u32) -> Self {
        let mut edges = Vec::new();
        for u in 0..m {
            for v in (u + 1)..m {
                edges.push((u, v));
            }
        }
        Self::from_edges(m, &edges).expect("complete-graph edges are valid")
    }

    /// Total vertex count `m` of the original graph, tombstones included.
    pub fn vertex_count(&self) -> u32 {
        self.adj.len() as u32
    }

    /// Number of vertices that have not been removed.
    pub fn live_count(&self) -> usize {
        self.live
    }

    pub fn is_live(&self, v: u32) -> bool {
        (v as usize) < self.removed.len() && !self.removed[v as usize]
    }

    /// Live vertices in ascending index order.
    pub fn live_vertices(&self) -> impl Iterator<Item = u32> + '_ {
        self.removed
            .iter()
            .enumerate()
            .filter(|(_, &r)| !r)
            .map(|(v, _)| v as u32)
    }

    /// Live neighbors of `v` in ascending order. Empty if `v` was removed.
    pub fn neighbors(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        let list: &[u32] = if self.is_live(v) {
            &self.adj[v as usize]
        } else {
            &[]
        };
        list.iter().copied().filter(|&u| !self.removed[u as usize])
    }

    /// Degree of `v` counting live neighbors only.
    pub fn degree(&self, v: u32) -> u32 {
        self.neighbors(v).count() as u32
    }

    /// Maximum degree over live vertices (0 for an empty graph).
    pub fn max_degree(&self) -> u32 {
        self.live_vertices().map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Number of edges with both endpoints live.
    pub fn edge_count(&self) -> usize {
        self.live_vertices()
            .map(|v| self.neighbors(v).filter(|&u| u > v).count())
            .sum()
    }

    /// Live edges as `(u, v)` pairs with `u < v`, ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for v in self.live_vertices() {
            for u in self.neighbors(v) {
                if u > v {
                    out.push((v, u));
                }
            }
        }
        out
    }

    /// Induced subgraph with `v` tombstoned. Surviving vertices keep their
    /// indices; the original graph is unchanged.
    pub fn remove_vertex(&self, v: u32) -> Result<Graph> {
        if v >= self.vertex_count() {
            return Err(Error::VertexOutOfRange(v));
        }
        if !self.is_live(v) {
            return Err(Error::VertexRemoved(v));
        }
        let mut g = self.clone();
        g.removed[v as usize] = true;
        g.live -= 1;
        Ok(g)
    }

    /// Bitmask of removed vertices, packed into 64-bit words. Stable between
    /// derived graphs sharing a topology; used as part of memo keys.
    pub fn removed_mask_words(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.removed.len().div_ceil(64)];
        for (v, &r) in self.removed.iter().enumerate() {
            if r {
                words[v / 64] |= 1 << (v % 64);
            }
        }
        words
    }
}

/// A set of equality constraints `v ← value` on distinct vertices.
///
/// Stored sorted by vertex index, so iteration order (and therefore every
/// downstream float summation order) is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pins: BTreeMap<u32, u32>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Returns a copy with `v ← value` added, replacing any previous pin on
    /// `v`.
    pub fn with_pin(&self, v: u32, value: u32) -> Self {
        let mut pins = self.pins.clone();
        pins.insert(v, value);
        ConstraintSet { pins }
    }

    pub fn get(&self, v: u32) -> Option<u32> {
        self.pins.get(&v).copied()
    }

    pub fn is_pinned(&self, v: u32) -> bool {
        self.pins.contains_key(&v)
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    /// Pins in ascending vertex order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pins.iter().map(|(&v, &n)| (v, n))
    }

    /// Checks that every pinned value lies in `[0, cap]`; the error carries
    /// the offending value.
    pub fn check_ranges(&self, params: &Params) -> Result<()> {
        for (_, n) in self.iter() {
            if n > params.cap() {
                return Err(Error::ValueOutOfRange {
                    value: n,
                    max: params.cap(),
                });
            }
        }
        Ok(())
    }

    /// True when some live edge joins two pinned vertices whose values sum
    /// above `N`. Constraint sets that fail this make every count zero.
    pub fn has_conflicting_pair(&self, g: &Graph, params: &Params) -> bool {
        for (v, n) in self.iter() {
            if !g.is_live(v) {
                continue;
            }
            for u in g.neighbors(v) {
                if u > v {
                    if let Some(m) = self.get(u) {
                        if n + m > params.n() {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Replaces every pinned value `n ≤ A` by `0`, the canonical representative
/// of the flat range.
///
/// Counts and marginals are invariant under this substitution, which is what
/// makes memoization across recursion branches effective. Idempotent.
pub fn canonicalize(beta: &ConstraintSet, params: &Params) -> ConstraintSet {
    let mut pins = BTreeMap::new();
    for (v, n) in beta.iter() {
        pins.insert(v, if n <= params.a() { 0 } else { n });
    }
    ConstraintSet { pins }
}
