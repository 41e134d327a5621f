use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::discretization::{CellLayout, TwoLayerGrid};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Undirected weighted graph over states. Adjacency lists are sorted by
/// neighbor index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl StateGraph {
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::invalid("self-loops are not allowed"));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("edge weight must be positive, got {w}")));
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in adj.iter_mut() {
            list.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            list.dedup_by_key(|e| e.0);
        }
        Ok(Self { adj })
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// Each undirected edge once, as `(low, high, weight)`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, list) in self.adj.iter().enumerate() {
            for &(b, w) in list {
                if a < b {
                    out.push((a, b, w));
                }
            }
        }
        out
    }
}

/// Leaves are adjacent when their closed rectangles intersect, which gives
/// the 8-neighborhood on a uniform grid and extends it across layers.
/// Edge weight is the distance between leaf centroids.
pub fn build_state_graph(grid: &TwoLayerGrid) -> StateGraph {
    let first = grid.first_layer();
    let k = first.k();
    let leaves_of = |cell: usize| -> std::ops::Range<usize> {
        match grid.cells()[cell] {
            CellLayout::Leaf { state } => state as usize..state as usize + 1,
            CellLayout::Expanded { kappa, first_state } => {
                first_state as usize..first_state as usize + kappa * kappa
            }
        }
    };
    let tol = 1e-9 * grid.bbox().diagonal();
    let centroid: Vec<Point> = grid.leaves().iter().map(|r| r.center()).collect();
    let mut edges = Vec::new();
    for cell in 0..first.num_cells() {
        let (c, r) = (cell % k, cell / k);
        for (dc, dr) in [(0i64, 0i64), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            let (nc, nr) = (c as i64 + dc, r as i64 + dr);
            if nc < 0 || nc >= k as i64 || nr >= k as i64 {
                continue;
            }
            let other = nr as usize * k + nc as usize;
            for a in leaves_of(cell) {
                for b in leaves_of(other) {
                    if (other == cell && b <= a) || a == b {
                        continue;
                    }
                    if grid.leaf_rect(a as u32).touches(grid.leaf_rect(b as u32), tol) {
                        edges.push((a, b, centroid[a].distance(&centroid[b])));
                    }
                }
            }
        }
    }
    StateGraph::from_edges(grid.num_states(), &edges).expect("grid edges are valid")
}

/// Node counts of minimum-weight paths. `None` marks unreachable pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLengthMatrix {
    m: usize,
    l: Vec<Option<f64>>,
}

impl PathLengthMatrix {
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("path length matrix must be square"));
        }
        Ok(Self {
            m,
            l: rows.into_iter().flatten().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.l[i * self.m + j]
    }

    pub fn max_length(&self) -> f64 {
        self.l.iter().flatten().fold(0.0, |a: f64, &b| a.max(b))
    }

    /// Every reachable length plus 2, counting the virtual start and end
    /// symbols that frame a trajectory in the transition model.
    pub fn with_virtual_endpoints(&self) -> Self {
        Self {
            m: self.m,
            l: self.l.iter().map(|v| v.map(|x| x + 2.0)).collect(),
        }
    }
}

/// Lexicographic path key: total weight first (with a relative tolerance
/// for floating ties), then node count.
pub fn path_key_less(w1: f64, h1: u32, w2: f64, h2: u32) -> bool {
    let tol = 1e-9 * w1.abs().max(w2.abs());
    if w1 < w2 - tol {
        true
    } else if w1 > w2 + tol {
        false
    } else {
        h1 < h2
    }
}

#[derive(PartialEq)]
struct Entry {
    w: f64,
    hops: u32,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so that BinaryHeap pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .w
            .total_cmp(&self.w)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source search; returns `(weight, node count)` per target.
pub fn dijkstra(graph: &StateGraph, source: usize) -> Vec<Option<(f64, u32)>> {
    let n = graph.num_nodes();
    let mut best: Vec<Option<(f64, u32)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[source] = Some((0.0, 1));
    heap.push(Entry {
        w: 0.0,
        hops: 1,
        node: source,
    });
    while let Some(Entry { w, hops, node }) = heap.pop() {
        if done[node] || best[node] != Some((w, hops)) {
            continue;
        }
        done[node] = true;
        for &(next, ew) in graph.neighbors(node) {
            if done[next] {
                continue;
            }
            let (nw, nh) = (w + ew, hops + 1);
            let better = match best[next] {
                None => true,
                Some((bw, bh)) => path_key_less(nw, nh, bw, bh),
            };
            if better {
                best[next] = Some((nw, nh));
                heap.push(Entry {
                    w: nw,
                    hops: nh,
                    node: next,
                });
            }
        }
    }
    best
}

/// All-pairs node counts of minimum-weight paths, one search per source.
pub fn shortest_path_lengths(graph: &StateGraph) -> PathLengthMatrix {
    let rows: Vec<Vec<Option<f64>>> = (0..graph.num_nodes())
        .into_par_iter()
        .map(|s| {
            dijkstra(graph, s)
                .into_iter()
                .map(|e| e.map(|(_, h)| h as f64))
                .collect()
        })
        .collect();
    PathLengthMatrix::from_rows(rows).expect("square by construction")
}
