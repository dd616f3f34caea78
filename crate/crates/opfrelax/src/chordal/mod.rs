//! Sparsity graph, chordal extension, maximal cliques, clique tree/graph and
//! the merging strategies that trade block size against linking overhead.

mod calibrate;
mod merge;

pub use calibrate::{calibrate, CalibrateError, CalibrationResult, Probe};
pub use merge::{
    cost_model, f_size, f_time, merge_graph, merge_tree, CostCoeffs, MergeOutcome, WeightMode,
};

use crate::casefmt::Network;
use serde::Serialize;
use std::collections::BTreeSet;

/// Undirected bus-connectivity graph over dense vertex indices.
#[derive(Debug, Clone)]
pub struct SparsityGraph {
    n: usize,
    adj: Vec<BTreeSet<usize>>,
}

impl SparsityGraph {
    pub fn new(n: usize) -> Self {
        SparsityGraph {
            n,
            adj: vec![BTreeSet::new(); n],
        }
    }

    /// Graph of a network: one vertex per bus, one edge per in-service
    /// branch pair (parallel branches collapse, self loops dropped).
    pub fn from_network(net: &Network) -> Self {
        let mut g = SparsityGraph::new(net.n_buses());
        for (_, br) in net.active_branches() {
            let f = net.bus_index(br.from).expect("validated");
            let t = net.bus_index(br.to).expect("validated");
            g.add_edge(f, t);
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = SparsityGraph::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter().copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Canonically sorted edge list (a < b).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for &b in &self.adj[a] {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(|s| s.len()).sum::<usize>() / 2
    }
}

/// Chordal completion of a sparsity graph.
#[derive(Debug, Clone)]
pub struct ChordalExtension {
    /// Elimination ordering: `order[k]` is the vertex eliminated at step k.
    pub order: Vec<usize>,
    /// Inverse permutation: `position[v]` is the elimination step of v.
    pub position: Vec<usize>,
    /// Edges added by symbolic elimination, canonically sorted.
    pub fill_edges: Vec<(usize, usize)>,
    /// Original plus fill edges.
    pub graph: SparsityGraph,
}

/// Chordal extension by approximate-minimum-degree ordering followed by
/// symbolic elimination. Ties inside AMD resolve deterministically, so equal
/// inputs give equal extensions.
pub fn chordal_extend(g: &SparsityGraph) -> ChordalExtension {
    let order = amd_order(g);
    let mut position = vec![0usize; g.n];
    for (k, &v) in order.iter().enumerate() {
        position[v] = k;
    }

    // symbolic elimination: make the higher-ordered neighborhood of each
    // vertex a clique
    let mut combined = g.clone();
    let mut fill = Vec::new();
    for &v in &order {
        let higher: Vec<usize> = combined
            .neighbors(v)
            .filter(|&u| position[u] > position[v])
            .collect();
        for (i, &a) in higher.iter().enumerate() {
            for &b in &higher[i + 1..] {
                if !combined.has_edge(a, b) {
                    combined.add_edge(a, b);
                    fill.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    fill.sort_unstable();

    ChordalExtension {
        order,
        position,
        fill_edges: fill,
        graph: combined,
    }
}

/// AMD ordering of the graph pattern, with isolated vertices kept.
fn amd_order(g: &SparsityGraph) -> Vec<usize> {
    let n = g.n;
    if n == 0 {
        return Vec::new();
    }
    let mut col_ptr: Vec<i64> = Vec::with_capacity(n + 1);
    let mut row_idx: Vec<i64> = Vec::new();
    col_ptr.push(0);
    for v in 0..n {
        for u in g.neighbors(v) {
            row_idx.push(u as i64);
        }
        col_ptr.push(row_idx.len() as i64);
    }
    let control = amd::Control::default();
    match amd::order::<i64>(n as i64, &col_ptr, &row_idx, &control) {
        Ok((p, _, _)) => p.into_iter().map(|v| v as usize).collect(),
        // AMD rejects only malformed patterns; ours is well formed by
        // construction, but fall back to the identity order just in case
        Err(_) => (0..n).collect(),
    }
}

/// Independent perfect-elimination-ordering certificate.
///
/// For each vertex, the earliest-eliminated higher neighbor must be adjacent
/// to all other higher neighbors.
pub fn verify_peo(g: &SparsityGraph, order: &[usize]) -> bool {
    let n = g.n_vertices();
    if order.len() != n {
        return false;
    }
    let mut position = vec![usize::MAX; n];
    for (k, &v) in order.iter().enumerate() {
        if v >= n || position[v] != usize::MAX {
            return false;
        }
        position[v] = k;
    }
    for v in 0..n {
        let higher: Vec<usize> = g
            .neighbors(v)
            .filter(|&u| position[u] > position[v])
            .collect();
        if let Some(&first) = higher.iter().min_by_key(|&&u| position[u]) {
            for &u in &higher {
                if u != first && !g.has_edge(first, u) {
                    return false;
                }
            }
        }
    }
    true
}

/// Maximal cliques of a chordal extension, extracted from the elimination
/// ordering. Blocks are sorted internally and listed in canonical order.
pub fn maximal_cliques(ext: &ChordalExtension) -> Vec<Vec<usize>> {
    let n = ext.graph.n_vertices();
    // C_v = {v} ∪ higher neighbors of v
    let mut size = vec![0usize; n];
    let mut parent = vec![usize::MAX; n];
    for v in 0..n {
        let mut lowest = usize::MAX;
        let mut count = 0;
        for u in ext.graph.neighbors(v) {
            if ext.position[u] > ext.position[v] {
                count += 1;
                if ext.position[u] < lowest {
                    lowest = ext.position[u];
                }
            }
        }
        size[v] = count + 1;
        if lowest != usize::MAX {
            parent[v] = ext.order[lowest];
        }
    }
    // C_v is absorbed by a child u (parent(u) = v) with |C_u| = |C_v| + 1
    let mut absorbed = vec![false; n];
    for u in 0..n {
        if parent[u] != usize::MAX && size[u] == size[parent[u]] + 1 {
            absorbed[parent[u]] = true;
        }
    }
    let mut cliques = Vec::new();
    for v in 0..n {
        if !absorbed[v] {
            let mut c: Vec<usize> = ext
                .graph
                .neighbors(v)
                .filter(|&u| ext.position[u] > ext.position[v])
                .collect();
            c.push(v);
            c.sort_unstable();
            cliques.push(c);
        }
    }
    cliques.sort();
    cliques
}

/// Edge of a clique tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    /// Separator size |B_a ∩ B_b|.
    pub sep: usize,
}

/// Maximum-weight spanning forest of the clique intersection graph
/// (weight = overlap size), built with Prim's algorithm per component.
pub fn clique_tree(cliques: &[Vec<usize>]) -> Vec<TreeEdge> {
    let k = cliques.len();
    let sets: Vec<BTreeSet<usize>> = cliques.iter().map(|c| c.iter().copied().collect()).collect();
    let overlap = |a: usize, b: usize| -> usize { sets[a].intersection(&sets[b]).count() };

    let mut in_tree = vec![false; k];
    let mut edges = Vec::new();
    for root in 0..k {
        if in_tree[root] {
            continue;
        }
        in_tree[root] = true;
        let mut component = vec![root];
        loop {
            // best (weight, -a, -b) edge from the tree component outward;
            // ties prefer lower block indices for determinism
            let mut best: Option<(usize, usize, usize)> = None;
            for &a in &component {
                for b in 0..k {
                    if !in_tree[b] {
                        let w = overlap(a, b);
                        if w > 0 {
                            let better = match best {
                                None => true,
                                Some((bw, ba, bb)) => {
                                    w > bw || (w == bw && (a, b) < (ba, bb))
                                }
                            };
                            if better {
                                best = Some((w, a, b));
                            }
                        }
                    }
                }
            }
            match best {
                Some((w, a, b)) => {
                    in_tree[b] = true;
                    component.push(b);
                    edges.push(TreeEdge { a, b, sep: w });
                }
                None => break,
            }
        }
    }
    edges.sort_by_key(|e| (e.a.min(e.b), e.a.max(e.b)));
    edges
}

/// Running-intersection certificate: for every pair of blocks, their
/// intersection is contained in every block on the tree path between them.
pub fn verify_running_intersection(blocks: &[Vec<usize>], tree: &[TreeEdge]) -> bool {
    let k = blocks.len();
    let sets: Vec<BTreeSet<usize>> = blocks.iter().map(|c| c.iter().copied().collect()).collect();
    let mut adj = vec![Vec::new(); k];
    for e in tree {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    // BFS path between each pair
    for i in 0..k {
        for j in (i + 1)..k {
            let inter: Vec<usize> = sets[i].intersection(&sets[j]).copied().collect();
            if inter.is_empty() {
                continue;
            }
            // find path i -> j
            let mut prev = vec![usize::MAX; k];
            let mut queue = std::collections::VecDeque::from([i]);
            let mut seen = vec![false; k];
            seen[i] = true;
            while let Some(u) = queue.pop_front() {
                if u == j {
                    break;
                }
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        prev[w] = u;
                        queue.push_back(w);
                    }
                }
            }
            if !seen[j] {
                return false; // intersecting blocks in different components
            }
            let mut v = j;
            while v != i {
                if !inter.iter().all(|x| sets[v].contains(x)) {
                    return false;
                }
                v = prev[v];
            }
        }
    }
    true
}

/// A full decomposition: blocks plus tree and weighted graph structure.
#[derive(Debug, Clone, Serialize)]
pub struct CliqueDecomposition {
    /// Sorted vertex lists in canonical (lexicographic) order.
    pub blocks: Vec<Vec<usize>>,
    pub tree_edges: Vec<TreeEdge>,
    /// Clique-graph edges: block pair, overlap, linking count and weight.
    pub graph_edges: Vec<GraphEdge>,
    /// Fill edges added by the chordal extension.
    pub fill_count: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub overlap: usize,
    /// Linking count of the edge: s(s+1)/2 shared Hermitian entries.
    pub l_c: usize,
    pub weight: f64,
}

/// Linking count of an overlap of `s` vertices: the number of distinct
/// Hermitian upper-triangle entries shared between the two blocks.
pub fn linking_count(overlap: usize) -> usize {
    overlap * (overlap + 1) / 2
}

impl CliqueDecomposition {
    /// Assemble a decomposition (tree + weighted graph) from blocks.
    pub fn from_blocks(
        blocks: Vec<Vec<usize>>,
        fill_count: usize,
        coeffs: &CostCoeffs,
        mode: WeightMode,
    ) -> Self {
        let tree_edges = clique_tree(&blocks);
        let graph_edges = merge::weighted_graph_edges(&blocks, coeffs, mode);
        CliqueDecomposition {
            blocks,
            tree_edges,
            graph_edges,
            fill_count,
        }
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).max().unwrap_or(0)
    }

    /// Every edge of `g` must lie inside at least one block.
    pub fn covers(&self, g: &SparsityGraph) -> bool {
        let sets: Vec<BTreeSet<usize>> = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().collect())
            .collect();
        g.edges()
            .into_iter()
            .all(|(a, b)| sets.iter().any(|s| s.contains(&a) && s.contains(&b)))
    }

    /// Total estimated per-iteration solver cost Σ f_t over blocks.
    pub fn total_time_estimate(&self, coeffs: &CostCoeffs) -> f64 {
        let lc = merge::block_linking_counts(&self.blocks);
        self.blocks
            .iter()
            .zip(lc)
            .map(|(b, l)| f_time(b.len(), l, coeffs))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SparsityGraph {
        SparsityGraph::from_edges(3, &[(0, 1), (1, 2)])
    }

    #[test]
    fn path_is_already_chordal() {
        let ext = chordal_extend(&path3());
        assert!(ext.fill_edges.is_empty());
        assert!(verify_peo(&ext.graph, &ext.order));
        let cliques = maximal_cliques(&ext);
        assert_eq!(cliques, vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn four_cycle_gets_exactly_one_chord() {
        let g = SparsityGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let ext = chordal_extend(&g);
        assert_eq!(ext.fill_edges.len(), 1);
        assert!(verify_peo(&ext.graph, &ext.order));
        // both chord choices yield a chordal graph; ours must be one of them
        let chord = ext.fill_edges[0];
        assert!(chord == (0, 2) || chord == (1, 3));
    }

    #[test]
    fn triangle_is_single_clique() {
        let g = SparsityGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let ext = chordal_extend(&g);
        assert_eq!(maximal_cliques(&ext), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn two_cliques_sharing_one_vertex() {
        let blocks = vec![vec![0, 1], vec![1, 2]];
        let tree = clique_tree(&blocks);
        assert_eq!(tree.len(), 1);
        assert_eq!(tree[0].sep, 1);
        assert!(verify_running_intersection(&blocks, &tree));
    }

    #[test]
    fn star_of_three_cliques_tree_satisfies_rip() {
        // three cliques all sharing vertex 0: any max-weight tree works
        let blocks = vec![vec![0, 1], vec![0, 2], vec![0, 3]];
        let tree = clique_tree(&blocks);
        assert_eq!(tree.len(), 2);
        assert!(tree.iter().all(|e| e.sep == 1));
        assert!(verify_running_intersection(&blocks, &tree));
    }

    #[test]
    fn rip_checker_detects_violations() {
        // blocks {0,1},{1,2},{0,2}: a path tree 0-1-2 with blocks[0] and
        // blocks[2] sharing vertex 0 that is missing from the middle block
        let blocks = vec![vec![0, 1], vec![1, 2], vec![0, 2]];
        let bad_tree = vec![
            TreeEdge { a: 0, b: 1, sep: 1 },
            TreeEdge { a: 1, b: 2, sep: 1 },
        ];
        assert!(!verify_running_intersection(&blocks, &bad_tree));
    }

    #[test]
    fn isolated_vertices_become_singleton_cliques() {
        let g = SparsityGraph::from_edges(4, &[(0, 1)]);
        let ext = chordal_extend(&g);
        let cliques = maximal_cliques(&ext);
        assert!(cliques.contains(&vec![2]));
        assert!(cliques.contains(&vec![3]));
        assert!(cliques.contains(&vec![0, 1]));
    }
}
