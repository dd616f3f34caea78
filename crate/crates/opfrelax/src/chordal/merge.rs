//! Per-iteration cost model and the two clique merging strategies.

use super::{clique_tree, linking_count, CliqueDecomposition, GraphEdge};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Coefficients of the per-iteration time model
/// `f_t(d, l_c) = κd³ + χd² + μ·l_c³ + ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoeffs {
    pub kappa: f64,
    pub chi: f64,
    pub mu: f64,
    pub psi: f64,
}

impl Default for CostCoeffs {
    /// Coefficients fitted by `calibrate` against the bundled interior-point
    /// backend on the development machine; regenerate with the `calibrate`
    /// subcommand for local hardware.
    fn default() -> Self {
        CostCoeffs {
            kappa: 2.465e-6,
            chi: 0.0,
            mu: 7.346e-8,
            psi: 5.693e-4,
        }
    }
}

/// Estimated interior-point time per iteration contributed by one block.
pub fn f_time(d: usize, l_c: usize, c: &CostCoeffs) -> f64 {
    let d = d as f64;
    let l = l_c as f64;
    c.kappa * d * d * d + c.chi * d * d + c.mu * l * l * l + c.psi
}

/// Scalar-count burden of one block: linking constraints plus the distinct
/// Hermitian entries of a d×d block.
pub fn f_size(d: usize, l_c: usize) -> f64 {
    l_c as f64 + (d * (d + 1)) as f64 / 2.0
}

/// How the time and size differences combine into an edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightMode {
    /// Literal sum of the two differences.
    Raw,
    /// Each difference normalized by its pre-merge sum before adding.
    Normalized,
}

/// Evaluate the cost model for a hypothetical merge: returns
/// `(f_t values (i, j, union), f_s values (i, j, union), w_ij)`.
#[allow(clippy::too_many_arguments)]
pub fn cost_model(
    size_i: usize,
    size_j: usize,
    size_union: usize,
    lc_i: usize,
    lc_j: usize,
    lc_union: usize,
    coeffs: &CostCoeffs,
    mode: WeightMode,
) -> ([f64; 3], [f64; 3], f64) {
    let ft = [
        f_time(size_i, lc_i, coeffs),
        f_time(size_j, lc_j, coeffs),
        f_time(size_union, lc_union, coeffs),
    ];
    let fs = [
        f_size(size_i, lc_i),
        f_size(size_j, lc_j),
        f_size(size_union, lc_union),
    ];
    let dt = ft[0] + ft[1] - ft[2];
    let ds = fs[0] + fs[1] - fs[2];
    let w = match mode {
        WeightMode::Raw => dt + ds,
        WeightMode::Normalized => {
            let tsum = ft[0] + ft[1];
            let ssum = fs[0] + fs[1];
            let tn = if tsum > 0.0 { dt / tsum } else { 0.0 };
            let sn = if ssum > 0.0 { ds / ssum } else { 0.0 };
            tn + sn
        }
    };
    ([ft[0], ft[1], ft[2]], [fs[0], fs[1], fs[2]], w)
}

/// Linking count attributed to each block: the sum of the linking counts of
/// its incident clique-graph edges.
pub fn block_linking_counts(blocks: &[Vec<usize>]) -> Vec<usize> {
    let state = MergeState::new(blocks);
    (0..blocks.len()).map(|i| state.lc[i]).collect()
}

/// All weighted clique-graph edges of a decomposition.
pub(super) fn weighted_graph_edges(
    blocks: &[Vec<usize>],
    coeffs: &CostCoeffs,
    mode: WeightMode,
) -> Vec<GraphEdge> {
    let state = MergeState::new(blocks);
    let mut edges = Vec::new();
    for i in 0..blocks.len() {
        for (&j, &s) in &state.neighbors[i] {
            if i < j {
                edges.push(GraphEdge {
                    a: i,
                    b: j,
                    overlap: s,
                    l_c: linking_count(s),
                    weight: state.edge_weight(i, j, coeffs, mode),
                });
            }
        }
    }
    edges
}

/// Mutable clique-graph state for the merge loop.
struct MergeState {
    sets: Vec<Option<BTreeSet<usize>>>,
    /// Adjacent blocks with cached overlap sizes.
    neighbors: Vec<BTreeMap<usize, usize>>,
    /// Block linking counts: Σ linking_count(overlap) over incident edges.
    lc: Vec<usize>,
}

impl MergeState {
    fn new(blocks: &[Vec<usize>]) -> Self {
        let k = blocks.len();
        let sets: Vec<Option<BTreeSet<usize>>> = blocks
            .iter()
            .map(|b| Some(b.iter().copied().collect()))
            .collect();
        // vertex -> blocks incidence gives candidate pairs without a k² scan
        let mut by_vertex: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, b) in blocks.iter().enumerate() {
            for &v in b {
                by_vertex.entry(v).or_default().push(i);
            }
        }
        let mut neighbors: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); k];
        for owners in by_vertex.values() {
            for (x, &i) in owners.iter().enumerate() {
                for &j in &owners[x + 1..] {
                    *neighbors[i].entry(j).or_insert(0) += 1;
                    *neighbors[j].entry(i).or_insert(0) += 1;
                }
            }
        }
        let lc = (0..k)
            .map(|i| neighbors[i].values().map(|&s| linking_count(s)).sum())
            .collect();
        MergeState {
            sets,
            neighbors,
            lc,
        }
    }

    /// Weight w_ij with the union's linking count recomputed against the
    /// current neighbors of both endpoints.
    fn edge_weight(&self, i: usize, j: usize, coeffs: &CostCoeffs, mode: WeightMode) -> f64 {
        let si = self.sets[i].as_ref().expect("live block");
        let sj = self.sets[j].as_ref().expect("live block");
        let union_size = si.union(sj).count();
        let mut lc_union = 0;
        let mut others: BTreeSet<usize> = self.neighbors[i].keys().copied().collect();
        others.extend(self.neighbors[j].keys().copied());
        others.remove(&i);
        others.remove(&j);
        for &k in &others {
            let sk = self.sets[k].as_ref().expect("live neighbor");
            let overlap = sk
                .iter()
                .filter(|v| si.contains(v) || sj.contains(v))
                .count();
            lc_union += linking_count(overlap);
        }
        let (_, _, w) = cost_model(
            si.len(),
            sj.len(),
            union_size,
            self.lc[i],
            self.lc[j],
            lc_union,
            coeffs,
            mode,
        );
        w
    }

    /// Merge block b into block a; returns the set of blocks whose own
    /// linking count changed (a and every block adjacent to both a and b).
    fn merge(&mut self, a: usize, b: usize) -> BTreeSet<usize> {
        let moved = self.sets[b].take().expect("live block");
        let b_neighbors: Vec<(usize, usize)> =
            self.neighbors[b].iter().map(|(&k, &s)| (k, s)).collect();
        self.sets[a].as_mut().expect("live block").extend(moved);
        self.neighbors[b].clear();

        let mut lc_changed: BTreeSet<usize> = BTreeSet::new();
        lc_changed.insert(a);
        for (k, s_kb) in b_neighbors {
            self.neighbors[k].remove(&b);
            if k == a {
                continue;
            }
            // overlap of k with the union
            let sa = self.sets[a].as_ref().unwrap();
            let overlap = self.sets[k]
                .as_ref()
                .unwrap()
                .iter()
                .filter(|v| sa.contains(v))
                .count();
            let old = self.neighbors[k].insert(a, overlap);
            self.neighbors[a].insert(k, overlap);
            // linking counts are superadditive in the overlap, so k's count
            // changes whenever its two incident edges collapse into one of a
            // different total
            let before = linking_count(old.unwrap_or(0)) + linking_count(s_kb);
            let after = linking_count(overlap);
            if before != after {
                self.lc[k] = self.lc[k] + after - before;
                lc_changed.insert(k);
            }
        }
        self.neighbors[a].remove(&b);
        self.lc[a] = self.neighbors[a]
            .values()
            .map(|&s| linking_count(s))
            .sum();
        self.lc[b] = 0;
        lc_changed
    }

    fn live_blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<Vec<usize>> = self
            .sets
            .iter()
            .flatten()
            .map(|s| s.iter().copied().collect())
            .collect();
        blocks.sort();
        blocks
    }
}

/// Result of a merge strategy.
#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub decomposition: CliqueDecomposition,
    /// Number of merge steps performed.
    pub merges: usize,
}

/// Clique-graph merging: repeatedly merge the pair with the largest positive
/// weight. Weights are maintained incrementally: a merge refreshes edges
/// incident to the new block and to every block whose linking count the
/// merge changed. `incremental = false` recomputes every weight after each
/// merge (debug mode; must agree with the incremental path).
pub fn merge_graph_with(
    cliques: &[Vec<usize>],
    fill_count: usize,
    coeffs: &CostCoeffs,
    mode: WeightMode,
    incremental: bool,
) -> MergeOutcome {
    let mut state = MergeState::new(cliques);
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..cliques.len() {
        for &j in state.neighbors[i].keys() {
            if i < j {
                weights.insert((i, j), state.edge_weight(i, j, coeffs, mode));
            }
        }
    }
    let mut merges = 0;

    loop {
        // maximum weight; ties toward the canonically first pair
        let best = weights
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .max_by(|(ka, wa), (kb, wb)| wa.partial_cmp(wb).unwrap().then_with(|| kb.cmp(ka)))
            .map(|(&k, _)| k);
        let (a, b) = match best {
            Some(pair) => pair,
            None => break,
        };
        let lc_changed = state.merge(a, b);
        merges += 1;
        weights.retain(|&(x, y), _| {
            state.sets[x].is_some()
                && state.sets[y].is_some()
                && state.neighbors[x].contains_key(&y)
        });
        if incremental {
            // refresh every edge with an endpoint whose inputs changed
            let mut stale: BTreeSet<(usize, usize)> = BTreeSet::new();
            for &c in &lc_changed {
                for &n in state.neighbors[c].keys() {
                    stale.insert((c.min(n), c.max(n)));
                }
            }
            for (x, y) in stale {
                weights.insert((x, y), state.edge_weight(x, y, coeffs, mode));
            }
        } else {
            let live: Vec<usize> = (0..state.sets.len())
                .filter(|&i| state.sets[i].is_some())
                .collect();
            weights.clear();
            for &i in &live {
                for &j in state.neighbors[i].keys() {
                    if i < j {
                        weights.insert((i, j), state.edge_weight(i, j, coeffs, mode));
                    }
                }
            }
        }
    }

    MergeOutcome {
        decomposition: CliqueDecomposition::from_blocks(
            state.live_blocks(),
            fill_count,
            coeffs,
            mode,
        ),
        merges,
    }
}

/// Clique-graph merging with incremental weight maintenance.
pub fn merge_graph(
    cliques: &[Vec<usize>],
    fill_count: usize,
    coeffs: &CostCoeffs,
    mode: WeightMode,
) -> MergeOutcome {
    merge_graph_with(cliques, fill_count, coeffs, mode, true)
}

/// Clique-tree merging baseline: walk parent-child tree edges depth-first
/// and merge when the criterion selected by the union-size threshold
/// `k_max` improves (size criterion for unions of at most `k_max` vertices,
/// per-iteration time criterion otherwise). Stops when a pass accepts no
/// merge or the largest block reaches `limit`.
pub fn merge_tree(
    cliques: &[Vec<usize>],
    fill_count: usize,
    coeffs: &CostCoeffs,
    k_max: usize,
    limit: usize,
    mode: WeightMode,
) -> MergeOutcome {
    let mut blocks: Vec<Vec<usize>> = cliques.to_vec();
    let mut merges = 0;

    loop {
        if blocks.len() <= 1 || blocks.iter().any(|b| b.len() >= limit) {
            break;
        }
        let tree = clique_tree(&blocks);
        if tree.is_empty() {
            break;
        }
        let state = MergeState::new(&blocks);
        // root at the largest block, lowest index on ties
        let root = (0..blocks.len())
            .max_by_key(|&i| (blocks[i].len(), usize::MAX - i))
            .unwrap();
        let mut adj = vec![Vec::new(); blocks.len()];
        for e in &tree {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        // depth-first parent-child order
        let mut stack = vec![root];
        let mut seen = vec![false; blocks.len()];
        seen[root] = true;
        let mut accepted: Option<(usize, usize)> = None;
        'dfs: while let Some(parent) = stack.pop() {
            for &child in &adj[parent] {
                if seen[child] {
                    continue;
                }
                seen[child] = true;
                stack.push(child);
                let sp: &BTreeSet<usize> = state.sets[parent].as_ref().unwrap();
                let sc: &BTreeSet<usize> = state.sets[child].as_ref().unwrap();
                let union_size = sp.union(sc).count();
                if union_size >= limit {
                    continue;
                }
                let mut lc_union = 0;
                for k in 0..blocks.len() {
                    if k != parent && k != child {
                        let sk = state.sets[k].as_ref().unwrap();
                        let ov = sk
                            .iter()
                            .filter(|v| sp.contains(v) || sc.contains(v))
                            .count();
                        lc_union += linking_count(ov);
                    }
                }
                let ([ft_p, ft_c, ft_u], [fs_p, fs_c, fs_u], _) = cost_model(
                    blocks[parent].len(),
                    blocks[child].len(),
                    union_size,
                    state.lc[parent],
                    state.lc[child],
                    lc_union,
                    coeffs,
                    mode,
                );
                let improves = if union_size <= k_max {
                    fs_p + fs_c - fs_u > 0.0
                } else {
                    ft_p + ft_c - ft_u > 0.0
                };
                if improves {
                    accepted = Some((parent, child));
                    break 'dfs;
                }
            }
        }
        match accepted {
            Some((p, c)) => {
                let mut merged: BTreeSet<usize> = blocks[p].iter().copied().collect();
                merged.extend(blocks[c].iter().copied());
                let (lo, hi) = (p.min(c), p.max(c));
                blocks[lo] = merged.into_iter().collect();
                blocks.remove(hi);
                merges += 1;
            }
            None => break,
        }
    }

    blocks.sort();
    MergeOutcome {
        decomposition: CliqueDecomposition::from_blocks(blocks, fill_count, coeffs, mode),
        merges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_estimate_direct_substitution() {
        // f_s(3, 2) = 2 + 3·4/2 = 8
        assert_eq!(f_size(3, 2), 8.0);
    }

    #[test]
    fn zero_coefficients_reduce_weight_to_size_criterion() {
        let zero = CostCoeffs {
            kappa: 0.0,
            chi: 0.0,
            mu: 0.0,
            psi: 0.0,
        };
        let (ft, fs, w) = cost_model(3, 3, 4, 3, 3, 1, &zero, WeightMode::Raw);
        assert_eq!(ft, [0.0; 3]);
        let ds = fs[0] + fs[1] - fs[2];
        assert_eq!(w, ds);
    }

    #[test]
    fn disjoint_merge_has_negative_size_term() {
        // merging disjoint blocks strictly increases f_s
        for (di, dj) in [(2usize, 3usize), (4, 4), (5, 2)] {
            let fs_i = f_size(di, 0);
            let fs_j = f_size(dj, 0);
            let fs_u = f_size(di + dj, 0);
            assert!(fs_i + fs_j - fs_u < 0.0);
        }
    }

    #[test]
    fn merge_graph_is_identity_when_weights_nonpositive() {
        // two disjoint blocks: no clique-graph edge at all
        let cliques = vec![vec![0, 1], vec![2, 3]];
        let zero = CostCoeffs {
            kappa: 0.0,
            chi: 0.0,
            mu: 0.0,
            psi: 0.0,
        };
        let out = merge_graph(&cliques, 0, &zero, WeightMode::Raw);
        assert_eq!(out.merges, 0);
        assert_eq!(out.decomposition.blocks, cliques);
    }

    #[test]
    fn heavily_overlapping_pair_merges_with_default_coeffs() {
        // overlap = size − 1: the union adds one vertex but removes three
        // linking entries
        let cliques = vec![vec![0, 1, 2], vec![1, 2, 3]];
        let out = merge_graph(&cliques, 0, &CostCoeffs::default(), WeightMode::Normalized);
        assert_eq!(out.merges, 1);
        assert_eq!(out.decomposition.blocks, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn merge_tree_identity_under_zero_time_criterion() {
        // k_max = 0 routes every union through the time criterion; zero
        // coefficients make every time difference zero, so nothing merges
        let cliques = vec![vec![0, 1, 2], vec![1, 2, 3], vec![3, 4]];
        let zero = CostCoeffs {
            kappa: 0.0,
            chi: 0.0,
            mu: 0.0,
            psi: 0.0,
        };
        let limit = 3;
        let out = merge_tree(&cliques, 0, &zero, 0, limit, WeightMode::Raw);
        assert_eq!(out.merges, 0);
        assert_eq!(out.decomposition.blocks, cliques);
    }

    #[test]
    fn tree_merging_cannot_join_siblings() {
        // chain of three pairwise-overlapping cliques around a hub: the two
        // leaves are siblings in any clique tree and stay separate under the
        // tree strategy, while the graph strategy may merge them
        let cliques = vec![vec![0, 1, 9], vec![1, 2, 9], vec![2, 3, 9]];
        let coeffs = CostCoeffs {
            kappa: 1e-9,
            chi: 0.0,
            mu: 1e-6,
            psi: 0.0,
        };
        // k_max high: size criterion everywhere; overlap 2 between
        // consecutive blocks, overlap 1 between the ends
        let tree_out = merge_tree(&cliques, 0, &coeffs, 100, 100, WeightMode::Raw);
        let graph_out = merge_graph(&cliques, 0, &coeffs, WeightMode::Raw);
        assert!(graph_out.decomposition.blocks.len() <= tree_out.decomposition.blocks.len());
    }

    #[test]
    fn merged_blocks_cover_original_cliques() {
        let cliques = vec![vec![0, 1, 2], vec![1, 2, 3], vec![3, 4], vec![4, 5]];
        let out = merge_graph(&cliques, 0, &CostCoeffs::default(), WeightMode::Normalized);
        for orig in &cliques {
            assert!(
                out.decomposition
                    .blocks
                    .iter()
                    .any(|b| orig.iter().all(|v| b.contains(v))),
                "original clique {orig:?} not covered"
            );
        }
        // termination in at most k−1 merges
        assert!(out.merges < cliques.len());
    }

    #[test]
    fn incremental_and_full_recompute_agree() {
        // pseudo-random clique families
        let mut state = 99u64;
        let mut rand = move |m: usize| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as usize % m
        };
        for _ in 0..30 {
            let n = 8 + rand(10);
            let k = 4 + rand(6);
            let mut cliques = Vec::new();
            for _ in 0..k {
                let mut c = BTreeSet::new();
                let len = 2 + rand(4);
                while c.len() < len {
                    c.insert(rand(n));
                }
                cliques.push(c.into_iter().collect::<Vec<_>>());
            }
            cliques.sort();
            cliques.dedup();
            for mode in [WeightMode::Raw, WeightMode::Normalized] {
                let inc =
                    merge_graph_with(&cliques, 0, &CostCoeffs::default(), mode, true);
                let full =
                    merge_graph_with(&cliques, 0, &CostCoeffs::default(), mode, false);
                assert_eq!(
                    inc.decomposition.blocks, full.decomposition.blocks,
                    "incremental / full recompute divergence on {cliques:?}"
                );
            }
        }
    }

    #[test]
    fn merge_is_deterministic() {
        let cliques = vec![
            vec![0, 1, 2],
            vec![1, 2, 3],
            vec![2, 3, 4],
            vec![4, 5],
            vec![5, 6, 7],
        ];
        let a = merge_graph(&cliques, 0, &CostCoeffs::default(), WeightMode::Normalized);
        let b = merge_graph(&cliques, 0, &CostCoeffs::default(), WeightMode::Normalized);
        assert_eq!(a.decomposition.blocks, b.decomposition.blocks);
        assert_eq!(a.merges, b.merges);
    }
}
