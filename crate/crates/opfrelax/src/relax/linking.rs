//! Per-clique block construction and the equalities that chain duplicated
//! matrix entries to their canonical variables.

use super::lift::HermitianBlock;
use super::{PairW, PsdCon, VarRegistry};
use crate::expr::{AffineCutSet, LinExpr, Sense, Var, VarSource};
use std::collections::BTreeMap;

/// Number of linking equalities a decomposition induces under the
/// shared-diagonal convention: diagonals are shared by identity, so each
/// off-diagonal entry present in k > 1 blocks costs 2(k−1) real equalities.
pub fn linking_equality_count(blocks: &[Vec<usize>]) -> usize {
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for block in blocks {
        for (x, &a) in block.iter().enumerate() {
            for &b in &block[x + 1..] {
                *seen.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    seen.values().map(|&k| 2 * (k - 1)).sum()
}

/// Hermitian blocks for the complex chordal relaxation.
///
/// The first block (in canonical order) containing a pair owns the
/// canonical variables; every further block gets duplicate entries chained
/// back by equality. Diagonals are shared by identity across blocks.
pub fn chr_complex_blocks(
    blocks: &[Vec<usize>],
    w_diag: &[Var],
    w_pairs: &BTreeMap<(usize, usize), PairW>,
    vars: &mut VarRegistry,
) -> (Vec<HermitianBlock>, AffineCutSet, usize) {
    let mut claimed: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    let mut cuts = AffineCutSet::new();
    let mut count = 0;
    let mut out = Vec::with_capacity(blocks.len());
    for (bi, block) in blocks.iter().enumerate() {
        let mut upper = BTreeMap::new();
        for (x, &a) in block.iter().enumerate() {
            for (y, &b) in block.iter().enumerate().skip(x + 1) {
                let canon = w_pairs[&(a, b)];
                if claimed.insert((a, b), ()).is_none() {
                    upper.insert((x, y), (canon.re, canon.im));
                } else {
                    let re = vars.fresh(&format!("wre_dup[{bi}][{a},{b}]"));
                    let im = vars.fresh(&format!("wim_dup[{bi}][{a},{b}]"));
                    cuts.push(LinExpr::var(re).add(canon.re, -1.0), Sense::Eq, 0.0);
                    cuts.push(LinExpr::var(im).add(canon.im, -1.0), Sense::Eq, 0.0);
                    count += 2;
                    upper.insert((x, y), (re, im));
                }
            }
        }
        out.push(HermitianBlock {
            vertices: block.clone(),
            diag: block.iter().map(|&v| w_diag[v]).collect(),
            upper,
        });
    }
    (out, cuts, count)
}

/// Real-form blocks with explicit matrix-symmetry equalities: a fresh
/// 2d×2d symmetric block per clique whose entries are pinned to the
/// canonical variables entry by entry, realizing `B1 = B3` and
/// `B2ᵀ = −B2` as constraints.
pub fn chr_rms_blocks(
    blocks: &[Vec<usize>],
    w_diag: &[Var],
    w_pairs: &BTreeMap<(usize, usize), PairW>,
    vars: &mut VarRegistry,
) -> (Vec<PsdCon>, AffineCutSet) {
    let mut cuts = AffineCutSet::new();
    let mut out = Vec::with_capacity(blocks.len());
    for (bi, block) in blocks.iter().enumerate() {
        let d = block.len();
        let dim = 2 * d;
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for q in 0..dim {
            for p in 0..=q {
                let x = vars.fresh(&format!("xms[{bi}][{p},{q}]"));
                // pin to the canonical value of Λ(W)[p][q]
                let target: Option<(Var, f64)> = if p < d && q < d {
                    Some(real_target(block, p, q, w_diag, w_pairs))
                } else if p >= d {
                    Some(real_target(block, p - d, q - d, w_diag, w_pairs))
                } else {
                    // −Im(W)[p][q−d]
                    let qq = q - d;
                    match p.cmp(&qq) {
                        std::cmp::Ordering::Less => {
                            Some((w_pairs[&(block[p], block[qq])].im, -1.0))
                        }
                        std::cmp::Ordering::Equal => None,
                        std::cmp::Ordering::Greater => {
                            Some((w_pairs[&(block[qq], block[p])].im, 1.0))
                        }
                    }
                };
                match target {
                    Some((v, coeff)) => {
                        cuts.push(LinExpr::var(x).add(v, -coeff), Sense::Eq, 0.0)
                    }
                    None => cuts.push(LinExpr::var(x), Sense::Eq, 0.0),
                }
                entries.push(LinExpr::var(x));
            }
        }
        out.push(PsdCon {
            dim,
            entries,
            vertices: block.clone(),
        });
    }
    (out, cuts)
}

fn real_target(
    block: &[usize],
    p: usize,
    q: usize,
    w_diag: &[Var],
    w_pairs: &BTreeMap<(usize, usize), PairW>,
) -> (Var, f64) {
    if p == q {
        (w_diag[block[p]], 1.0)
    } else {
        let (a, b) = (block[p.min(q)], block[p.max(q)]);
        (w_pairs[&(a, b)].re, 1.0)
    }
}

/// Real-form blocks without the symmetry coupling: each clique gets a free
/// 2d×2d symmetric block and only the combinations entering the constraint
/// data are tied to canonical variables:
/// `Re W = B1 + B3`, `Im W = B2 − B2ᵀ`.
pub fn chr_r_blocks(
    blocks: &[Vec<usize>],
    w_diag: &[Var],
    w_pairs: &BTreeMap<(usize, usize), PairW>,
    vars: &mut VarRegistry,
) -> (Vec<PsdCon>, AffineCutSet) {
    let mut cuts = AffineCutSet::new();
    let mut out = Vec::with_capacity(blocks.len());
    for (bi, block) in blocks.iter().enumerate() {
        let d = block.len();
        let dim = 2 * d;
        let mut grid: Vec<Vec<Option<Var>>> = vec![vec![None; dim]; dim];
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for q in 0..dim {
            for p in 0..=q {
                let x = vars.fresh(&format!("xr[{bi}][{p},{q}]"));
                grid[p][q] = Some(x);
                grid[q][p] = Some(x);
                entries.push(LinExpr::var(x));
            }
        }
        let at = |p: usize, q: usize| grid[p][q].expect("filled");
        for p in 0..d {
            // W_pp = B1_pp + B3_pp
            cuts.push(
                LinExpr::var(w_diag[block[p]])
                    .add(at(p, p), -1.0)
                    .add(at(p + d, p + d), -1.0),
                Sense::Eq,
                0.0,
            );
            for q in (p + 1)..d {
                let pw = w_pairs[&(block[p], block[q])];
                cuts.push(
                    LinExpr::var(pw.re)
                        .add(at(p, q), -1.0)
                        .add(at(p + d, q + d), -1.0),
                    Sense::Eq,
                    0.0,
                );
                // Im W_pq = B2_pq − B2_qp = X[d+p][q] − X[d+q][p]
                cuts.push(
                    LinExpr::var(pw.im)
                        .add(at(d + p, q), -1.0)
                        .add(at(d + q, p), 1.0),
                    Sense::Eq,
                    0.0,
                );
            }
        }
        out.push(PsdCon {
            dim,
            entries,
            vertices: block.clone(),
        });
    }
    (out, cuts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(
        blocks: &[Vec<usize>],
        n: usize,
    ) -> (Vec<Var>, BTreeMap<(usize, usize), PairW>, VarRegistry) {
        let mut vars = VarRegistry::new();
        let diag: Vec<Var> = (0..n).map(|i| vars.fresh(&format!("w{i}"))).collect();
        let mut pairs = BTreeMap::new();
        for block in blocks {
            for (x, &a) in block.iter().enumerate() {
                for &b in &block[x + 1..] {
                    pairs.entry((a, b)).or_insert_with(|| PairW {
                        re: vars.fresh(&format!("re{a}_{b}")),
                        im: vars.fresh(&format!("im{a}_{b}")),
                    });
                }
            }
        }
        (diag, pairs, vars)
    }

    #[test]
    fn disjoint_blocks_need_no_equalities() {
        let blocks = vec![vec![0, 1], vec![2, 3]];
        assert_eq!(linking_equality_count(&blocks), 0);
        let (diag, pairs, mut vars) = setup(&blocks, 4);
        let (_, cuts, n) = chr_complex_blocks(&blocks, &diag, &pairs, &mut vars);
        assert_eq!(n, 0);
        assert!(cuts.is_empty());
    }

    #[test]
    fn shared_pair_links_re_and_im_only() {
        // two blocks sharing {2,3}: diagonals are shared by identity, the
        // (2,3) off-diagonal needs its Re and Im copies chained
        let blocks = vec![vec![1, 2, 3], vec![2, 3, 4]];
        assert_eq!(linking_equality_count(&blocks), 2);
        let (diag, pairs, mut vars) = setup(&blocks, 5);
        let before = vars.len();
        let (hblocks, cuts, n) = chr_complex_blocks(&blocks, &diag, &pairs, &mut vars);
        assert_eq!(n, 2);
        assert_eq!(cuts.affine.len(), 2);
        assert_eq!(vars.len(), before + 2);
        // both blocks reference the same diagonal vars for shared vertices
        assert_eq!(hblocks[0].diag[1], diag[2]);
        assert_eq!(hblocks[1].diag[0], diag[2]);
    }

    #[test]
    fn merging_never_increases_linking_equalities() {
        let blocks = vec![vec![0, 1, 2], vec![1, 2, 3], vec![3, 4, 5], vec![4, 5, 6]];
        let merged = vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6]];
        assert!(linking_equality_count(&merged) <= linking_equality_count(&blocks));
    }
}
