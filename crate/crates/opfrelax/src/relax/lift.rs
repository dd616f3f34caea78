//! Hermitian clique blocks and their real symmetric lifts.

use crate::expr::{LinExpr, Var};
use std::collections::BTreeMap;

/// A d×d Hermitian matrix block over registry variables: shared real
/// diagonal entries plus complex upper-triangle entries.
#[derive(Debug, Clone)]
pub struct HermitianBlock {
    /// Dense bus indices covered by the block, ascending.
    pub vertices: Vec<usize>,
    /// Diagonal variables, one per vertex.
    pub diag: Vec<Var>,
    /// Upper-triangle entries keyed by local (p, q) with p < q.
    pub upper: BTreeMap<(usize, usize), (Var, Var)>,
}

impl HermitianBlock {
    pub fn dim(&self) -> usize {
        self.vertices.len()
    }
}

/// Real symmetric 2d×2d image of a Hermitian block under the ring
/// isomorphism `Λ(W) = [[Re W, −Im W], [Im W, Re W]]`.
///
/// The two diagonal sub-blocks reference identical variables and the
/// off-diagonal sub-block is skew-symmetric by construction, so the lift is
/// positive semidefinite exactly when the Hermitian block is.
#[derive(Debug, Clone)]
pub struct RealLift {
    pub dim: usize,
    /// Upper-triangle entries in column-major (svec) order, unscaled.
    pub entries: Vec<LinExpr>,
}

/// Lower a Hermitian block to its real symmetric lift.
pub fn lower_complex_to_real(block: &HermitianBlock) -> RealLift {
    let d = block.dim();
    let dim = 2 * d;
    let entry = |p: usize, q: usize| -> LinExpr {
        // value of Λ(W)[p][q] for p ≤ q
        let (re_region_p, re_region_q) = (p < d, q < d);
        match (re_region_p, re_region_q) {
            (true, true) => real_entry(block, p, q),
            (false, false) => real_entry(block, p - d, q - d),
            (true, false) => {
                // −Im(W)[p][q−d]
                let q = q - d;
                match p.cmp(&q) {
                    std::cmp::Ordering::Less => {
                        LinExpr::term(block.upper[&(p, q)].1, -1.0)
                    }
                    std::cmp::Ordering::Equal => LinExpr::default(),
                    std::cmp::Ordering::Greater => LinExpr::var(block.upper[&(q, p)].1),
                }
            }
            (false, true) => unreachable!("p ≤ q in upper triangle"),
        }
    };
    let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
    for q in 0..dim {
        for p in 0..=q {
            entries.push(entry(p, q));
        }
    }
    RealLift { dim, entries }
}

fn real_entry(block: &HermitianBlock, p: usize, q: usize) -> LinExpr {
    if p == q {
        LinExpr::var(block.diag[p])
    } else {
        let (lo, hi) = (p.min(q), p.max(q));
        LinExpr::var(block.upper[&(lo, hi)].0)
    }
}

/// Evaluate a lift numerically into a dense symmetric matrix.
pub fn lift_to_dense(lift: &RealLift, x: &[f64]) -> Vec<Vec<f64>> {
    let n = lift.dim;
    let mut m = vec![vec![0.0; n]; n];
    let mut it = lift.entries.iter();
    for q in 0..n {
        for p in 0..=q {
            let v = it.next().expect("entry count").eval(x);
            m[p][q] = v;
            m[q][p] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{VarPool, VarSource};
    use crate::linalg::sym_eigen;
    use num_complex::Complex64;

    fn block2(pool: &mut VarPool) -> HermitianBlock {
        let d0 = pool.fresh("w00");
        let d1 = pool.fresh("w11");
        let re = pool.fresh("w01re");
        let im = pool.fresh("w01im");
        let mut upper = BTreeMap::new();
        upper.insert((0, 1), (re, im));
        HermitianBlock {
            vertices: vec![0, 1],
            diag: vec![d0, d1],
            upper,
        }
    }

    #[test]
    fn unit_rank_one_matrix_doubles_eigenvalues() {
        // W = [[1, i], [−i, 1]] has eigenvalues {0, 2}; the lift shows each
        // twice
        let mut pool = VarPool::new();
        let block = block2(&mut pool);
        let lift = lower_complex_to_real(&block);
        assert_eq!(lift.dim, 4);
        let x = [1.0, 1.0, 0.0, 1.0]; // W01 = 0 + 1i
        let dense = lift_to_dense(&lift, &x);
        let (vals, _) = sym_eigen(&dense);
        let want = [0.0, 0.0, 2.0, 2.0];
        for (got, want) in vals.iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn scalar_block_lifts_to_twice_diagonal() {
        let mut pool = VarPool::new();
        let d = pool.fresh("w00");
        let block = HermitianBlock {
            vertices: vec![0],
            diag: vec![d],
            upper: BTreeMap::new(),
        };
        let lift = lower_complex_to_real(&block);
        assert_eq!(lift.dim, 2);
        let dense = lift_to_dense(&lift, &[2.5]);
        assert_eq!(dense[0][0], 2.5);
        assert_eq!(dense[1][1], 2.5);
        assert_eq!(dense[0][1], 0.0);
    }

    /// Λ applied numerically to a dense Hermitian matrix.
    fn lambda(m: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        let d = m.len();
        let mut out = vec![vec![0.0; 2 * d]; 2 * d];
        for i in 0..d {
            for j in 0..d {
                out[i][j] = m[i][j].re;
                out[i + d][j + d] = m[i][j].re;
                out[i][j + d] = -m[i][j].im;
                out[i + d][j] = m[i][j].im;
            }
        }
        out
    }

    fn trace(m: &[Vec<f64>]) -> f64 {
        (0..m.len()).map(|i| m[i][i]).sum()
    }

    #[test]
    fn trace_identity_for_random_hermitian_pairs() {
        // tr(Λ(A)Λ(B)) = 2·tr(AB) for Hermitian A, B
        let mut state = 7u64;
        let mut rnd = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let d = 3;
            let mut a = vec![vec![Complex64::new(0.0, 0.0); d]; d];
            let mut b = vec![vec![Complex64::new(0.0, 0.0); d]; d];
            for i in 0..d {
                a[i][i] = Complex64::new(rnd(), 0.0);
                b[i][i] = Complex64::new(rnd(), 0.0);
                for j in (i + 1)..d {
                    a[i][j] = Complex64::new(rnd(), rnd());
                    a[j][i] = a[i][j].conj();
                    b[i][j] = Complex64::new(rnd(), rnd());
                    b[j][i] = b[i][j].conj();
                }
            }
            // tr(AB)
            let mut tr_ab = Complex64::new(0.0, 0.0);
            for i in 0..d {
                for k in 0..d {
                    tr_ab += a[i][k] * b[k][i];
                }
            }
            let (la, lb) = (lambda(&a), lambda(&b));
            let mut prod = vec![vec![0.0; 2 * d]; 2 * d];
            for i in 0..2 * d {
                for j in 0..2 * d {
                    for k in 0..2 * d {
                        prod[i][j] += la[i][k] * lb[k][j];
                    }
                }
            }
            assert!((trace(&prod) - 2.0 * tr_ab.re).abs() < 1e-10);
            assert!(tr_ab.im.abs() < 1e-10);
        }
    }
}
