//! Small dense symmetric eigensolver (cyclic Jacobi) used for solution
//! recovery and residual verification. Block dimensions here are clique
//! sized, so the O(n³) sweeps are negligible next to the conic solve.

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if n <= 1 {
        return (m.iter().map(|r| r.first().copied().unwrap_or(0.0)).collect(), v);
    }

    let off = |m: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += m[p][q] * m[p][q];
            }
        }
        s
    };
    let scale: f64 = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1e-300);

    for _sweep in 0..64 {
        if off(&m).sqrt() <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let mut vectors = vec![vec![0.0; n]; n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r][new_col] = v[r][old_col];
        }
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &[Vec<f64>]) -> f64 {
    sym_eigen(a).0.first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_eigenvalues() {
        let a = vec![
            vec![3.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ];
        let (vals, _) = sym_eigen(&a);
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_from_factorization() {
        // A = QᵀΛQ must reproduce A
        let a = vec![
            vec![4.0, 1.0, -2.0],
            vec![1.0, 2.0, 0.5],
            vec![-2.0, 0.5, 3.0],
        ];
        let (vals, vecs) = sym_eigen(&a);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += vecs[i][k] * vals[k] * vecs[j][k];
                }
                assert!((acc - a[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_one_matrix() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let n = u.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = u[i] * u[j];
            }
        }
        let (vals, vecs) = sym_eigen(&a);
        let norm2: f64 = u.iter().map(|x| x * x).sum();
        assert!((vals[n - 1] - norm2).abs() < 1e-10);
        for v in vals.iter().take(n - 1) {
            assert!(v.abs() < 1e-10);
        }
        // leading eigenvector is ±u/‖u‖
        let lead: Vec<f64> = (0..n).map(|i| vecs[i][n - 1]).collect();
        let dot: f64 = lead.iter().zip(&u).map(|(a, b)| a * b).sum();
        for i in 0..n {
            assert!((lead[i] - dot.signum() * u[i] / norm2.sqrt()).abs() < 1e-10);
        }
    }
}
