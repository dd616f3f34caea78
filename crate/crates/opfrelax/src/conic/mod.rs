//! Solver-agnostic conic standard form, backend contract, residual
//! verification, SDPA export and gap computation.

mod assemble;
mod clarabel_backend;
mod probe;
mod sdpa;

pub use assemble::assemble;
pub use clarabel_backend::ClarabelBackend;
pub use probe::run_calibration_probes;
pub use sdpa::{export_sdpa, read_sdpa, write_sdpa_string};

use crate::linalg::min_eigenvalue;
use serde::Serialize;
use thiserror::Error;

/// Default interior-point tolerance.
pub const DEFAULT_TOL: f64 = 1.49e-8;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("program references variable {var} beyond count {n}")]
    UnregisteredVariable { var: usize, n: usize },
    #[error("solver backend failed: {0}")]
    Backend(String),
    #[error("SDPA export requires linear+PSD form: {0}")]
    UnsupportedCone(String),
    #[error("SDPA parse error at line {line}: {msg}")]
    SdpaParse { line: usize, msg: String },
    #[error("reference objective must be positive (got {0})")]
    NonpositiveReference(f64),
}

/// Sparse affine expression `constant + Σ valsᵢ·x[colsᵢ]` with sorted,
/// unique column indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffExpr {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub constant: f64,
}

impl AffExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(&self.vals)
            .fold(self.constant, |acc, (&c, &v)| acc + v * x[c])
    }

    pub fn constant(c: f64) -> Self {
        AffExpr {
            cols: vec![],
            vals: vec![],
            constant: c,
        }
    }
}

/// Second-order block: `(t, u…) with ‖u‖ ≤ t`, all entries affine.
#[derive(Debug, Clone)]
pub struct SocBlock {
    pub t: AffExpr,
    pub u: Vec<AffExpr>,
}

/// Rotated second-order block in product form: `s·t ≥ ‖u‖², s,t ≥ 0`.
#[derive(Debug, Clone)]
pub struct RsocBlock {
    pub s: AffExpr,
    pub t: AffExpr,
    pub u: Vec<AffExpr>,
}

/// Real symmetric PSD block with affine entries in column-major
/// upper-triangle order (unscaled matrix entries).
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub dim: usize,
    pub entries: Vec<AffExpr>,
}

impl PsdBlock {
    /// Dense numeric matrix at a point.
    pub fn dense(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim;
        let mut m = vec![vec![0.0; n]; n];
        let mut it = self.entries.iter();
        for q in 0..n {
            for p in 0..=q {
                let v = it.next().expect("svec length").eval(x);
                m[p][q] = v;
                m[q][p] = v;
            }
        }
        m
    }
}

/// Solver-agnostic conic program: minimize `objective·x + constant` subject
/// to affine rows and cone blocks.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub obj_constant: f64,
    /// `expr = 0` rows.
    pub eq_rows: Vec<AffExpr>,
    /// `expr ≥ 0` rows.
    pub nonneg_rows: Vec<AffExpr>,
    pub soc_blocks: Vec<SocBlock>,
    pub rsoc_blocks: Vec<RsocBlock>,
    pub psd_blocks: Vec<PsdBlock>,
}

impl ConicProgram {
    /// Check that every referenced column is in range.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.n_vars;
        let check = |e: &AffExpr| -> Result<(), ConicError> {
            for &c in &e.cols {
                if c >= n {
                    return Err(ConicError::UnregisteredVariable { var: c, n });
                }
            }
            Ok(())
        };
        for e in self.eq_rows.iter().chain(&self.nonneg_rows) {
            check(e)?;
        }
        for b in &self.soc_blocks {
            check(&b.t)?;
            for u in &b.u {
                check(u)?;
            }
        }
        for b in &self.rsoc_blocks {
            check(&b.s)?;
            check(&b.t)?;
            for u in &b.u {
                check(u)?;
            }
        }
        for b in &self.psd_blocks {
            if b.entries.len() != b.dim * (b.dim + 1) / 2 {
                return Err(ConicError::UnsupportedCone(format!(
                    "PSD block of dim {} has {} entries",
                    b.dim,
                    b.entries.len()
                )));
            }
            for e in &b.entries {
                check(e)?;
            }
        }
        Ok(())
    }

    pub fn n_constraint_rows(&self) -> usize {
        self.eq_rows.len()
            + self.nonneg_rows.len()
            + self.soc_blocks.iter().map(|b| 1 + b.u.len()).sum::<usize>()
            + self
                .rsoc_blocks
                .iter()
                .map(|b| 2 + b.u.len())
                .sum::<usize>()
            + self
                .psd_blocks
                .iter()
                .map(|b| b.entries.len())
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Inaccurate,
    Infeasible,
    Unbounded,
    Failed,
}

/// Residuals of a primal point, measured directly on the program data.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ResidualReport {
    pub max_eq_violation: f64,
    pub max_ineq_violation: f64,
    /// Most negative PSD block eigenvalue (0 when no blocks).
    pub min_psd_eigenvalue: f64,
    pub max_soc_violation: f64,
    pub max_rsoc_violation: f64,
}

impl ResidualReport {
    /// Residual gate used before trusting a solution labeled optimal.
    pub fn passes(&self, tol: f64) -> bool {
        let slack = 10.0 * tol;
        self.max_eq_violation <= slack
            && self.max_ineq_violation <= slack
            && self.min_psd_eigenvalue >= -slack
            && self.max_soc_violation <= slack
            && self.max_rsoc_violation <= slack
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Objective value including the program constant.
    pub objective: f64,
    /// Dual objective (certified lower side of the primal-dual enclosure),
    /// including the program constant; NaN when the backend gives none.
    pub objective_dual: f64,
    pub primal: Vec<f64>,
    /// Dual values for the stacked constraint rows, when the backend
    /// provides them.
    pub dual: Vec<f64>,
    pub residuals: ResidualReport,
    pub solve_seconds: f64,
    pub iterations: u32,
    /// Tolerance the backend was asked to reach.
    pub tolerance: f64,
    pub backend: String,
}

/// Contract for in-process conic backends.
pub trait SolverBackend {
    fn name(&self) -> &'static str;
    /// Solve to the given tolerance. Implementations must fill residuals
    /// via [`check_residuals`] and never report `Optimal` for points that
    /// fail the residual gate.
    fn solve(&self, program: &ConicProgram, tol: f64) -> Result<Solution, ConicError>;
}

/// Evaluate all constraint residuals at a primal point. Cone violations
/// are measured relative to the magnitude of the participating terms, so
/// the gate stays meaningful for quadratic forms whose error is second
/// order in the solution accuracy.
pub fn check_residuals(program: &ConicProgram, x: &[f64]) -> ResidualReport {
    let mut r = ResidualReport::default();
    for e in &program.eq_rows {
        r.max_eq_violation = r.max_eq_violation.max(e.eval(x).abs() / (1.0 + e.constant.abs()));
    }
    for e in &program.nonneg_rows {
        r.max_ineq_violation = r
            .max_ineq_violation
            .max(-e.eval(x) / (1.0 + e.constant.abs()));
    }
    for b in &program.soc_blocks {
        let t = b.t.eval(x);
        let norm = b
            .u
            .iter()
            .map(|e| e.eval(x).powi(2))
            .sum::<f64>()
            .sqrt();
        r.max_soc_violation = r.max_soc_violation.max((norm - t) / (1.0 + t.abs()));
    }
    for b in &program.rsoc_blocks {
        let s = b.s.eval(x);
        let t = b.t.eval(x);
        let nu: f64 = b.u.iter().map(|e| e.eval(x).powi(2)).sum();
        let scale = 1.0 + nu.abs() + (s * t).abs();
        r.max_rsoc_violation = r
            .max_rsoc_violation
            .max((nu - s * t) / scale)
            .max(-s / (1.0 + s.abs()))
            .max(-t / (1.0 + t.abs()));
    }
    for b in &program.psd_blocks {
        let m = b.dense(x);
        let scale = 1.0
            + m.iter()
                .flat_map(|row| row.iter())
                .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        let eig = min_eigenvalue(&m);
        r.min_psd_eigenvalue = r.min_psd_eigenvalue.min(eig / scale);
    }
    r
}

/// Optimality gap `100·(1 − v_R/v̄)` of a lower bound against a reference
/// objective.
pub fn optimality_gap(lower_bound: f64, reference: f64) -> Result<f64, ConicError> {
    if reference <= 0.0 {
        return Err(ConicError::NonpositiveReference(reference));
    }
    Ok(100.0 * (1.0 - lower_bound / reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(optimality_gap(100.0, 100.0).unwrap(), 0.0);
        let g = optimality_gap(0.9485 * 17552.0, 17552.0).unwrap();
        assert!((g - 5.15).abs() < 1e-9);
        assert!(optimality_gap(1.0, 0.0).is_err());
        assert!(optimality_gap(1.0, -5.0).is_err());
    }

    #[test]
    fn gap_is_antitone_in_the_bound() {
        let mut last = f64::INFINITY;
        for vr in [10.0, 50.0, 99.0, 100.0, 101.0] {
            let g = optimality_gap(vr, 100.0).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn residuals_flag_constructed_violation() {
        let program = ConicProgram {
            n_vars: 1,
            objective: vec![0.0],
            obj_constant: 0.0,
            psd_blocks: vec![PsdBlock {
                dim: 2,
                entries: vec![
                    AffExpr {
                        cols: vec![0],
                        vals: vec![1.0],
                        constant: 0.0,
                    },
                    AffExpr::constant(0.5),
                    AffExpr {
                        cols: vec![0],
                        vals: vec![1.0],
                        constant: -1e-3,
                    },
                ],
            }],
            ..Default::default()
        };
        // x = 1: matrix [[1, .5], [.5, 1 − 1e−3]] is fine
        let ok = check_residuals(&program, &[1.0]);
        assert!(ok.min_psd_eigenvalue >= 0.0);
        assert!(ok.passes(1e-8));
        // x = 0.5: [[0.5, 0.5], [0.5, 0.499]] has a negative eigenvalue
        let bad = check_residuals(&program, &[0.5]);
        assert!(bad.min_psd_eigenvalue < -1e-4);
        assert!(!bad.passes(1e-8));
    }

    #[test]
    fn exact_point_has_tiny_residuals() {
        let program = ConicProgram {
            n_vars: 2,
            objective: vec![1.0, 1.0],
            obj_constant: 0.0,
            eq_rows: vec![AffExpr {
                cols: vec![0, 1],
                vals: vec![1.0, -1.0],
                constant: 0.0,
            }],
            nonneg_rows: vec![AffExpr {
                cols: vec![0],
                vals: vec![1.0],
                constant: -3.0,
            }],
            soc_blocks: vec![SocBlock {
                t: AffExpr {
                    cols: vec![0],
                    vals: vec![1.0],
                    constant: 0.0,
                },
                u: vec![AffExpr {
                    cols: vec![1],
                    vals: vec![1.0],
                    constant: 0.0,
                }],
            }],
            ..Default::default()
        };
        let r = check_residuals(&program, &[3.0, 3.0]);
        assert!(r.max_eq_violation <= 1e-12);
        assert!(r.max_ineq_violation <= 1e-12);
        assert!(r.max_soc_violation <= 1e-12);
        assert!(r.passes(1e-8));
    }
}
