//! In-process interior-point backend built on Clarabel.

use super::{check_residuals, ConicError, ConicProgram, Solution, SolveStatus, SolverBackend};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Clarabel-backed solver. PSD support comes through the system BLAS.
#[derive(Debug, Default, Clone, Copy)]
pub struct ClarabelBackend;

impl ClarabelBackend {
    pub fn new() -> Self {
        ClarabelBackend
    }
}

struct RowStacker {
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

impl RowStacker {
    fn new() -> Self {
        RowStacker {
            triplets: Vec::new(),
            b: Vec::new(),
        }
    }

    /// Push one row of `s = b − A·x` so that `s` equals `scale · expr`.
    fn push(&mut self, expr: &super::AffExpr, scale: f64) {
        let row = self.b.len();
        self.b.push(scale * expr.constant);
        for (&c, &v) in expr.cols.iter().zip(&expr.vals) {
            self.triplets.push((row, c, -scale * v));
        }
    }

    fn into_csc(self, n_cols: usize) -> (CscMatrix<f64>, Vec<f64>) {
        let m = self.b.len();
        let mut triplets = self.triplets;
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = Vec::with_capacity(n_cols + 1);
        let mut rowval = Vec::with_capacity(triplets.len());
        let mut nzval = Vec::with_capacity(triplets.len());
        colptr.push(0);
        let mut k = 0;
        for col in 0..n_cols {
            while k < triplets.len() && triplets[k].1 == col {
                // duplicates cannot arise: AffExpr columns are unique
                rowval.push(triplets[k].0);
                nzval.push(triplets[k].2);
                k += 1;
            }
            colptr.push(rowval.len());
        }
        (CscMatrix::new(m, n_cols, colptr, rowval, nzval), self.b)
    }
}

impl SolverBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, program: &ConicProgram, tol: f64) -> Result<Solution, ConicError> {
        program.validate()?;
        let n = program.n_vars;
        let mut rows = RowStacker::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        if !program.eq_rows.is_empty() {
            for e in &program.eq_rows {
                rows.push(e, 1.0);
            }
            cones.push(SupportedConeT::ZeroConeT(program.eq_rows.len()));
        }
        if !program.nonneg_rows.is_empty() {
            for e in &program.nonneg_rows {
                rows.push(e, 1.0);
            }
            cones.push(SupportedConeT::NonnegativeConeT(program.nonneg_rows.len()));
        }
        for soc in &program.soc_blocks {
            rows.push(&soc.t, 1.0);
            for u in &soc.u {
                rows.push(u, 1.0);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + soc.u.len()));
        }
        // rotated cone s·t ≥ ‖u‖² lowered to ‖(s−t, 2u)‖ ≤ s+t
        for r in &program.rsoc_blocks {
            let plus = add_exprs(&r.s, &r.t, 1.0);
            let minus = add_exprs(&r.s, &r.t, -1.0);
            rows.push(&plus, 1.0);
            rows.push(&minus, 1.0);
            for u in &r.u {
                rows.push(u, 2.0);
            }
            cones.push(SupportedConeT::SecondOrderConeT(2 + r.u.len()));
        }
        for b in &program.psd_blocks {
            let mut it = b.entries.iter();
            for q in 0..b.dim {
                for p in 0..=q {
                    let e = it.next().expect("validated svec length");
                    rows.push(e, if p == q { 1.0 } else { SQRT2 });
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(b.dim));
        }

        let (a, b) = rows.into_csc(n);
        let p = CscMatrix::<f64>::zeros((n, n));
        // objective normalization keeps the interior-point trajectory well
        // scaled for cost functions in natural units ($/h); a couple of
        // unnormalized attempts stay in the ladder because either scaling
        // can win depending on the instance
        let q_scale = program
            .objective
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1e-12);
        let q_norm: Vec<f64> = program.objective.iter().map(|v| v / q_scale).collect();
        let base = DefaultSettings {
            verbose: false,
            tol_gap_abs: tol,
            tol_gap_rel: tol,
            tol_feas: tol,
            max_iter: 400,
            ..Default::default()
        };
        // (settings, use normalized objective); larger instances skip the
        // unnormalized attempts, which scale poorly there
        let large = b.len() >= 3000;
        let grind = DefaultSettings {
            max_iter: 800,
            min_terminate_step_length: 1e-10,
            iterative_refinement_reltol: 1e-16,
            iterative_refinement_abstol: 1e-14,
            iterative_refinement_max_iter: 100,
            static_regularization_constant: 1e-9,
            ..base.clone()
        };
        let attempts: Vec<(DefaultSettings<f64>, bool)> = if large {
            vec![
                (base.clone(), true),
                // deep-refinement attempt: pushes the accuracy floor on
                // instances whose central path stalls near the optimum
                (grind, true),
                (
                    DefaultSettings {
                        equilibrate_enable: false,
                        ..base.clone()
                    },
                    true,
                ),
            ]
        } else {
            vec![
                (base.clone(), true),
                (
                    DefaultSettings {
                        equilibrate_enable: false,
                        ..base.clone()
                    },
                    true,
                ),
                (
                    DefaultSettings {
                        static_regularization_constant: 1e-7,
                        ..base.clone()
                    },
                    false,
                ),
                (
                    DefaultSettings {
                        static_regularization_constant: 1e-6,
                        equilibrate_enable: false,
                        ..base.clone()
                    },
                    false,
                ),
                (grind, true),
                (
                    DefaultSettings {
                        static_regularization_constant: 1e-7,
                        ..base.clone()
                    },
                    true,
                ),
            ]
        };
        let mut total_time = 0.0;
        let mut total_iters = 0u32;
        let mut best: Option<(u8, f64, (SolverStatus, f64, f64, Vec<f64>, Vec<f64>))> = None;
        for (attempt, (settings, normalized)) in attempts.into_iter().enumerate() {
            let (q, scale) = if normalized {
                (&q_norm, q_scale)
            } else {
                (&program.objective, 1.0)
            };
            let mut solver = DefaultSolver::new(&p, q, &a, &b, &cones, settings)
                .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
            solver.solve();
            let sol = &solver.solution;
            total_time += sol.solve_time;
            total_iters += sol.iterations;
            let residuals_ok = check_residuals(program, &sol.x).passes(tol);
            let clean = matches!(sol.status, SolverStatus::Solved) && residuals_ok;
            let definitive = matches!(
                sol.status,
                SolverStatus::PrimalInfeasible | SolverStatus::DualInfeasible
            );
            let rel_gap = (sol.obj_val - sol.obj_val_dual).abs() / sol.obj_val.abs().max(1.0);
            let near = rel_gap.is_finite()
                && rel_gap <= 100.0 * tol
                && check_residuals(program, &sol.x).passes(100.0 * tol);
            let rank = if clean {
                0
            } else if definitive {
                1
            } else if near {
                2
            } else {
                3
            };
            let candidate = (
                rank,
                rel_gap,
                (
                    sol.status,
                    sol.obj_val * scale,
                    sol.obj_val_dual * scale,
                    sol.x.clone(),
                    sol.z.clone(),
                ),
            );
            let replace = match &best {
                None => true,
                Some((brank, bgap, _)) => rank < *brank || (rank == *brank && rel_gap < *bgap),
            };
            if std::env::var("OPFRELAX_SOLVER_DEBUG").is_ok() {
                eprintln!(
                    "attempt {attempt}: {:?} rank={rank} obj={:.6} dual={:.6} relgap={rel_gap:.2e} iters={} {:.2}s",
                    sol.status,
                    sol.obj_val * scale,
                    sol.obj_val_dual * scale,
                    sol.iterations,
                    sol.solve_time
                );
            }
            if replace {
                best = Some(candidate);
            }
            if rank <= 1 || (large && rank == 2 && attempt >= 1) {
                break;
            }
        }
        let (_, _, (raw_status, obj_val, obj_val_dual, primal, dual_vec)) =
            best.expect("at least one attempt runs");
        let _ = &obj_val_dual;

        let residuals = check_residuals(program, &primal);
        let status = match raw_status {
            SolverStatus::Solved => {
                if residuals.passes(tol) {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::Inaccurate
                }
            }
            SolverStatus::AlmostSolved
            | SolverStatus::MaxIterations
            | SolverStatus::MaxTime
            | SolverStatus::NumericalError
            | SolverStatus::InsufficientProgress => SolveStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::Failed,
        };
        // the dual objective is the certified side of the gap; prefer it
        // for bound reporting when it is finite
        let obj = if obj_val_dual.is_finite() && status == SolveStatus::Optimal {
            obj_val_dual
        } else {
            obj_val
        };
        Ok(Solution {
            status,
            objective: obj + program.obj_constant,
            objective_dual: obj_val_dual + program.obj_constant,
            primal,
            dual: dual_vec,
            residuals,
            solve_seconds: total_time,
            iterations: total_iters,
            tolerance: tol,
            backend: self.name().to_string(),
        })
    }
}

fn add_exprs(a: &super::AffExpr, b: &super::AffExpr, sign: f64) -> super::AffExpr {
    let mut cols = a.cols.clone();
    let mut vals = a.vals.clone();
    for (&c, &v) in b.cols.iter().zip(&b.vals) {
        match cols.iter().position(|&x| x == c) {
            Some(k) => vals[k] += sign * v,
            None => {
                cols.push(c);
                vals.push(sign * v);
            }
        }
    }
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by_key(|&k| cols[k]);
    super::AffExpr {
        cols: order.iter().map(|&k| cols[k]).collect(),
        vals: order.iter().map(|&k| vals[k]).collect(),
        constant: a.constant + sign * b.constant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{AffExpr, PsdBlock, RsocBlock};

    #[test]
    fn scalar_lower_bound() {
        // min x s.t. x ≥ 3
        let program = ConicProgram {
            n_vars: 1,
            objective: vec![1.0],
            obj_constant: 0.0,
            nonneg_rows: vec![AffExpr {
                cols: vec![0],
                vals: vec![1.0],
                constant: -3.0,
            }],
            ..Default::default()
        };
        let sol = ClarabelBackend::new()
            .solve(&program, crate::conic::DEFAULT_TOL)
            .unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn schur_complement_psd_solve() {
        // min tr(W) with W ⪰ 0, W11 = 1, W12 = 0.5 → W22 = 0.25
        let x = |i: usize| AffExpr {
            cols: vec![i],
            vals: vec![1.0],
            constant: 0.0,
        };
        let program = ConicProgram {
            n_vars: 3,
            objective: vec![1.0, 0.0, 1.0],
            obj_constant: 0.0,
            eq_rows: vec![
                AffExpr {
                    cols: vec![0],
                    vals: vec![1.0],
                    constant: -1.0,
                },
                AffExpr {
                    cols: vec![1],
                    vals: vec![1.0],
                    constant: -0.5,
                },
            ],
            psd_blocks: vec![PsdBlock {
                dim: 2,
                entries: vec![x(0), x(1), x(2)],
            }],
            ..Default::default()
        };
        let sol = ClarabelBackend::new()
            .solve(&program, crate::conic::DEFAULT_TOL)
            .unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.25).abs() < 1e-6, "{}", sol.objective);
        assert!((sol.primal[2] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn rotated_cone_lowering() {
        // min t s.t. t·1 ≥ x², x ≥ 2 → t = 4
        let program = ConicProgram {
            n_vars: 2,
            objective: vec![0.0, 1.0],
            obj_constant: 0.0,
            nonneg_rows: vec![AffExpr {
                cols: vec![0],
                vals: vec![1.0],
                constant: -2.0,
            }],
            rsoc_blocks: vec![RsocBlock {
                s: AffExpr {
                    cols: vec![1],
                    vals: vec![1.0],
                    constant: 0.0,
                },
                t: AffExpr::constant(1.0),
                u: vec![AffExpr {
                    cols: vec![0],
                    vals: vec![1.0],
                    constant: 0.0,
                }],
            }],
            ..Default::default()
        };
        let sol = ClarabelBackend::new()
            .solve(&program, crate::conic::DEFAULT_TOL)
            .unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 4.0).abs() < 1e-6);
    }

    #[test]
    fn empty_program_is_trivial() {
        let program = ConicProgram {
            n_vars: 1,
            objective: vec![0.0],
            obj_constant: 7.5,
            eq_rows: vec![AffExpr {
                cols: vec![0],
                vals: vec![1.0],
                constant: 0.0,
            }],
            ..Default::default()
        };
        let sol = ClarabelBackend::new()
            .solve(&program, crate::conic::DEFAULT_TOL)
            .unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 7.5).abs() < 1e-9);
    }
}
