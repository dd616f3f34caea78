//! Timing probes for cost-model calibration: small synthetic PSD programs
//! spanning block dimensions and linking-constraint counts.

use super::{AffExpr, ConicProgram, PsdBlock, SolverBackend};
use crate::chordal::Probe;

struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// One synthetic probe instance: a dense d×d PSD block with unit diagonal,
/// `l_c` pinned off-diagonal entries and a random linear objective.
fn probe_program(d: usize, l_c: usize, seed: u64) -> ConicProgram {
    let mut rng = Lcg(seed);
    let nvars = d * (d + 1) / 2;
    let col = |i: usize| AffExpr {
        cols: vec![i],
        vals: vec![1.0],
        constant: 0.0,
    };
    let mut p = ConicProgram {
        n_vars: nvars,
        objective: vec![0.0; nvars],
        obj_constant: 0.0,
        ..Default::default()
    };
    // svec layout: entry index of (p, q), p ≤ q, column-major
    let idx = |pp: usize, qq: usize| qq * (qq + 1) / 2 + pp;
    let mut offdiag = Vec::new();
    for q in 0..d {
        for pp in 0..=q {
            if pp == q {
                p.eq_rows.push(AffExpr {
                    cols: vec![idx(pp, q)],
                    vals: vec![1.0],
                    constant: -1.0,
                });
            } else {
                offdiag.push(idx(pp, q));
            }
        }
    }
    for &k in &offdiag {
        p.objective[k] = rng.next_f64() - 0.5;
    }
    // pin l_c entries to small values, emulating linking equalities
    for used in 0..l_c.min(offdiag.len()) {
        let target = 0.1 * (rng.next_f64() - 0.5) / (d as f64).sqrt();
        p.eq_rows.push(AffExpr {
            cols: vec![offdiag[used]],
            vals: vec![1.0],
            constant: -target,
        });
    }
    p.psd_blocks.push(PsdBlock {
        dim: d,
        entries: (0..nvars).map(col).collect(),
    });
    p
}

/// Run the calibration probe battery and return `(d, l_c, seconds per
/// iteration)` samples for the least-squares fit. Probes run sequentially
/// so the timings stay clean.
pub fn run_calibration_probes(
    backend: &dyn SolverBackend,
    tol: f64,
) -> Result<Vec<Probe>, super::ConicError> {
    // realistic post-merge clique sizes; the cubic model is fitted where the
    // merge heuristic actually operates
    let dims = [2usize, 3, 4, 6, 8, 11, 14, 18, 23, 29];
    let lc_grid = [0usize, 3, 10, 28];
    let mut probes = Vec::new();
    for (di, &d) in dims.iter().enumerate() {
        for (li, &lc) in lc_grid.iter().enumerate() {
            let max_lc = d * (d - 1) / 2;
            let lc_eff = lc.min(max_lc / 2);
            let program = probe_program(d, lc_eff, 1000 + (di * 10 + li) as u64);
            let sol = backend.solve(&program, tol)?;
            if sol.iterations > 0 && sol.solve_seconds > 0.0 {
                probes.push((d, lc_eff, sol.solve_seconds / sol.iterations as f64));
            }
        }
    }
    Ok(probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ClarabelBackend, SolveStatus, SolverBackend};

    #[test]
    fn probe_programs_solve() {
        let backend = ClarabelBackend::new();
        for (d, lc, seed) in [(4usize, 2usize, 1u64), (7, 5, 2), (10, 12, 3)] {
            let p = probe_program(d, lc, seed);
            let sol = backend.solve(&p, 1e-8).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "probe d={d} lc={lc}");
            assert!(sol.iterations > 0);
        }
    }
}
