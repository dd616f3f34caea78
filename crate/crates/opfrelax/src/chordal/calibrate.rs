//! Least-squares calibration of the per-iteration cost model.

use super::{f_time, CostCoeffs};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("need at least {min} probe points, got {got}")]
    TooFewProbes { min: usize, got: usize },
    #[error("design matrix is rank deficient (pivot {pivot:.3e})")]
    RankDeficient { pivot: f64 },
}

/// One timing probe: block dimension, linking count, seconds per iteration.
pub type Probe = (usize, usize, f64);

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub coeffs: CostCoeffs,
    /// Root-mean-square residual of the fit, seconds.
    pub residual: f64,
    pub probes: Vec<Probe>,
}

/// Fit `f_t(d, l_c) = κd³ + χd² + μ·l_c³ + ψ` to measured per-iteration
/// times by least squares, clipping negative coefficients to zero.
pub fn calibrate(probes: &[Probe]) -> Result<CalibrationResult, CalibrateError> {
    const MIN_PROBES: usize = 8;
    if probes.len() < MIN_PROBES {
        return Err(CalibrateError::TooFewProbes {
            min: MIN_PROBES,
            got: probes.len(),
        });
    }
    let rows: Vec<[f64; 4]> = probes
        .iter()
        .map(|&(d, lc, _)| {
            let d = d as f64;
            let l = lc as f64;
            [d * d * d, d * d, l * l * l, 1.0]
        })
        .collect();
    let y: Vec<f64> = probes.iter().map(|&(_, _, t)| t).collect();

    // normal equations XᵀX β = Xᵀy with column scaling for conditioning
    let mut scale = [0.0f64; 4];
    for row in &rows {
        for (s, v) in scale.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    for s in &mut scale {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let mut ata = [[0.0f64; 4]; 4];
    let mut aty = [0.0f64; 4];
    for (row, &yi) in rows.iter().zip(&y) {
        let r: Vec<f64> = row.iter().zip(&scale).map(|(v, s)| v / s).collect();
        for i in 0..4 {
            aty[i] += r[i] * yi;
            for j in 0..4 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let beta_scaled = solve4(ata, aty)?;
    let mut beta = [0.0f64; 4];
    for i in 0..4 {
        beta[i] = (beta_scaled[i] / scale[i]).max(0.0);
    }
    let coeffs = CostCoeffs {
        kappa: beta[0],
        chi: beta[1],
        mu: beta[2],
        psi: beta[3],
    };
    let mut sq = 0.0;
    for &(d, lc, t) in probes {
        let e = f_time(d, lc, &coeffs) - t;
        sq += e * e;
    }
    Ok(CalibrationResult {
        coeffs,
        residual: (sq / probes.len() as f64).sqrt(),
        probes: probes.to_vec(),
    })
}

/// Gaussian elimination with partial pivoting for the 4×4 normal system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4], CalibrateError> {
    for col in 0..4 {
        let (pivot_row, pivot) = (col..4)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot < 1e-12 {
            return Err(CalibrateError::RankDeficient { pivot });
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in (col + 1)..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for c in (col + 1)..4 {
            acc -= a[col][c] * x[c];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_synthetic_coefficients() {
        let truth = CostCoeffs {
            kappa: 1e-6,
            chi: 1e-5,
            mu: 1e-7,
            psi: 1e-3,
        };
        let mut probes = Vec::new();
        for d in [2usize, 3, 5, 8, 12, 17, 23, 30, 40] {
            for lc in [0usize, 3, 10, 21] {
                probes.push((d, lc, f_time(d, lc, &truth)));
            }
        }
        let fit = calibrate(&probes).unwrap();
        for (got, want) in [
            (fit.coeffs.kappa, truth.kappa),
            (fit.coeffs.chi, truth.chi),
            (fit.coeffs.mu, truth.mu),
            (fit.coeffs.psi, truth.psi),
        ] {
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "coefficient {got} != {want}"
            );
        }
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn constant_measurements_fit_the_offset() {
        let probes: Vec<Probe> = [2usize, 3, 4, 6, 9, 13, 18, 25]
            .iter()
            .map(|&d| (d, 2 * d + 1, 0.25))
            .collect();
        let fit = calibrate(&probes).unwrap();
        assert!(fit.coeffs.kappa < 1e-9);
        assert!(fit.coeffs.chi < 1e-7);
        assert!(fit.coeffs.mu < 1e-9);
        assert!((fit.coeffs.psi - 0.25).abs() < 1e-6);
    }

    #[test]
    fn too_few_probes_is_an_error() {
        let probes = vec![(2, 1, 0.1); 5];
        assert!(matches!(
            calibrate(&probes),
            Err(CalibrateError::TooFewProbes { .. })
        ));
    }

    #[test]
    fn duplicate_probe_rows_are_rank_deficient() {
        let probes = vec![(4, 2, 0.1); 12];
        assert!(matches!(
            calibrate(&probes),
            Err(CalibrateError::RankDeficient { .. })
        ));
    }
}
