//! Lowering of a model instance to the conic standard form.

use super::{AffExpr, ConicError, ConicProgram, PsdBlock, RsocBlock, SocBlock};
use crate::expr::{LinExpr, Sense};
use crate::relax::ModelInstance;

fn lower_expr(e: &LinExpr) -> AffExpr {
    let c = e.clone().compact();
    AffExpr {
        cols: c.terms.iter().map(|(v, _)| v.0).collect(),
        vals: c.terms.iter().map(|(_, k)| *k).collect(),
        constant: c.constant,
    }
}

/// Assemble a solved-form conic program from a model instance.
///
/// Variable ordering follows the registry exactly; finite variable bounds
/// become nonnegative rows; quadratic cuts and generator epigraphs are
/// already rotated-cone shaped and map one to one.
pub fn assemble(model: &ModelInstance) -> Result<ConicProgram, ConicError> {
    let n = model.vars.len();
    let mut p = ConicProgram {
        n_vars: n,
        objective: vec![0.0; n],
        obj_constant: model.objective.constant,
        ..Default::default()
    };
    for &(v, c) in &model.objective.terms {
        p.objective[v.0] += c;
    }

    // variable boxes
    for i in 0..n {
        let (lo, hi) = model.vars.bounds(crate::expr::Var(i));
        if lo.is_finite() {
            p.nonneg_rows.push(AffExpr {
                cols: vec![i],
                vals: vec![1.0],
                constant: -lo,
            });
        }
        if hi.is_finite() {
            p.nonneg_rows.push(AffExpr {
                cols: vec![i],
                vals: vec![-1.0],
                constant: hi,
            });
        }
    }

    for cut in &model.cuts.affine {
        let mut e = lower_expr(&cut.expr);
        e.constant -= cut.rhs;
        match cut.sense {
            Sense::Eq => p.eq_rows.push(e),
            Sense::Ge => p.nonneg_rows.push(e),
            Sense::Le => {
                for v in &mut e.vals {
                    *v = -*v;
                }
                e.constant = -e.constant;
                p.nonneg_rows.push(e);
            }
        }
    }
    // lhs² ≤ rhs as a rotated cone with unit second leg
    for q in &model.cuts.quadratic {
        let mut s_expr = lower_expr(&q.rhs);
        s_expr.constant += q.pad;
        p.rsoc_blocks.push(RsocBlock {
            s: s_expr,
            t: AffExpr::constant(1.0),
            u: vec![lower_expr(&q.lhs)],
        });
    }
    for soc in &model.socs {
        p.soc_blocks.push(SocBlock {
            t: lower_expr(&soc.t),
            u: soc.u.iter().map(lower_expr).collect(),
        });
    }
    for r in &model.rsocs {
        p.rsoc_blocks.push(RsocBlock {
            s: lower_expr(&r.s),
            t: lower_expr(&r.t),
            u: r.u.iter().map(lower_expr).collect(),
        });
    }
    for b in &model.psd_blocks {
        p.psd_blocks.push(PsdBlock {
            dim: b.dim,
            entries: b.entries.iter().map(lower_expr).collect(),
        });
    }

    p.validate()?;
    Ok(p)
}
