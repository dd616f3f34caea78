//! Scalar variables, affine expressions and cut containers shared by the
//! envelope, cut and model-assembly layers.

use serde::Serialize;

/// Handle to a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Var(pub usize);

/// Anything that can mint fresh scalar variables.
pub trait VarSource {
    fn fresh(&mut self, label: &str) -> Var;
}

/// Trivial allocator used by tests and standalone envelope construction.
#[derive(Debug, Default)]
pub struct VarPool {
    next: usize,
    labels: Vec<String>,
}

impl VarPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.next
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }

    pub fn label(&self, v: Var) -> &str {
        &self.labels[v.0]
    }
}

impl VarSource for VarPool {
    fn fresh(&mut self, label: &str) -> Var {
        let v = Var(self.next);
        self.next += 1;
        self.labels.push(label.to_string());
        v
    }
}

/// Sparse affine expression `Σ cᵢ·xᵢ + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: vec![],
            constant: c,
        }
    }

    pub fn var(v: Var) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(v: Var, coeff: f64) -> Self {
        LinExpr {
            terms: vec![(v, coeff)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, v: Var, coeff: f64) -> Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for (_, c) in &mut self.terms {
            *c *= k;
        }
        self.constant *= k;
        self
    }

    /// Merge duplicate variables and drop zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|(v, _)| *v);
        let mut out: Vec<(Var, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        self.terms = out;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(v, c)| acc + c * x[v.0])
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.iter().all(|(_, c)| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// Affine constraint `expr (sense) rhs`.
#[derive(Debug, Clone)]
pub struct AffineCut {
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl AffineCut {
    pub fn new(expr: LinExpr, sense: Sense, rhs: f64) -> Self {
        AffineCut { expr, sense, rhs }
    }

    /// Signed violation: positive means the point breaks the cut.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.expr.eval(x);
        match self.sense {
            Sense::Eq => (v - self.rhs).abs(),
            Sense::Le => v - self.rhs,
            Sense::Ge => self.rhs - v,
        }
    }
}

/// Convex quadratic cut `lhs² ≤ rhs`, second-order representable.
///
/// `pad` relaxes the realized cone by a constant (the cut becomes
/// `lhs² ≤ rhs + pad`); cuts that sit exactly on the cone tip at the
/// optimum use a microscopic pad so the interior-point geometry stays
/// nondegenerate. The cut-level violation ignores it.
#[derive(Debug, Clone)]
pub struct QuadCut {
    pub lhs: LinExpr,
    pub rhs: LinExpr,
    pub pad: f64,
}

impl QuadCut {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs.eval(x);
        l * l - self.rhs.eval(x)
    }
}

/// A bundle of affine and second-order-representable cuts.
#[derive(Debug, Clone, Default)]
pub struct AffineCutSet {
    pub affine: Vec<AffineCut>,
    pub quadratic: Vec<QuadCut>,
}

impl AffineCutSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, expr: LinExpr, sense: Sense, rhs: f64) {
        debug_assert!(expr.is_finite() && rhs.is_finite());
        self.affine.push(AffineCut::new(expr, sense, rhs));
    }

    pub fn push_quad(&mut self, lhs: LinExpr, rhs: LinExpr) {
        debug_assert!(lhs.is_finite() && rhs.is_finite());
        self.quadratic.push(QuadCut { lhs, rhs, pad: 0.0 });
    }

    pub fn push_quad_padded(&mut self, lhs: LinExpr, rhs: LinExpr, pad: f64) {
        debug_assert!(lhs.is_finite() && rhs.is_finite());
        self.quadratic.push(QuadCut { lhs, rhs, pad });
    }

    pub fn extend(&mut self, other: AffineCutSet) {
        self.affine.extend(other.affine);
        self.quadratic.extend(other.quadratic);
    }

    pub fn len(&self) -> usize {
        self.affine.len() + self.quadratic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.affine.is_empty() && self.quadratic.is_empty()
    }

    /// Largest violation over all cuts at the given point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let a = self
            .affine
            .iter()
            .map(|c| c.violation(x))
            .fold(f64::NEG_INFINITY, f64::max);
        let q = self
            .quadratic
            .iter()
            .map(|c| c.violation(x))
            .fold(f64::NEG_INFINITY, f64::max);
        a.max(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_merges_and_drops_zeros() {
        let e = LinExpr::var(Var(1))
            .add(Var(0), 2.0)
            .add(Var(1), -1.0)
            .add(Var(2), 0.0)
            .offset(3.0)
            .compact();
        assert_eq!(e.terms, vec![(Var(0), 2.0)]);
        assert_eq!(e.constant, 3.0);
    }

    #[test]
    fn violation_signs() {
        let x = [2.0];
        let le = AffineCut::new(LinExpr::var(Var(0)), Sense::Le, 1.0);
        let ge = AffineCut::new(LinExpr::var(Var(0)), Sense::Ge, 3.0);
        assert!(le.violation(&x) > 0.0);
        assert!(ge.violation(&x) > 0.0);
        let ok = AffineCut::new(LinExpr::var(Var(0)), Sense::Le, 2.5);
        assert!(ok.violation(&x) < 0.0);
    }
}
