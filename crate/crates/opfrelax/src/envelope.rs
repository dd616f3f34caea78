//! Convex envelopes for the nonlinear terms of the polar OPF formulation:
//! squares, bilinear products, cosine/sine over a bounded angle, trilinear
//! extreme-point (λ) hulls, the cross-envelope linking equality and the 2×2
//! second-order minor.

use crate::expr::{AffineCutSet, LinExpr, Sense, Var, VarSource};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("angle bounds [{lo}, {hi}] outside ±π/2")]
    AngleOutOfRange { lo: f64, hi: f64 },
    #[error("λ envelopes built on different (v_i, v_j) grids")]
    MismatchedGrids,
}

/// Closed real interval with `lo ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, EnvelopeError> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(EnvelopeError::InvalidInterval { lo, hi })
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Linear interpolation weight of `x` toward the upper endpoint.
    fn unit_coord(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.lo) / self.width()
        }
    }
}

/// An envelope that introduced one lifted (hat) variable.
#[derive(Debug, Clone)]
pub struct LiftedEnvelope {
    pub hat: Var,
    pub cuts: AffineCutSet,
}

/// T-CONV: convex hull of `x̂ = x²` over an interval.
///
/// Emits `x̂ ≥ x²` (second-order representable) and the secant upper bound
/// `x̂ ≤ (x⁽ᵘ⁾+x⁽ˡ⁾)·x − x⁽ᵘ⁾x⁽ˡ⁾`.
pub fn square_envelope(
    x: Var,
    bounds: Interval,
    pool: &mut dyn VarSource,
) -> Result<LiftedEnvelope, EnvelopeError> {
    let hat = pool.fresh("sq_hat");
    let cuts = square_envelope_on(x, hat, bounds);
    Ok(LiftedEnvelope { hat, cuts })
}

/// Square envelope cuts over a caller-supplied hat variable.
pub fn square_envelope_on(x: Var, hat: Var, bounds: Interval) -> AffineCutSet {
    let mut cuts = AffineCutSet::new();
    cuts.push_quad(LinExpr::var(x), LinExpr::var(hat));
    cuts.push(
        LinExpr::var(hat).add(x, -(bounds.hi + bounds.lo)),
        Sense::Le,
        -bounds.hi * bounds.lo,
    );
    cuts
}

/// M-CONV: the four McCormick cuts for `x̂y = x·y` over a box.
pub fn mccormick_bilinear(
    x: Var,
    y: Var,
    bx: Interval,
    by: Interval,
    pool: &mut dyn VarSource,
) -> Result<LiftedEnvelope, EnvelopeError> {
    let hat = pool.fresh("bilin_hat");
    let cuts = mccormick_bilinear_on(x, y, hat, bx, by);
    Ok(LiftedEnvelope { hat, cuts })
}

/// McCormick cuts over a caller-supplied product variable.
pub fn mccormick_bilinear_on(x: Var, y: Var, hat: Var, bx: Interval, by: Interval) -> AffineCutSet {
    let mut cuts = AffineCutSet::new();
    // x̂y ≥ x⁽ˡ⁾y + y⁽ˡ⁾x − x⁽ˡ⁾y⁽ˡ⁾
    cuts.push(
        LinExpr::var(hat).add(y, -bx.lo).add(x, -by.lo),
        Sense::Ge,
        -bx.lo * by.lo,
    );
    // x̂y ≥ x⁽ᵘ⁾y + y⁽ᵘ⁾x − x⁽ᵘ⁾y⁽ᵘ⁾
    cuts.push(
        LinExpr::var(hat).add(y, -bx.hi).add(x, -by.hi),
        Sense::Ge,
        -bx.hi * by.hi,
    );
    // x̂y ≤ x⁽ˡ⁾y + y⁽ᵘ⁾x − x⁽ˡ⁾y⁽ᵘ⁾
    cuts.push(
        LinExpr::var(hat).add(y, -bx.lo).add(x, -by.hi),
        Sense::Le,
        -bx.lo * by.hi,
    );
    // x̂y ≤ x⁽ᵘ⁾y + y⁽ˡ⁾x − x⁽ᵘ⁾y⁽ˡ⁾
    cuts.push(
        LinExpr::var(hat).add(y, -bx.hi).add(x, -by.lo),
        Sense::Le,
        -bx.hi * by.lo,
    );
    cuts
}

/// Cosine and sine envelopes over a shared angle variable.
#[derive(Debug, Clone)]
pub struct TrigEnvelopes {
    pub cos: LiftedEnvelope,
    pub sin: LiftedEnvelope,
    /// Range the cosine hat can take over the angle interval.
    pub cos_range: Interval,
    /// Range the sine hat can take over the angle interval.
    pub sin_range: Interval,
}

/// C-CONV and S-CONV for an angle restricted to `[θ⁽ˡ⁾, θ⁽ᵘ⁾] ⊆ [−π/2, π/2]`.
///
/// Cosine: quadratic upper cut with curvature `(1 − cos θᵐ)/(θᵐ)²` and the
/// secant lower cut. Sine: tangents at `±θᵐ/2`, plus the secant on the side
/// selected by the sign of the bounds (below when `θ⁽ˡ⁾ ≥ 0`, above when
/// `θ⁽ᵘ⁾ ≤ 0`, absent for mixed-sign bounds). `θᵐ = max(|θ⁽ˡ⁾|, |θ⁽ᵘ⁾|)`.
pub fn trig_envelopes(
    theta: Var,
    bounds: Interval,
    pool: &mut dyn VarSource,
) -> Result<TrigEnvelopes, EnvelopeError> {
    let (lo, hi) = (bounds.lo, bounds.hi);
    if lo < -std::f64::consts::FRAC_PI_2 || hi > std::f64::consts::FRAC_PI_2 {
        return Err(EnvelopeError::AngleOutOfRange { lo, hi });
    }
    let cos_hat = pool.fresh("cos_hat");
    let sin_hat = pool.fresh("sin_hat");
    let theta_m = lo.abs().max(hi.abs());

    let mut cos_cuts = AffineCutSet::new();
    let mut sin_cuts = AffineCutSet::new();

    if bounds.is_degenerate() {
        cos_cuts.push(LinExpr::var(cos_hat), Sense::Eq, lo.cos());
        sin_cuts.push(LinExpr::var(sin_hat), Sense::Eq, lo.sin());
        return Ok(TrigEnvelopes {
            cos: LiftedEnvelope {
                hat: cos_hat,
                cuts: cos_cuts,
            },
            sin: LiftedEnvelope {
                hat: sin_hat,
                cuts: sin_cuts,
            },
            cos_range: Interval::new(lo.cos(), lo.cos())?,
            sin_range: Interval::new(lo.sin(), lo.sin())?,
        });
    }

    // cosine upper: θ̂c ≤ 1 − k·θ², k = (1 − cos θᵐ)/(θᵐ)²
    let k = (1.0 - theta_m.cos()) / (theta_m * theta_m);
    cos_cuts.push_quad(
        LinExpr::term(theta, k.sqrt()),
        LinExpr::term(cos_hat, -1.0).offset(1.0),
    );
    // cosine lower secant through (θl, cos θl) and (θu, cos θu)
    let cos_slope = (lo.cos() - hi.cos()) / (lo - hi);
    cos_cuts.push(
        LinExpr::var(cos_hat).add(theta, -cos_slope),
        Sense::Ge,
        lo.cos() - cos_slope * lo,
    );

    // sine tangents at ±θᵐ/2
    let half = theta_m / 2.0;
    let (c_h, s_h) = (half.cos(), half.sin());
    // θ̂s ≤ cos(θᵐ/2)(θ − θᵐ/2) + sin(θᵐ/2)
    sin_cuts.push(
        LinExpr::var(sin_hat).add(theta, -c_h),
        Sense::Le,
        s_h - c_h * half,
    );
    // θ̂s ≥ cos(θᵐ/2)(θ + θᵐ/2) − sin(θᵐ/2)
    sin_cuts.push(
        LinExpr::var(sin_hat).add(theta, -c_h),
        Sense::Ge,
        -s_h + c_h * half,
    );
    let sin_slope = (lo.sin() - hi.sin()) / (lo - hi);
    let sin_secant_rhs = lo.sin() - sin_slope * lo;
    if lo >= 0.0 {
        // sine convex side: secant is a valid lower bound
        sin_cuts.push(
            LinExpr::var(sin_hat).add(theta, -sin_slope),
            Sense::Ge,
            sin_secant_rhs,
        );
    } else if hi <= 0.0 {
        sin_cuts.push(
            LinExpr::var(sin_hat).add(theta, -sin_slope),
            Sense::Le,
            sin_secant_rhs,
        );
    }

    let cos_lo = lo.cos().min(hi.cos());
    let cos_hi = if bounds.contains(0.0) {
        1.0
    } else {
        lo.cos().max(hi.cos())
    };
    Ok(TrigEnvelopes {
        cos: LiftedEnvelope {
            hat: cos_hat,
            cuts: cos_cuts,
        },
        sin: LiftedEnvelope {
            hat: sin_hat,
            cuts: sin_cuts,
        },
        cos_range: Interval::new(cos_lo, cos_hi)?,
        sin_range: Interval::new(lo.sin(), hi.sin())?,
    })
}

/// Extreme-point (λ) formulation of the trilinear hull.
#[derive(Debug, Clone)]
pub struct LambdaEnvelope {
    pub coords: [Var; 3],
    pub boxes: [Interval; 3],
    /// Product variable x̂.
    pub product: Var,
    /// Multiplier variables λ₁..λ₈ in canonical corner order.
    pub weights: [Var; 8],
    /// ξ₁..ξ₈: corners of the box, first coordinate slowest, third fastest.
    pub corners: [[f64; 3]; 8],
    pub cuts: AffineCutSet,
}

impl LambdaEnvelope {
    /// Tensor-product interpolation weights certifying an interior point.
    ///
    /// At any `(x₁,x₂,x₃)` inside the box these weights are feasible for the
    /// envelope and reproduce the exact product `x₁x₂x₃`.
    pub fn interpolation_weights(&self, point: [f64; 3]) -> [f64; 8] {
        let u: Vec<f64> = (0..3)
            .map(|i| self.boxes[i].unit_coord(point[i]))
            .collect();
        let mut w = [0.0; 8];
        for (k, corner) in self.corners.iter().enumerate() {
            let mut p = 1.0;
            for i in 0..3 {
                let hi_corner = corner[i] == self.boxes[i].hi && !self.boxes[i].is_degenerate();
                p *= if hi_corner { u[i] } else { 1.0 - u[i] };
            }
            w[k] = p;
        }
        w
    }
}

/// Build the λ envelope of `x̂ = x₁x₂x₃` over the given boxes.
///
/// Constraints: `x̂ = Σ λₖ φ(ξₖ)`, `xᵢ = Σ λₖ ξₖⁱ`, `Σ λₖ = 1`, `λ ≥ 0`,
/// with corners in canonical order (first coordinate slowest).
pub fn trilinear_lambda_envelope(
    coords: [Var; 3],
    boxes: [Interval; 3],
    pool: &mut dyn VarSource,
) -> Result<LambdaEnvelope, EnvelopeError> {
    let product = pool.fresh("tri_hat");
    let weights: [Var; 8] = std::array::from_fn(|k| pool.fresh(&format!("lambda{}", k + 1)));

    let mut corners = [[0.0; 3]; 8];
    for (k, corner) in corners.iter_mut().enumerate() {
        for i in 0..3 {
            let pick_hi = (k >> (2 - i)) & 1 == 1;
            corner[i] = if pick_hi { boxes[i].hi } else { boxes[i].lo };
        }
    }

    let mut cuts = AffineCutSet::new();
    // x̂ = Σ λₖ φ(ξₖ)
    let mut prod_row = LinExpr::var(product);
    for (k, c) in corners.iter().enumerate() {
        prod_row = prod_row.add(weights[k], -(c[0] * c[1] * c[2]));
    }
    cuts.push(prod_row, Sense::Eq, 0.0);
    // xᵢ = Σ λₖ ξₖⁱ
    for i in 0..3 {
        let mut row = LinExpr::var(coords[i]);
        for (k, c) in corners.iter().enumerate() {
            row = row.add(weights[k], -c[i]);
        }
        cuts.push(row, Sense::Eq, 0.0);
    }
    // Σ λₖ = 1, λ ≥ 0
    let mut sum = LinExpr::default();
    for w in weights {
        sum = sum.add(w, 1.0);
        cuts.push(LinExpr::var(w), Sense::Ge, 0.0);
    }
    cuts.push(sum, Sense::Eq, 1.0);

    Ok(LambdaEnvelope {
        coords,
        boxes,
        product,
        weights,
        corners,
        cuts,
    })
}

/// Linking constraints between the cosine- and sine-side λ envelopes of one
/// branch: both must imply the same bilinear voltage product. Corners are
/// grouped in pairs sharing a `(vᵢ, vⱼ)` corner (third coordinate fastest),
/// and each paired λ sum, weighted by its corner product, must agree across
/// the two envelopes: one equality per corner group.
///
/// Any point of either trilinear graph admits tensor-product interpolation
/// weights whose group sums depend only on the `(vᵢ, vⱼ)` coordinates, so
/// the constraints never cut a feasible point.
pub fn linking_constraints(
    lam_c: &LambdaEnvelope,
    lam_s: &LambdaEnvelope,
) -> Result<AffineCutSet, EnvelopeError> {
    if lam_c.boxes[0] != lam_s.boxes[0] || lam_c.boxes[1] != lam_s.boxes[1] {
        return Err(EnvelopeError::MismatchedGrids);
    }
    let mut cuts = AffineCutSet::new();
    for group in 0..4 {
        let k0 = 2 * group;
        let vv = lam_c.corners[k0][0] * lam_c.corners[k0][1];
        let row = LinExpr::default()
            .add(lam_c.weights[k0], vv)
            .add(lam_c.weights[k0 + 1], vv)
            .add(lam_s.weights[k0], -vv)
            .add(lam_s.weights[k0 + 1], -vv);
        cuts.push(row.compact(), Sense::Eq, 0.0);
    }
    Ok(cuts)
}

/// Rotated second-order constraint `s·t ≥ ‖u‖²` with `s, t ≥ 0`.
#[derive(Debug, Clone)]
pub struct RotatedSocCut {
    pub s: LinExpr,
    pub t: LinExpr,
    pub u: Vec<LinExpr>,
}

impl RotatedSocCut {
    /// Signed violation: positive means infeasible.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let s = self.s.eval(x);
        let t = self.t.eval(x);
        let nu: f64 = self.u.iter().map(|e| e.eval(x).powi(2)).sum();
        (nu - s * t).max(-s).max(-t)
    }
}

/// 2×2 Hermitian minor constraint `|W_ij|² ≤ W_ii·W_jj` as a rotated cone.
pub fn soc_minor_cut(w_ii: Var, w_jj: Var, w_re: Var, w_im: Var) -> RotatedSocCut {
    RotatedSocCut {
        s: LinExpr::var(w_ii),
        t: LinExpr::var(w_jj),
        u: vec![LinExpr::var(w_re), LinExpr::var(w_im)],
    }
}
