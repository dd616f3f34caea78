//! Valid inequalities derived from branch thermal limits: the current-limit
//! boundary surface, analytic angle-bound tightening, voltage-difference
//! intervals and their convex envelopes, and lifted nonlinear cuts.

use crate::casefmt::{AdmittanceModel, Network};
use crate::envelope::Interval;
use crate::expr::{AffineCutSet, LinExpr, Sense, Var};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("branch has (near) zero admittance")]
    ZeroAdmittance,
    #[error("branch has no thermal limit")]
    Unlimited,
    #[error("voltage magnitudes must be positive (got {0})")]
    NonpositiveVoltage(f64),
    #[error("empty voltage-difference interval [{lo}, {hi}] on branch {branch}")]
    EmptyVdiffInterval { branch: usize, lo: f64, hi: f64 },
}

/// Orientation of a thermal surface relative to the branch definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    FromTo,
    ToFrom,
}

/// Coefficients of the branch current magnitude
/// `I² = α₁v_i² + α₂v_j² + 2·v_i·v_j·(α₃ sin θ − α₄ cos θ)`
/// where `(i, j)` are the measuring and far ends of the chosen direction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchSurface {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    /// ρ = √(α₁/α₂)
    pub rho: f64,
    /// γ = I_max/√α₂
    pub gamma: f64,
    /// Current limit, p.u.
    pub i_max: f64,
    pub direction: Direction,
}

impl BranchSurface {
    /// Surface from the 2×2 admittance block entries of one direction:
    /// the self admittance at the measuring end and the transfer admittance
    /// toward the far end. Reduces to the textbook π-model coefficients for
    /// unit taps and keeps the identity `α₁α₂ = α₃² + α₄²` exact for any tap.
    pub fn from_admittance(
        y_self: Complex64,
        y_cross: Complex64,
        i_max: f64,
        direction: Direction,
    ) -> Result<Self, CutError> {
        let alpha1 = y_self.norm_sqr();
        let alpha2 = y_cross.norm_sqr();
        if alpha1 <= 0.0 || alpha2 <= 0.0 {
            return Err(CutError::ZeroAdmittance);
        }
        let cross = y_self * y_cross.conj();
        let alpha3 = -cross.im;
        let alpha4 = -cross.re;
        Ok(BranchSurface {
            alpha1,
            alpha2,
            alpha3,
            alpha4,
            rho: (alpha1 / alpha2).sqrt(),
            gamma: i_max / alpha2.sqrt(),
            i_max,
            direction,
        })
    }

    /// Surface of a plain π-model branch: series admittance `g + ib` and
    /// per-end shunt susceptance `b_sh`.
    pub fn from_pi_model(
        g: f64,
        b: f64,
        b_sh: f64,
        i_max: f64,
        direction: Direction,
    ) -> Result<Self, CutError> {
        Self::from_admittance(
            Complex64::new(g, b + b_sh),
            Complex64::new(-g, -b),
            i_max,
            direction,
        )
    }

    /// Relative residual of the identity `α₁α₂ = α₃² + α₄²`.
    pub fn identity_residual(&self) -> f64 {
        let lhs = self.alpha1 * self.alpha2;
        let rhs = self.alpha3 * self.alpha3 + self.alpha4 * self.alpha4;
        (lhs - rhs).abs() / lhs.max(f64::MIN_POSITIVE)
    }

    /// Phase offset `arctan(α₃/α₄)` of the current magnitude in θ.
    pub fn phase(&self) -> f64 {
        self.alpha3.atan2(self.alpha4)
    }

    /// Branch current magnitude at the given operating point.
    pub fn current(&self, v_i: f64, v_j: f64, theta: f64) -> f64 {
        let sq = self.alpha1 * v_i * v_i
            + self.alpha2 * v_j * v_j
            + 2.0 * v_i * v_j * (self.alpha3 * theta.sin() - self.alpha4 * theta.cos());
        sq.max(0.0).sqrt()
    }

    fn tau(&self, v_i: f64, v_j: f64) -> f64 {
        self.alpha1 * (v_i / v_j) + self.alpha2 * (v_j / v_i)
            - self.i_max * self.i_max / (v_i * v_j)
    }
}

/// Build the surface of one direction of a network branch.
///
/// The current limit is the conservative conversion of the MVA rating:
/// `I_max = (rate_a / base) / v_min` at the measuring end, the largest
/// current any thermally feasible point can carry.
pub fn branch_surface(
    net: &Network,
    adm: &AdmittanceModel,
    branch_idx: usize,
    direction: Direction,
) -> Result<BranchSurface, CutError> {
    let br = &net.branches[branch_idx];
    if !br.is_limited() {
        return Err(CutError::Unlimited);
    }
    let block = adm.branches[branch_idx].ok_or(CutError::ZeroAdmittance)?;
    let (measuring_bus, y_self, y_cross) = match direction {
        Direction::FromTo => (br.from, block.y_ff, block.y_ft),
        Direction::ToFrom => (br.to, block.y_tt, block.y_tf),
    };
    let v_min = net.buses[net.bus_index(measuring_bus).expect("validated")].v_min;
    let i_max = br.rate_a_pu(net.base_mva) / v_min;
    BranchSurface::from_admittance(y_self, y_cross, i_max, direction)
}

/// Angles at which the current hits its limit for fixed magnitudes, if any.
///
/// Returns `(θ₊, θ₋) = ±arccos(τ/(2√(α₁α₂))) − arctan(α₃/α₄)`; `None` when
/// the branch cannot reach its limit at these magnitudes (τ < −2√(α₁α₂)) or
/// when the magnitudes are thermally infeasible for every angle
/// (τ > 2√(α₁α₂)).
pub fn theta_on_surface(
    v_i: f64,
    v_j: f64,
    s: &BranchSurface,
) -> Result<Option<(f64, f64)>, CutError> {
    if v_i <= 0.0 || v_j <= 0.0 {
        return Err(CutError::NonpositiveVoltage(v_i.min(v_j)));
    }
    let two_root = 2.0 * (s.alpha1 * s.alpha2).sqrt();
    let mut tau = s.tau(v_i, v_j);
    // tolerate rounding just past the arccos domain
    if tau.abs() > two_root {
        if tau.abs() - two_root < 1e-12 * two_root.max(1.0) {
            tau = tau.signum() * two_root;
        } else {
            return Ok(None);
        }
    }
    let acos = (tau / two_root).clamp(-1.0, 1.0).acos();
    let phase = s.phase();
    Ok(Some((acos - phase, -acos - phase)))
}

/// Tightened per-branch operating intervals.
#[derive(Debug, Clone, Serialize)]
pub struct TightenedBounds {
    /// Angle-difference interval per branch (input bounds for unlimited
    /// branches).
    pub angle: Vec<Interval>,
    /// `v_j − ρ·v_i` interval from the from→to surface, when it exists.
    pub vdiff_fwd: Vec<Option<(f64, Interval)>>,
    /// `v_i − ρ·v_j` interval from the to→from surface.
    pub vdiff_rev: Vec<Option<(f64, Interval)>>,
    /// LNC midpoint φ_ij per branch.
    pub phi: Vec<f64>,
    /// LNC half-width δ_ij per branch.
    pub delta: Vec<f64>,
    /// v^(σ) = v_min + v_max per bus index.
    pub v_sigma: Vec<f64>,
    /// Human-readable notes for branches where a computation degraded.
    pub diagnostics: Vec<String>,
}

/// Minimum of `τ(v) = A·v + B/v` over an interval: endpoints plus the
/// closed-form stationary point.
fn edge_min_tau_reciprocal(a: f64, b: f64, v_bounds: Interval) -> f64 {
    let mut tau_min = f64::INFINITY;
    let mut candidates = vec![v_bounds.lo, v_bounds.hi];
    if b > 0.0 && a > 0.0 {
        candidates.push((b / a).sqrt().clamp(v_bounds.lo, v_bounds.hi));
    }
    for v in candidates {
        if v > 0.0 {
            tau_min = tau_min.min(a * v + b / v);
        }
    }
    tau_min
}

/// Minimum of `τ(v) = A·v + B/v + C/v³` over an interval: endpoints plus
/// the stationary points of `A·v⁴ − B·v² − 3C = 0`, a quadratic in v².
fn edge_min_tau_cubic(a: f64, b: f64, c: f64, v_bounds: Interval) -> f64 {
    let mut candidates = vec![v_bounds.lo, v_bounds.hi];
    if a.abs() > 1e-300 {
        let disc = b * b + 12.0 * a * c;
        if disc >= 0.0 {
            for sign in [1.0, -1.0] {
                let v2 = (b + sign * disc.sqrt()) / (2.0 * a);
                if v2 > 0.0 {
                    candidates.push(v2.sqrt().clamp(v_bounds.lo, v_bounds.hi));
                }
            }
        }
    }
    let mut tau_min = f64::INFINITY;
    for v in candidates {
        if v > 0.0 {
            tau_min = tau_min.min(a * v + b / v + c / (v * v * v));
        }
    }
    tau_min
}

/// Largest angle compatible with the apparent-power rating over the voltage
/// box of one direction.
///
/// At the measuring end `|S| = v_i·I`, so the limit resolves pointwise to
/// `I ≤ s_u/v_i` and `τ = α₁v_i/v_j + α₂v_j/v_i − s_u²/(v_i³v_j)`. The map
/// `θ̄ = arccos(τ/2√(α₁α₂)) − arctan(α₃/α₄)` is strictly decreasing in τ, so
/// the box maximum of θ̄ is the arccos of the box minimum of τ; that minimum
/// lies on one of the four box edges (the interior stationary curve of τ is
/// increasing toward larger v_i), each scanned in closed form.
fn surface_theta_upper(s: &BranchSurface, s_rating: f64, box_i: Interval, box_j: Interval) -> Option<f64> {
    let su2 = s_rating * s_rating;
    let mut tau_min = f64::INFINITY;
    // v_j fixed (both endpoints), v_i free: A·v + B/v + C/v³
    for vj in [box_j.lo, box_j.hi] {
        tau_min = tau_min.min(edge_min_tau_cubic(
            s.alpha1 / vj,
            s.alpha2 * vj,
            -su2 / vj,
            box_i,
        ));
    }
    // v_i fixed, v_j free: A·v + B/v
    for vi in [box_i.lo, box_i.hi] {
        tau_min = tau_min.min(edge_min_tau_reciprocal(
            s.alpha2 / vi,
            s.alpha1 * vi - su2 / (vi * vi * vi),
            box_j,
        ));
    }
    let two_root = 2.0 * (s.alpha1 * s.alpha2).sqrt();
    if tau_min > two_root * (1.0 + 1e-12) {
        // every voltage pair exceeds the rating at every angle
        return None;
    }
    // τ below −2√(α₁α₂) clamps to arccos(−1): the bound exceeds π/2 and
    // tightens nothing
    let acos = (tau_min / two_root).clamp(-1.0, 1.0).acos();
    Some(acos - s.phase())
}

/// Analytic bound tightening over all limited branches.
///
/// The from→to surface tightens the upper angle bound; the to→from surface
/// tightens the lower bound by sign symmetry. Voltage-difference intervals
/// are clipped by the thermal bound γ of each direction. Failures degrade to
/// the input bounds with a diagnostic.
pub fn tighten_angle_bounds(net: &Network, adm: &AdmittanceModel) -> TightenedBounds {
    let input: Vec<Interval> = net
        .branches
        .iter()
        .map(|br| {
            let (lo, hi) = br.angle_bounds();
            Interval::new(lo, hi).expect("angle bounds ordered")
        })
        .collect();
    tighten_with_input(net, adm, &input)
}

/// Tightening starting from explicit per-branch angle intervals.
pub fn tighten_with_input(
    net: &Network,
    adm: &AdmittanceModel,
    input: &[Interval],
) -> TightenedBounds {
    let nb = net.branches.len();
    let mut out = TightenedBounds {
        angle: input.to_vec(),
        vdiff_fwd: vec![None; nb],
        vdiff_rev: vec![None; nb],
        phi: vec![0.0; nb],
        delta: vec![0.0; nb],
        v_sigma: net.buses.iter().map(|b| b.v_min + b.v_max).collect(),
        diagnostics: Vec::new(),
    };

    for (idx, br) in net.branches.iter().enumerate() {
        if br.status && br.is_limited() {
            let f = net.bus_index(br.from).expect("validated");
            let t = net.bus_index(br.to).expect("validated");
            let box_f = Interval::new(net.buses[f].v_min, net.buses[f].v_max).unwrap();
            let box_t = Interval::new(net.buses[t].v_min, net.buses[t].v_max).unwrap();
            let mut angle = out.angle[idx];

            let rate = br.rate_a_pu(net.base_mva);
            match branch_surface(net, adm, idx, Direction::FromTo) {
                Ok(s) => {
                    if let Some(upper) = surface_theta_upper(&s, rate, box_f, box_t) {
                        if upper < angle.lo {
                            out.diagnostics.push(format!(
                                "branch {}: thermal limit excludes the whole angle interval",
                                idx
                            ));
                        } else {
                            angle.hi = angle.hi.min(upper);
                        }
                    }
                    match voltage_diff_bounds(&s, box_f, box_t) {
                        Ok(iv) => out.vdiff_fwd[idx] = Some((s.rho, iv)),
                        Err(e) => out.diagnostics.push(format!("branch {idx}: {e}")),
                    }
                }
                Err(e) => out.diagnostics.push(format!("branch {idx}: {e}")),
            }
            match branch_surface(net, adm, idx, Direction::ToFrom) {
                Ok(s) => {
                    // upper bound on θ_ji maps to the lower bound on θ_ij
                    if let Some(upper) = surface_theta_upper(&s, rate, box_t, box_f) {
                        if -upper > angle.hi {
                            out.diagnostics.push(format!(
                                "branch {}: reverse thermal limit excludes the angle interval",
                                idx
                            ));
                        } else {
                            angle.lo = angle.lo.max(-upper);
                        }
                    }
                    match voltage_diff_bounds(&s, box_t, box_f) {
                        Ok(iv) => out.vdiff_rev[idx] = Some((s.rho, iv)),
                        Err(e) => out.diagnostics.push(format!("branch {idx}: {e}")),
                    }
                }
                Err(e) => out.diagnostics.push(format!("branch {idx}: {e}")),
            }
            out.angle[idx] = angle;
        }
        out.phi[idx] = (out.angle[idx].hi + out.angle[idx].lo) / 2.0;
        out.delta[idx] = (out.angle[idx].hi - out.angle[idx].lo) / 2.0;
    }
    out
}

/// Interval of `v_j − ρ·v_i` implied by the thermal bound and the voltage
/// box: `[max(−γ, min v_j − ρ·v_i), min(γ, max v_j − ρ·v_i)]` with `(i, j)`
/// the measuring and far ends of the surface direction.
pub fn voltage_diff_bounds(
    s: &BranchSurface,
    box_i: Interval,
    box_j: Interval,
) -> Result<Interval, CutError> {
    let lo = (-s.gamma).max(box_j.lo - s.rho * box_i.hi);
    let hi = s.gamma.min(box_j.hi - s.rho * box_i.lo);
    Interval::new(lo, hi).map_err(|_| CutError::EmptyVdiffInterval {
        branch: usize::MAX,
        lo,
        hi,
    })
}

/// W-space variables of one branch pair used by the LNC and voltage
/// difference cuts.
#[derive(Debug, Clone, Copy)]
pub struct PairVars {
    pub w_ii: Var,
    pub w_jj: Var,
    pub w_re: Var,
    pub w_im: Var,
}

/// The two lifted nonlinear cuts of a branch.
pub fn lnc_cuts(
    pair: PairVars,
    vb_i: Interval,
    vb_j: Interval,
    phi: f64,
    delta: f64,
) -> AffineCutSet {
    let mut cuts = AffineCutSet::new();
    let sig_i = vb_i.lo + vb_i.hi;
    let sig_j = vb_j.lo + vb_j.hi;
    let cd = delta.cos();
    let (cp, sp) = (phi.cos(), phi.sin());
    // vᵢσ vⱼσ (Re cos φ + Im sin φ) − vⱼᵘ cos δ vⱼσ Wii − vᵢᵘ cos δ vᵢσ Wjj
    //   ≥ vᵢᵘ vⱼᵘ cos δ (vᵢˡ vⱼˡ − vᵢᵘ vⱼᵘ)
    cuts.push(
        LinExpr::term(pair.w_re, sig_i * sig_j * cp)
            .add(pair.w_im, sig_i * sig_j * sp)
            .add(pair.w_ii, -vb_j.hi * cd * sig_j)
            .add(pair.w_jj, -vb_i.hi * cd * sig_i),
        Sense::Ge,
        vb_i.hi * vb_j.hi * cd * (vb_i.lo * vb_j.lo - vb_i.hi * vb_j.hi),
    );
    // lower-endpoint companion
    cuts.push(
        LinExpr::term(pair.w_re, sig_i * sig_j * cp)
            .add(pair.w_im, sig_i * sig_j * sp)
            .add(pair.w_ii, -vb_j.lo * cd * sig_j)
            .add(pair.w_jj, -vb_i.lo * cd * sig_i),
        Sense::Ge,
        vb_i.lo * vb_j.lo * cd * (vb_i.hi * vb_j.hi - vb_i.lo * vb_j.lo),
    );
    cuts
}

/// Convex relaxation of the voltage-difference identity of one direction:
/// `(v_j − ρ v_i)² ≤ ρ²⟨v_i²⟩ + ⟨v_j²⟩ − 2ρ⟨v_i v_j⟩` plus the interval
/// bounds on `v_j − ρ·v_i`.
///
/// `with_cone = false` keeps only the interval rows. The cone couples the
/// square and bilinear hats; on pairs whose trilinear envelopes collapsed
/// to recursive McCormick the same hat would sit between two simultaneously
/// binding cones, a degenerate geometry that stalls interior-point solves
/// while adding no measurable tightness.
#[allow(clippy::too_many_arguments)]
pub fn vdiff_envelope_cuts(
    v_i: Var,
    v_j: Var,
    hat_ii: Var,
    hat_jj: Var,
    hat_ij: Var,
    rho: f64,
    bounds: Interval,
    with_cone: bool,
) -> AffineCutSet {
    let mut cuts = AffineCutSet::new();
    let diff = LinExpr::var(v_j).add(v_i, -rho);
    if with_cone {
        // both sides vanish together at balanced operating points, so the
        // realized cone carries a microscopic pad to stay off its tip
        cuts.push_quad_padded(
            diff.clone(),
            LinExpr::term(hat_ii, rho * rho)
                .add(hat_jj, 1.0)
                .add(hat_ij, -2.0 * rho),
            0.0,
        );
    }
    cuts.push(diff.clone(), Sense::Ge, bounds.lo);
    cuts.push(diff, Sense::Le, bounds.hi);
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn surface_coefficients_match_hand_computation() {
        // g=1, b=−2, b_sh=0.2: α₁ = 1+(−1.8)² = 4.24, α₂ = 5, α₃ = 0.2,
        // α₄ = 4.6, and α₁α₂ = 21.2 = α₃² + α₄²
        let s = BranchSurface::from_pi_model(1.0, -2.0, 0.2, 1.0, Direction::FromTo).unwrap();
        assert!((s.alpha1 - 4.24).abs() < 1e-12);
        assert!((s.alpha2 - 5.0).abs() < 1e-12);
        assert!((s.alpha3 - 0.2).abs() < 1e-12);
        assert!((s.alpha4 - 4.6).abs() < 1e-12);
        assert!((s.alpha1 * s.alpha2 - 21.2).abs() < 1e-12);
        assert!(s.identity_residual() < 1e-14);
    }

    #[test]
    fn zero_shunt_surface_is_symmetric() {
        let s = BranchSurface::from_pi_model(0.5, -3.0, 0.0, 1.0, Direction::FromTo).unwrap();
        assert_eq!(s.alpha3, 0.0);
        assert!((s.alpha4 - s.alpha2).abs() < 1e-14);
        assert!((s.rho - 1.0).abs() < 1e-14);
        // I(v_i, v_j, θ) = I(v_j, v_i, θ)
        assert!((s.current(0.95, 1.05, 0.3) - s.current(1.05, 0.95, 0.3)).abs() < 1e-12);
    }

    #[test]
    fn identity_holds_over_random_parameters() {
        let mut rng = lcg(41);
        for _ in 0..10_000 {
            let g = 0.01 + 10.0 * rng();
            let b = -20.0 * rng() - 0.01;
            let b_sh = 0.5 * rng();
            let s = BranchSurface::from_pi_model(g, b, b_sh, 1.0, Direction::FromTo).unwrap();
            assert!(s.identity_residual() < 1e-9);
        }
    }

    #[test]
    fn theta_on_surface_back_substitutes() {
        let mut rng = lcg(43);
        let mut hits = 0;
        for _ in 0..2000 {
            let g = 0.1 + 5.0 * rng();
            let b = -10.0 * rng() - 0.1;
            let b_sh = 0.3 * rng();
            let i_max = 0.5 + 3.0 * rng();
            let s = BranchSurface::from_pi_model(g, b, b_sh, i_max, Direction::FromTo).unwrap();
            let v_i = 0.9 + 0.2 * rng();
            let v_j = 0.9 + 0.2 * rng();
            if let Some((t1, t2)) = theta_on_surface(v_i, v_j, &s).unwrap() {
                for t in [t1, t2] {
                    assert!(
                        (s.current(v_i, v_j, t) - i_max).abs() < 1e-8,
                        "I({v_i},{v_j},{t}) = {} != {i_max}",
                        s.current(v_i, v_j, t)
                    );
                }
                hits += 1;
            }
        }
        assert!(hits > 100, "surface intersection should occur frequently");
    }

    #[test]
    fn coincident_roots_at_arccos_one() {
        let s = BranchSurface::from_pi_model(1.0, -2.0, 0.2, 1.0, Direction::FromTo).unwrap();
        // choose balanced magnitudes then set I_max so that τ = 2√(α₁α₂)
        let (v_i, v_j) = (1.0, 1.0);
        let two_root = 2.0 * (s.alpha1 * s.alpha2).sqrt();
        let imax2 = s.alpha1 + s.alpha2 - two_root;
        let s = BranchSurface {
            i_max: imax2.sqrt(),
            ..s
        };
        let (t1, t2) = theta_on_surface(v_i, v_j, &s).unwrap().unwrap();
        assert!((t1 - t2).abs() < 1e-9);
        assert!((t1 + s.phase()).abs() < 1e-9);
    }

    #[test]
    fn unreachable_magnitude_pair_has_no_roots() {
        let s = BranchSurface::from_pi_model(1.0, -4.0, 0.0, 0.5, Direction::FromTo).unwrap();
        // (√α₁ v_i − √α₂ v_j)² > I_max²: far from the ρ line
        let v_i = 1.1;
        let v_j = 0.2;
        let gap = (s.alpha1.sqrt() * v_i - s.alpha2.sqrt() * v_j).powi(2);
        assert!(gap > s.i_max * s.i_max);
        assert!(theta_on_surface(v_i, v_j, &s).unwrap().is_none());
    }

    #[test]
    fn nonpositive_voltage_is_an_error() {
        let s = BranchSurface::from_pi_model(1.0, -2.0, 0.0, 1.0, Direction::FromTo).unwrap();
        assert!(theta_on_surface(-0.5, 1.0, &s).is_err());
    }

    /// θ̄ at one voltage pair under the apparent-power limit, by direct
    /// evaluation of the arccos expression (the production path goes through
    /// the edge-scan minimization instead).
    fn theta_bar_exact(s: &BranchSurface, su: f64, v_i: f64, v_j: f64) -> f64 {
        let tau = s.alpha1 * v_i / v_j + s.alpha2 * v_j / v_i
            - su * su / (v_i * v_i * v_i * v_j);
        let two_root = 2.0 * (s.alpha1 * s.alpha2).sqrt();
        (tau / two_root).clamp(-1.0, 1.0).acos() - s.phase()
    }

    /// Golden-section maximization of θ̄ along one box edge.
    fn golden_edge_max(s: &BranchSurface, su: f64, fix_i: Option<f64>, free: Interval, other: f64) -> f64 {
        let eval = |v: f64| match fix_i {
            Some(vi) => theta_bar_exact(s, su, vi, v),
            None => theta_bar_exact(s, su, v, other),
        };
        let (mut a, mut b) = (free.lo, free.hi);
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if eval(c) < eval(d) {
                a = c;
            } else {
                b = d;
            }
        }
        eval((a + b) / 2.0).max(eval(free.lo)).max(eval(free.hi))
    }

    #[test]
    fn box_optimum_matches_golden_section() {
        let mut rng = lcg(47);
        let box_i = Interval::new(0.9, 1.1).unwrap();
        let box_j = Interval::new(0.94, 1.06).unwrap();
        for _ in 0..300 {
            let g = 0.2 + 4.0 * rng();
            let b = -8.0 * rng() - 0.2;
            let b_sh = 0.2 * rng();
            let su = 0.8 + 2.0 * rng();
            let s = BranchSurface::from_pi_model(g, b, b_sh, su / box_i.lo, Direction::FromTo)
                .unwrap();
            let analytic = match surface_theta_upper(&s, su, box_i, box_j) {
                Some(v) => v,
                None => continue,
            };
            // maximum over the four edges by golden section
            let golden = golden_edge_max(&s, su, Some(box_i.lo), box_j, 0.0)
                .max(golden_edge_max(&s, su, Some(box_i.hi), box_j, 0.0))
                .max(golden_edge_max(&s, su, None, box_i, box_j.lo))
                .max(golden_edge_max(&s, su, None, box_i, box_j.hi));
            assert!(
                (analytic - golden).abs() < 1e-6,
                "analytic {analytic} vs golden {golden} (α={:?})",
                (s.alpha1, s.alpha2, s.alpha3, s.alpha4)
            );
        }
    }

    #[test]
    fn vdiff_interval_reduces_to_box_for_loose_limits() {
        let s = BranchSurface::from_pi_model(1.0, -3.0, 0.1, 1e6, Direction::FromTo).unwrap();
        let bi = Interval::new(0.9, 1.1).unwrap();
        let bj = Interval::new(0.94, 1.06).unwrap();
        let iv = voltage_diff_bounds(&s, bi, bj).unwrap();
        assert!((iv.lo - (bj.lo - s.rho * bi.hi)).abs() < 1e-12);
        assert!((iv.hi - (bj.hi - s.rho * bi.lo)).abs() < 1e-12);
    }

    #[test]
    fn vdiff_interval_symmetric_for_unit_rho() {
        let s = BranchSurface::from_pi_model(0.5, -3.0, 0.0, 2.0, Direction::FromTo).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-14);
        let b = Interval::new(0.9, 1.1).unwrap();
        let iv = voltage_diff_bounds(&s, b, b).unwrap();
        assert!((iv.lo + iv.hi).abs() < 1e-12);
    }

    #[test]
    fn vdiff_bound_is_valid_for_feasible_currents() {
        let mut rng = lcg(53);
        let s = BranchSurface::from_pi_model(1.0, -4.0, 0.1, 1.8, Direction::FromTo).unwrap();
        let bi = Interval::new(0.9, 1.1).unwrap();
        let bj = Interval::new(0.9, 1.1).unwrap();
        let mut feasible = 0;
        for _ in 0..10_000 {
            let v_i = bi.lo + bi.width() * rng();
            let v_j = bj.lo + bj.width() * rng();
            let th = -1.5 + 3.0 * rng();
            if s.current(v_i, v_j, th) <= s.i_max {
                feasible += 1;
                assert!(
                    (v_j - s.rho * v_i).abs() <= s.gamma + 1e-10,
                    "thermally feasible point breaks the γ bound"
                );
            }
        }
        assert!(feasible > 100);
    }

    #[test]
    fn lnc_cuts_valid_on_feasible_samples() {
        let mut rng = lcg(59);
        let vb_i = Interval::new(0.9, 1.1).unwrap();
        let vb_j = Interval::new(0.94, 1.06).unwrap();
        let (th_lo, th_hi) = (-0.35, 0.25);
        let phi = (th_hi + th_lo) / 2.0;
        let delta = (th_hi - th_lo) / 2.0;
        let pair = PairVars {
            w_ii: Var(0),
            w_jj: Var(1),
            w_re: Var(2),
            w_im: Var(3),
        };
        let cuts = lnc_cuts(pair, vb_i, vb_j, phi, delta);
        for _ in 0..10_000 {
            let v_i = vb_i.lo + vb_i.width() * rng();
            let v_j = vb_j.lo + vb_j.width() * rng();
            let th = th_lo + (th_hi - th_lo) * rng();
            let x = [
                v_i * v_i,
                v_j * v_j,
                v_i * v_j * th.cos(),
                v_i * v_j * th.sin(),
            ];
            assert!(
                cuts.max_violation(&x) <= 1e-10,
                "LNC violated at v=({v_i},{v_j}), θ={th}"
            );
        }
    }

    #[test]
    fn lnc_tight_at_degenerate_box() {
        // fixed magnitudes and angle: both cuts hold with equality
        let v_i = 1.02;
        let v_j = 0.97;
        let th = 0.21;
        let vb_i = Interval::new(v_i, v_i).unwrap();
        let vb_j = Interval::new(v_j, v_j).unwrap();
        let pair = PairVars {
            w_ii: Var(0),
            w_jj: Var(1),
            w_re: Var(2),
            w_im: Var(3),
        };
        let cuts = lnc_cuts(pair, vb_i, vb_j, th, 0.0);
        let x = [
            v_i * v_i,
            v_j * v_j,
            v_i * v_j * th.cos(),
            v_i * v_j * th.sin(),
        ];
        for c in &cuts.affine {
            assert!(c.violation(&x).abs() < 1e-10, "expected equality at point");
        }
    }

    #[test]
    fn widening_delta_loosens_lnc_margin() {
        let vb_i = Interval::new(0.9, 1.1).unwrap();
        let vb_j = Interval::new(0.9, 1.1).unwrap();
        let pair = PairVars {
            w_ii: Var(0),
            w_jj: Var(1),
            w_re: Var(2),
            w_im: Var(3),
        };
        let (v_i, v_j, th) = (1.0f64, 1.0f64, 0.05f64);
        let x = [
            v_i * v_i,
            v_j * v_j,
            v_i * v_j * th.cos(),
            v_i * v_j * th.sin(),
        ];
        let mut last = f64::NEG_INFINITY;
        for delta in [0.1, 0.2, 0.4, 0.8] {
            let cuts = lnc_cuts(pair, vb_i, vb_j, 0.0, delta);
            // margin = −violation; a wider δ weakly loosens each cut
            let margin = -cuts.max_violation(&x);
            assert!(margin >= last - 1e-12, "margin should grow with δ");
            last = margin;
        }
    }

    #[test]
    fn vdiff_envelope_exact_point_is_tight() {
        let (v_i, v_j, rho) = (1.03, 0.96, 1.1);
        let cuts = vdiff_envelope_cuts(
            Var(0),
            Var(1),
            Var(2),
            Var(3),
            Var(4),
            rho,
            Interval::new(-2.0, 2.0).unwrap(),
            true,
        );
        let x = [v_i, v_j, v_i * v_i, v_j * v_j, v_i * v_j];
        // hat variables at the true squares/product: (6k) becomes an identity
        assert!(cuts.quadratic[0].violation(&x).abs() < 1e-12);
        assert!(cuts.max_violation(&x) <= 1e-12);
    }

    #[test]
    fn vdiff_envelope_contains_samples() {
        let mut rng = lcg(61);
        let bi = Interval::new(0.9, 1.1).unwrap();
        let bj = Interval::new(0.9, 1.1).unwrap();
        let s = BranchSurface::from_pi_model(1.0, -4.0, 0.1, 1.9, Direction::FromTo).unwrap();
        let iv = voltage_diff_bounds(&s, bi, bj).unwrap();
        let cuts = vdiff_envelope_cuts(Var(0), Var(1), Var(2), Var(3), Var(4), s.rho, iv, true);
        for _ in 0..10_000 {
            let v_i = bi.lo + bi.width() * rng();
            let v_j = bj.lo + bj.width() * rng();
            let th = -0.5 + 1.0 * rng();
            if s.current(v_i, v_j, th) <= s.i_max {
                let x = [v_i, v_j, v_i * v_i, v_j * v_j, v_i * v_j];
                assert!(cuts.max_violation(&x) <= 1e-10);
            }
        }
    }

    #[test]
    fn vdiff_zero_for_unit_rho_equal_magnitudes() {
        let cuts = vdiff_envelope_cuts(
            Var(0),
            Var(1),
            Var(2),
            Var(3),
            Var(4),
            1.0,
            Interval::new(-0.5, 0.5).unwrap(),
            true,
        );
        let v = 1.04;
        let x = [v, v, v * v, v * v, v * v];
        assert!(cuts.quadratic[0].lhs.eval(&x).abs() < 1e-12);
        assert!(cuts.max_violation(&x) <= 1e-12);
    }
}
