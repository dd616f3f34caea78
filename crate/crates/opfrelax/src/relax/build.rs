//! Variant-by-variant model assembly.

use super::linking::{chr_complex_blocks, chr_r_blocks, chr_rms_blocks};
use super::{GenCost, ModelInstance, PairW, PolarVars, PsdCon, SocCon, VarRegistry, Variant};
use crate::casefmt::{AdmittanceModel, Network};
use crate::chordal::CliqueDecomposition;
use crate::cuts::{lnc_cuts, vdiff_envelope_cuts, PairVars, TightenedBounds};
use crate::envelope::{
    linking_constraints, mccormick_bilinear, soc_minor_cut, square_envelope_on,
    trig_envelopes, trilinear_lambda_envelope, EnvelopeError, Interval,
};
use crate::expr::{AffineCutSet, LinExpr, Sense, Var, VarSource};
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Largest bus count for which the full relaxation keeps one dense block.
pub const FULL_SDR_LIMIT: usize = 40;

/// Narrowest trig-hat range the extreme-point formulation accepts; below
/// this the eight corners are close to affinely dependent, which costs the
/// interior-point method far more than the hull gains, and the pair falls
/// back to recursive McCormick, whose hull coincides to within the squared
/// width.
const LAMBDA_MIN_RANGE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("variant {0} requires a clique decomposition")]
    MissingDecomposition(&'static str),
    #[error("envelope construction failed: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error("model is structurally infeasible: {0}")]
    Infeasible(String),
}

/// Everything a build needs to see.
pub struct BuildInputs<'a> {
    pub net: &'a Network,
    pub adm: &'a AdmittanceModel,
    pub decomposition: Option<&'a CliqueDecomposition>,
    pub bounds: Option<&'a TightenedBounds>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildConfig {
    /// Force the trilinear λ envelopes on or off; `None` enables them for
    /// networks of at most 1000 buses.
    pub use_lambda: Option<bool>,
    /// Keep the literal single-block form of the full relaxation at any
    /// size (the default switches large instances to the value-preserving
    /// completable-pattern realization).
    pub force_full_sdr: bool,
}

impl BuildConfig {
    fn lambda_enabled(&self, n_buses: usize) -> bool {
        self.use_lambda.unwrap_or(n_buses <= 1000)
    }
}

/// Per-branch data resolved against the pair table.
struct BranchCtx {
    /// Branch position in the network list.
    idx: usize,
    fi: usize,
    ti: usize,
    pair: (usize, usize),
    /// +1 when the branch is oriented with the canonical pair, −1 otherwise.
    sigma: f64,
    y_ff: Complex64,
    y_ft: Complex64,
    y_tf: Complex64,
    y_tt: Complex64,
    rate_pu: f64,
}

struct Builder<'a> {
    net: &'a Network,
    adm: &'a AdmittanceModel,
    variant: Variant,
    vars: VarRegistry,
    cuts: AffineCutSet,
    socs: Vec<SocCon>,
    rsocs: Vec<crate::envelope::RotatedSocCut>,
    psd_blocks: Vec<PsdCon>,
    objective: LinExpr,
    gen_costs: Vec<GenCost>,
    w_diag: Vec<Var>,
    w_pairs: BTreeMap<(usize, usize), PairW>,
    branches: Vec<BranchCtx>,
    /// Effective angle interval per modeled network pair, in pair
    /// orientation, intersected over parallel branches.
    pair_angle: BTreeMap<(usize, usize), Interval>,
    /// Pairs whose angle interval comes from the case file or tightening
    /// rather than the synthetic default.
    pair_angle_real: BTreeSet<(usize, usize)>,
    /// (generator index, P var, Q var) for in-service machines.
    gen_vars: Vec<(usize, Var, Var)>,
    /// Shared ⟨v_i·v_j⟩ᴹ hats per pair.
    pair_hats: BTreeMap<(usize, usize), Var>,
    /// Pairs realized through the trilinear extreme-point envelopes.
    lambda_pairs: BTreeSet<(usize, usize)>,
    polar: Option<PolarVars>,
    linking: usize,
    notes: Vec<String>,
}

/// Build one relaxation variant over a validated network.
pub fn build_model(
    inputs: &BuildInputs,
    variant: Variant,
    config: &BuildConfig,
) -> Result<ModelInstance, BuildError> {
    if variant.needs_decomposition() && inputs.decomposition.is_none() {
        return Err(BuildError::MissingDecomposition(variant.name()));
    }
    let net = inputs.net;
    let n = net.n_buses();

    // pair set: network edges always; fill pairs per variant
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (_, br) in net.active_branches() {
        let fi = net.bus_index(br.from).expect("validated");
        let ti = net.bus_index(br.to).expect("validated");
        if fi != ti {
            pairs.insert((fi.min(ti), fi.max(ti)));
        }
    }
    // beyond this size a literal dense W block is impractical for the
    // interior-point backend; the positive-semidefinite completion theorem
    // lets the full relaxation be realized on a chordal pattern instead,
    // with identical optimal value
    let full_matrix_sdr = n <= FULL_SDR_LIMIT || config.force_full_sdr;
    let sdr_realization = if variant == Variant::Sdr && !full_matrix_sdr {
        let g = crate::chordal::SparsityGraph::from_network(net);
        let ext = crate::chordal::chordal_extend(&g);
        Some(crate::chordal::maximal_cliques(&ext))
    } else {
        None
    };
    match variant {
        Variant::Sdr => match &sdr_realization {
            None => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        pairs.insert((i, j));
                    }
                }
            }
            Some(blocks) => {
                for block in blocks {
                    for (x, &a) in block.iter().enumerate() {
                        for &b in &block[x + 1..] {
                            pairs.insert((a, b));
                        }
                    }
                }
            }
        },
        Variant::ChrC | Variant::ChrRms | Variant::ChrR | Variant::EChrTlmC => {
            let dec = inputs.decomposition.expect("checked above");
            for block in &dec.blocks {
                for (x, &a) in block.iter().enumerate() {
                    for &b in &block[x + 1..] {
                        pairs.insert((a, b));
                    }
                }
            }
        }
        Variant::Qc | Variant::QcTlm => {}
    }

    let mut b = Builder::new(net, inputs.adm, variant, &pairs, inputs.bounds);
    b.power_balance();
    b.thermal_limits();
    b.angle_w_cuts();
    b.generator_objective();

    match variant {
        Variant::Sdr => match &sdr_realization {
            None => {
                let block = b.full_hermitian_block();
                b.push_hermitian(block);
            }
            Some(blocks) => {
                let (hblocks, link_cuts, n_link) =
                    chr_complex_blocks(blocks, &b.w_diag, &b.w_pairs, &mut b.vars);
                b.cuts.extend(link_cuts);
                b.linking = n_link;
                for blk in hblocks {
                    b.push_hermitian(blk);
                }
                b.notes.push(format!(
                    "full matrix realized through {} completable-pattern blocks",
                    blocks.len()
                ));
            }
        },
        Variant::ChrC => {
            let dec = inputs.decomposition.unwrap();
            let (blocks, link_cuts, n_link) =
                chr_complex_blocks(&dec.blocks, &b.w_diag, &b.w_pairs, &mut b.vars);
            b.cuts.extend(link_cuts);
            b.linking = n_link;
            for blk in blocks {
                b.push_hermitian(blk);
            }
        }
        Variant::ChrRms => {
            let dec = inputs.decomposition.unwrap();
            let (psd, ties) = chr_rms_blocks(&dec.blocks, &b.w_diag, &b.w_pairs, &mut b.vars);
            b.cuts.extend(ties);
            b.psd_blocks.extend(psd);
        }
        Variant::ChrR => {
            let dec = inputs.decomposition.unwrap();
            let (psd, ties) = chr_r_blocks(&dec.blocks, &b.w_diag, &b.w_pairs, &mut b.vars);
            b.cuts.extend(ties);
            b.psd_blocks.extend(psd);
        }
        Variant::Qc => {
            b.polar_foundation()?;
            b.recursive_mccormick_w()?;
            b.soc_minors();
        }
        Variant::QcTlm => {
            b.polar_foundation()?;
            if config.lambda_enabled(n) {
                b.lambda_w()?;
            } else {
                b.recursive_mccormick_w()?;
            }
            b.soc_minors();
        }
        Variant::EChrTlmC => {
            let dec = inputs.decomposition.unwrap();
            let (blocks, link_cuts, n_link) =
                chr_complex_blocks(&dec.blocks, &b.w_diag, &b.w_pairs, &mut b.vars);
            b.cuts.extend(link_cuts);
            b.linking = n_link;
            for blk in blocks {
                b.push_hermitian(blk);
            }
            b.polar_foundation()?;
            if config.lambda_enabled(n) {
                b.lambda_w()?;
            } else {
                b.recursive_mccormick_w()?;
            }
            // clique PSD subsumes the 2×2 minors; add the branch-limit
            // valid inequalities instead
            b.lnc_all_pairs();
            b.vdiff_cuts(inputs.bounds)?;
        }
    }

    Ok(b.finish())
}

impl<'a> Builder<'a> {
    fn new(
        net: &'a Network,
        adm: &'a AdmittanceModel,
        variant: Variant,
        pairs: &BTreeSet<(usize, usize)>,
        bounds: Option<&TightenedBounds>,
    ) -> Self {
        let mut vars = VarRegistry::new();
        let w_diag: Vec<Var> = net
            .buses
            .iter()
            .enumerate()
            .map(|(i, bus)| {
                vars.fresh_bounded(
                    format!("w[{i}]"),
                    bus.v_min * bus.v_min,
                    bus.v_max * bus.v_max,
                )
            })
            .collect();
        let mut w_pairs = BTreeMap::new();
        for &(i, j) in pairs {
            let re = vars.fresh(&format!("wre[{i},{j}]"));
            let im = vars.fresh(&format!("wim[{i},{j}]"));
            w_pairs.insert((i, j), PairW { re, im });
        }

        // branch contexts plus per-pair angle intervals
        let mut branches = Vec::new();
        let mut pair_angle: BTreeMap<(usize, usize), Interval> = BTreeMap::new();
        let mut pair_angle_real = BTreeSet::new();
        for (idx, br) in net.active_branches() {
            let fi = net.bus_index(br.from).expect("validated");
            let ti = net.bus_index(br.to).expect("validated");
            if fi == ti {
                continue;
            }
            let block = adm.branches[idx].expect("in-service branch");
            let pair = (fi.min(ti), fi.max(ti));
            let sigma = if fi < ti { 1.0 } else { -1.0 };
            branches.push(BranchCtx {
                idx,
                fi,
                ti,
                pair,
                sigma,
                y_ff: block.y_ff,
                y_ft: block.y_ft,
                y_tf: block.y_tf,
                y_tt: block.y_tt,
                rate_pu: br.rate_a_pu(net.base_mva),
            });
            let (blo, bhi) = match bounds {
                Some(tb) => (tb.angle[idx].lo, tb.angle[idx].hi),
                None => br.angle_bounds(),
            };
            // map to pair orientation
            let (plo, phi) = if fi < ti { (blo, bhi) } else { (-bhi, -blo) };
            let entry = pair_angle
                .entry(pair)
                .or_insert(Interval { lo: plo, hi: phi });
            entry.lo = entry.lo.max(plo);
            entry.hi = entry.hi.min(phi);
            let default = crate::casefmt::DEFAULT_ANGLE_BOUND;
            let is_real = br.has_real_angle_bounds() || blo > -default || bhi < default;
            if is_real {
                pair_angle_real.insert(pair);
            }
        }

        Builder {
            net,
            adm,
            variant,
            vars,
            cuts: AffineCutSet::new(),
            socs: Vec::new(),
            rsocs: Vec::new(),
            psd_blocks: Vec::new(),
            objective: LinExpr::default(),
            gen_costs: Vec::new(),
            w_diag,
            w_pairs,
            branches,
            pair_angle,
            pair_angle_real,
            gen_vars: Vec::new(),
            pair_hats: BTreeMap::new(),
            lambda_pairs: BTreeSet::new(),
            polar: None,
            linking: 0,
            notes: Vec::new(),
        }
    }

    /// Complex power leaving the measuring end of a branch, as affine
    /// expressions (P, Q) over W variables.
    fn flow_exprs(&self, ctx: &BranchCtx, from_side: bool) -> (LinExpr, LinExpr) {
        let pw = self.w_pairs[&ctx.pair];
        let (w_self, y_self, y_cross, im_sign) = if from_side {
            (self.w_diag[ctx.fi], ctx.y_ff, ctx.y_ft, ctx.sigma)
        } else {
            (self.w_diag[ctx.ti], ctx.y_tt, ctx.y_tf, -ctx.sigma)
        };
        let (g_s, b_s) = (y_self.re, y_self.im);
        let (g_x, b_x) = (y_cross.re, y_cross.im);
        // S = conj(y_self)·W_self + conj(y_cross)·(wre + i·im_sign·wim)
        let p = LinExpr::term(w_self, g_s)
            .add(pw.re, g_x)
            .add(pw.im, im_sign * b_x);
        let q = LinExpr::term(w_self, -b_s)
            .add(pw.re, -b_x)
            .add(pw.im, im_sign * g_x);
        (p, q)
    }

    fn power_balance(&mut self) {
        let n = self.net.n_buses();
        let mut p_rows: Vec<LinExpr> = Vec::with_capacity(n);
        let mut q_rows: Vec<LinExpr> = Vec::with_capacity(n);
        for i in 0..n {
            let load = self.net.load_pu(i);
            let sh = self.adm.shunts[i];
            // generation − load − shunt − Σ flows = 0
            p_rows.push(LinExpr::constant(-load.re).add(self.w_diag[i], -sh.re));
            q_rows.push(LinExpr::constant(-load.im).add(self.w_diag[i], sh.im));
        }
        let branch_flows: Vec<(usize, usize, LinExpr, LinExpr, LinExpr, LinExpr)> = self
            .branches
            .iter()
            .map(|ctx| {
                let (pf, qf) = self.flow_exprs(ctx, true);
                let (pt, qt) = self.flow_exprs(ctx, false);
                (ctx.fi, ctx.ti, pf, qf, pt, qt)
            })
            .collect();
        for (fi, ti, pf, qf, pt, qt) in branch_flows {
            p_rows[fi] = std::mem::take(&mut p_rows[fi]).plus(&pf.scaled(-1.0));
            q_rows[fi] = std::mem::take(&mut q_rows[fi]).plus(&qf.scaled(-1.0));
            p_rows[ti] = std::mem::take(&mut p_rows[ti]).plus(&pt.scaled(-1.0));
            q_rows[ti] = std::mem::take(&mut q_rows[ti]).plus(&qt.scaled(-1.0));
        }
        // generator injections
        let base = self.net.base_mva;
        for (gi, g) in self.net.active_generators() {
            let bus = self.net.bus_index(g.bus).expect("validated");
            let pg = self.vars.fresh_bounded(
                format!("pg[{gi}]"),
                g.p_min / base,
                g.p_max / base,
            );
            let qg = self.vars.fresh_bounded(
                format!("qg[{gi}]"),
                g.q_min / base,
                g.q_max / base,
            );
            p_rows[bus] = std::mem::take(&mut p_rows[bus]).add(pg, 1.0);
            q_rows[bus] = std::mem::take(&mut q_rows[bus]).add(qg, 1.0);
            self.gen_vars.push((gi, pg, qg));
        }
        for (p, q) in p_rows.into_iter().zip(q_rows) {
            self.cuts.push(p.compact(), Sense::Eq, 0.0);
            self.cuts.push(q.compact(), Sense::Eq, 0.0);
        }
    }

    fn thermal_limits(&mut self) {
        let mut socs = Vec::new();
        for ctx in &self.branches {
            if ctx.rate_pu > 0.0 {
                let (pf, qf) = self.flow_exprs(ctx, true);
                socs.push(SocCon {
                    t: LinExpr::constant(ctx.rate_pu),
                    u: vec![pf, qf],
                });
                let (pt, qt) = self.flow_exprs(ctx, false);
                socs.push(SocCon {
                    t: LinExpr::constant(ctx.rate_pu),
                    u: vec![pt, qt],
                });
            }
        }
        self.socs.extend(socs);
    }

    /// Angle-difference cuts in W space: tan(θˡ)·Re(W) ≤ Im(W) ≤ tan(θᵘ)·Re(W).
    /// Synthetic default bounds produce no cut; the tangent there is
    /// numerically meaningless and the constraint carries no information.
    fn angle_w_cuts(&mut self) {
        let mut rows = Vec::new();
        for (&pair, &iv) in &self.pair_angle {
            if !self.pair_angle_real.contains(&pair) {
                continue;
            }
            let pw = self.w_pairs[&pair];
            rows.push((
                LinExpr::var(pw.im).add(pw.re, -iv.hi.tan()),
                Sense::Le,
            ));
            rows.push((
                LinExpr::var(pw.im).add(pw.re, -iv.lo.tan()),
                Sense::Ge,
            ));
        }
        for (expr, sense) in rows {
            self.cuts.push(expr, sense, 0.0);
        }
    }

    fn generator_objective(&mut self) {
        let base = self.net.base_mva;
        let gens: Vec<(usize, Var, Var)> = self.gen_vars.clone();
        for (gi, pg, _) in gens {
            let g = &self.net.generators[gi];
            let cost = g.cost;
            self.gen_costs.push(GenCost {
                p_var: pg,
                a: cost.a,
                b: cost.b,
                c: cost.c,
            });
            self.objective = std::mem::take(&mut self.objective)
                .add(pg, cost.b * base)
                .offset(cost.c);
            if cost.a != 0.0 {
                // epigraph t ≥ pg², objective term a·base²·t
                let p_max = g.p_max / base;
                let t = self.vars.fresh_bounded(
                    format!("cost_sq[{gi}]"),
                    0.0,
                    (p_max * p_max).max(1.0),
                );
                self.rsocs.push(crate::envelope::RotatedSocCut {
                    s: LinExpr::var(t),
                    t: LinExpr::constant(1.0),
                    u: vec![LinExpr::var(pg)],
                });
                self.objective =
                    std::mem::take(&mut self.objective).add(t, cost.a * base * base);
            }
        }
    }

    fn full_hermitian_block(&mut self) -> super::HermitianBlock {
        let n = self.net.n_buses();
        let mut upper = BTreeMap::new();
        for (&(i, j), pw) in &self.w_pairs {
            upper.insert((i, j), (pw.re, pw.im));
        }
        super::HermitianBlock {
            vertices: (0..n).collect(),
            diag: self.w_diag.clone(),
            upper,
        }
    }

    fn push_hermitian(&mut self, block: super::HermitianBlock) {
        let vertices = block.vertices.clone();
        let lift = super::lower_complex_to_real(&block);
        self.psd_blocks.push(PsdCon {
            dim: lift.dim,
            entries: lift.entries,
            vertices,
        });
    }

    /// Voltage magnitude and angle variables, the per-pair angle difference,
    /// the reference gauge and the square envelope tying v to the W
    /// diagonal.
    fn polar_foundation(&mut self) -> Result<(), BuildError> {
        let n = self.net.n_buses();
        let mut polar = PolarVars::default();
        for (i, bus) in self.net.buses.iter().enumerate() {
            polar
                .v
                .push(self.vars.fresh_bounded(format!("v[{i}]"), bus.v_min, bus.v_max));
        }
        for i in 0..n {
            polar.theta.push(self.vars.fresh(&format!("va[{i}]")));
        }
        let ref_idx = self.net.bus_index(self.net.ref_bus).expect("validated");
        self.cuts
            .push(LinExpr::var(polar.theta[ref_idx]), Sense::Eq, 0.0);

        let pair_keys: Vec<(usize, usize)> = self.pair_angle.keys().copied().collect();
        for pair in pair_keys {
            let iv = self.pair_angle[&pair];
            let th = self.vars.fresh_bounded(
                format!("th[{},{}]", pair.0, pair.1),
                iv.lo,
                iv.hi,
            );
            self.cuts.push(
                LinExpr::var(th)
                    .add(polar.theta[pair.0], -1.0)
                    .add(polar.theta[pair.1], 1.0),
                Sense::Eq,
                0.0,
            );
            polar.theta_pair.insert(pair, th);
        }
        // W_ii = ⟨v_i²⟩ᵀ
        for i in 0..n {
            let bus = &self.net.buses[i];
            let cuts = square_envelope_on(
                polar.v[i],
                self.w_diag[i],
                Interval::new(bus.v_min, bus.v_max).map_err(BuildError::Envelope)?,
            );
            self.cuts.extend(cuts);
        }
        self.polar = Some(polar);
        Ok(())
    }

    fn pair_interval(&self, i: usize) -> Interval {
        let bus = &self.net.buses[i];
        Interval {
            lo: bus.v_min,
            hi: bus.v_max,
        }
    }

    /// Shared ⟨v_i·v_j⟩ᴹ hat for one pair, created on first use.
    fn bilinear_hat(&mut self, pair: (usize, usize)) -> Result<Var, BuildError> {
        if let Some(&h) = self.pair_hats.get(&pair) {
            return Ok(h);
        }
        let polar = self.polar.as_ref().expect("polar foundation built");
        let (vi, vj) = (polar.v[pair.0], polar.v[pair.1]);
        let env = mccormick_bilinear(
            vi,
            vj,
            self.pair_interval(pair.0),
            self.pair_interval(pair.1),
            &mut self.vars,
        )?;
        self.cuts.extend(env.cuts);
        self.pair_hats.insert(pair, env.hat);
        Ok(env.hat)
    }

    /// Trig envelopes for one pair angle, returning (cos hat, sin hat,
    /// cos range, sin range).
    fn trig_for_pair(
        &mut self,
        pair: (usize, usize),
    ) -> Result<(Var, Var, Interval, Interval), BuildError> {
        let th = self.polar.as_ref().expect("polar").theta_pair[&pair];
        let iv = self.pair_angle[&pair];
        let env = trig_envelopes(th, iv, &mut self.vars)?;
        self.cuts.extend(env.cos.cuts);
        self.cuts.extend(env.sin.cuts);
        // the hat ranges are implied bounds; register them so the conic
        // lowering can exploit the box
        self.vars
            .set_bounds(env.cos.hat, env.cos_range.lo, env.cos_range.hi);
        self.vars
            .set_bounds(env.sin.hat, env.sin_range.lo, env.sin_range.hi);
        Ok((env.cos.hat, env.sin.hat, env.cos_range, env.sin_range))
    }

    /// Recursive-McCormick realization of (Re W, Im W) per modeled edge:
    /// the bilinear hat of the magnitudes composed with each trig hat.
    fn recursive_mccormick_w(&mut self) -> Result<(), BuildError> {
        let pairs: Vec<(usize, usize)> = self
            .branches
            .iter()
            .map(|b| b.pair)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for pair in pairs {
            let (cos_hat, sin_hat, cos_range, sin_range) = self.trig_for_pair(pair)?;
            self.mccormick_pair(pair, cos_hat, sin_hat, cos_range, sin_range)?;
        }
        Ok(())
    }

    /// One pair's W entries through the two-level McCormick composition.
    fn mccormick_pair(
        &mut self,
        pair: (usize, usize),
        cos_hat: Var,
        sin_hat: Var,
        cos_range: Interval,
        sin_range: Interval,
    ) -> Result<(), BuildError> {
        let m = self.bilinear_hat(pair)?;
        let bi = self.pair_interval(pair.0);
        let bj = self.pair_interval(pair.1);
        let m_box = product_box(bi, bj);
        let pw = self.w_pairs[&pair];
        let re_env = mccormick_bilinear(m, cos_hat, m_box, cos_range, &mut self.vars)?;
        self.cuts.extend(re_env.cuts);
        self.cuts
            .push(LinExpr::var(pw.re).add(re_env.hat, -1.0), Sense::Eq, 0.0);
        let im_env = mccormick_bilinear(m, sin_hat, m_box, sin_range, &mut self.vars)?;
        self.cuts.extend(im_env.cuts);
        self.cuts
            .push(LinExpr::var(pw.im).add(im_env.hat, -1.0), Sense::Eq, 0.0);
        Ok(())
    }

    /// λ-envelope realization of (Re W, Im W) with the cross-envelope
    /// linking equalities. The shared bilinear hat of each pair is pinned to
    /// the voltage product implied by both weight vectors, preserving the
    /// relationship between the product terms across all cuts that use it.
    /// Pairs whose trig ranges are too narrow fall back to recursive
    /// McCormick and are excluded from `lambda_pairs`.
    fn lambda_w(&mut self) -> Result<(), BuildError> {
        let polar_v = self.polar.as_ref().expect("polar").v.clone();
        let pairs: Vec<(usize, usize)> = self
            .branches
            .iter()
            .map(|b| b.pair)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for pair in pairs {
            let (cos_hat, sin_hat, cos_range, sin_range) = self.trig_for_pair(pair)?;
            if cos_range.width() < LAMBDA_MIN_RANGE || sin_range.width() < LAMBDA_MIN_RANGE {
                self.mccormick_pair(pair, cos_hat, sin_hat, cos_range, sin_range)?;
                continue;
            }
            self.lambda_pairs.insert(pair);
            let (vi, vj) = (polar_v[pair.0], polar_v[pair.1]);
            let bi = self.pair_interval(pair.0);
            let bj = self.pair_interval(pair.1);
            let lam_c = trilinear_lambda_envelope(
                [vi, vj, cos_hat],
                [bi, bj, cos_range],
                &mut self.vars,
            )?;
            self.cuts.extend(lam_c.cuts.clone());
            let lam_s = trilinear_lambda_envelope(
                [vi, vj, sin_hat],
                [bi, bj, sin_range],
                &mut self.vars,
            )?;
            self.cuts.extend(lam_s.cuts.clone());
            self.cuts.extend(linking_constraints(&lam_c, &lam_s)?);
            let pw = self.w_pairs[&pair];
            self.cuts
                .push(LinExpr::var(pw.re).add(lam_c.product, -1.0), Sense::Eq, 0.0);
            self.cuts
                .push(LinExpr::var(pw.im).add(lam_s.product, -1.0), Sense::Eq, 0.0);
            // m_ij = Σ λₖ·ξₖ¹·ξₖ² for both envelopes: exact for any graph
            // point, so never a restriction
            let m = self.bilinear_hat(pair)?;
            for lam in [&lam_c, &lam_s] {
                let mut row = LinExpr::var(m);
                for (k, corner) in lam.corners.iter().enumerate() {
                    row = row.add(lam.weights[k], -(corner[0] * corner[1]));
                }
                self.cuts.push(row.compact(), Sense::Eq, 0.0);
            }
        }
        Ok(())
    }

    /// 2×2 Hermitian minor cones on every modeled network edge.
    fn soc_minors(&mut self) {
        let pairs: BTreeSet<(usize, usize)> = self.branches.iter().map(|b| b.pair).collect();
        for pair in pairs {
            let pw = self.w_pairs[&pair];
            self.rsocs.push(soc_minor_cut(
                self.w_diag[pair.0],
                self.w_diag[pair.1],
                pw.re,
                pw.im,
            ));
        }
    }

    /// Lifted nonlinear cuts on every modeled network edge, in pair
    /// orientation.
    fn lnc_all_pairs(&mut self) {
        let mut rows = AffineCutSet::new();
        for (&pair, &iv) in &self.pair_angle {
            let pw = self.w_pairs[&pair];
            let phi = (iv.hi + iv.lo) / 2.0;
            let delta = (iv.hi - iv.lo) / 2.0;
            rows.extend(lnc_cuts(
                PairVars {
                    w_ii: self.w_diag[pair.0],
                    w_jj: self.w_diag[pair.1],
                    w_re: pw.re,
                    w_im: pw.im,
                },
                self.pair_interval(pair.0),
                self.pair_interval(pair.1),
                phi,
                delta,
            ));
        }
        self.cuts.extend(rows);
    }

    /// Voltage-difference envelopes for both directions of every limited
    /// branch, using the thermal intervals from bound tightening.
    fn vdiff_cuts(&mut self, bounds: Option<&TightenedBounds>) -> Result<(), BuildError> {
        let tb = match bounds {
            Some(tb) => tb,
            None => return Ok(()),
        };
        let polar_v = self.polar.as_ref().expect("polar").v.clone();
        let jobs: Vec<(usize, usize, (usize, usize), f64, Interval, bool)> = self
            .branches
            .iter()
            .flat_map(|ctx| {
                let mut out = Vec::new();
                if let Some((rho, iv)) = tb.vdiff_fwd[ctx.idx] {
                    out.push((ctx.fi, ctx.ti, ctx.pair, rho, iv, true));
                }
                if let Some((rho, iv)) = tb.vdiff_rev[ctx.idx] {
                    out.push((ctx.fi, ctx.ti, ctx.pair, rho, iv, false));
                }
                out
            })
            .collect();
        for (fi, ti, pair, rho, iv, forward) in jobs {
            let m = self.bilinear_hat(pair)?;
            // measuring end i, far end j: the interval constrains v_j − ρ·v_i
            let (i, j) = if forward { (fi, ti) } else { (ti, fi) };
            let cuts = vdiff_envelope_cuts(
                polar_v[i],
                polar_v[j],
                self.w_diag[i],
                self.w_diag[j],
                m,
                rho,
                iv,
                true,
            );
            self.cuts.extend(cuts);
        }
        Ok(())
    }

    fn finish(self) -> ModelInstance {
        ModelInstance {
            variant: self.variant,
            vars: self.vars,
            cuts: self.cuts,
            socs: self.socs,
            rsocs: self.rsocs,
            psd_blocks: self.psd_blocks,
            objective: self.objective,
            gen_costs: self.gen_costs,
            gen_vars: self.gen_vars,
            w_diag: self.w_diag,
            w_pairs: self.w_pairs,
            polar: self.polar,
            linking_equalities: self.linking,
            notes: self.notes,
        }
    }
}

fn product_box(a: Interval, b: Interval) -> Interval {
    let corners = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
    Interval {
        lo: corners.iter().copied().fold(f64::INFINITY, f64::min),
        hi: corners.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
