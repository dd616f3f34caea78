//! Assembly of relaxation model instances over a shared variable registry.

mod build;
mod lift;
mod linking;
mod recover;

pub use build::{build_model, BuildConfig, BuildError, BuildInputs};
pub use lift::{lift_to_dense, lower_complex_to_real, HermitianBlock, RealLift};
pub use linking::{chr_complex_blocks, chr_r_blocks, chr_rms_blocks, linking_equality_count};
pub use recover::{recover_voltages, VoltageRecovery};

use crate::envelope::RotatedSocCut;
use crate::expr::{AffineCutSet, LinExpr, Var, VarSource};
use serde::Serialize;
use std::collections::BTreeMap;

/// Relaxation variants built by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Full-matrix semidefinite relaxation.
    Sdr,
    /// Chordal relaxation, complex blocks lowered through the ring
    /// isomorphism with structural variable sharing.
    ChrC,
    /// Chordal relaxation in real form with explicit matrix-symmetry
    /// equalities.
    ChrRms,
    /// Chordal relaxation in real form without the symmetry coupling.
    ChrR,
    /// Quadratic convex relaxation with recursive McCormick envelopes.
    Qc,
    /// QC with trilinear extreme-point envelopes and linking.
    QcTlm,
    /// Intersection of the chordal and λ-based QC models plus valid
    /// inequalities and tightened bounds.
    EChrTlmC,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sdr => "sdr",
            Variant::ChrC => "chr-c",
            Variant::ChrRms => "chr-rms",
            Variant::ChrR => "chr-r",
            Variant::Qc => "qc",
            Variant::QcTlm => "qc-tlm",
            Variant::EChrTlmC => "e-chr-tlm-c",
        }
    }

    pub fn needs_decomposition(&self) -> bool {
        matches!(
            self,
            Variant::ChrC | Variant::ChrRms | Variant::ChrR | Variant::EChrTlmC
        )
    }

    pub fn has_polar_variables(&self) -> bool {
        matches!(self, Variant::Qc | Variant::QcTlm | Variant::EChrTlmC)
    }
}

/// Scalar variable registry with names and box bounds.
#[derive(Debug, Default)]
pub struct VarRegistry {
    names: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    pub fn bounds(&self, v: Var) -> (f64, f64) {
        (self.lo[v.0], self.hi[v.0])
    }

    pub fn set_bounds(&mut self, v: Var, lo: f64, hi: f64) {
        self.lo[v.0] = lo;
        self.hi[v.0] = hi;
    }

    pub fn fresh_bounded(&mut self, name: String, lo: f64, hi: f64) -> Var {
        let v = Var(self.names.len());
        self.names.push(name);
        self.lo.push(lo);
        self.hi.push(hi);
        v
    }
}

impl VarSource for VarRegistry {
    fn fresh(&mut self, label: &str) -> Var {
        self.fresh_bounded(label.to_string(), f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Plain second-order constraint `‖u‖ ≤ t`.
#[derive(Debug, Clone)]
pub struct SocCon {
    pub t: LinExpr,
    pub u: Vec<LinExpr>,
}

/// Real symmetric PSD block with affine entries (svec order) and, for
/// recovery, the bus vertices it covers.
#[derive(Debug, Clone)]
pub struct PsdCon {
    pub dim: usize,
    pub entries: Vec<LinExpr>,
    pub vertices: Vec<usize>,
}

/// Convex quadratic generator cost `a·(P·base)² + b·(P·base) + c`.
#[derive(Debug, Clone, Copy)]
pub struct GenCost {
    pub p_var: Var,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Canonical W-space variables of one modeled bus pair (i < j).
#[derive(Debug, Clone, Copy)]
pub struct PairW {
    pub re: Var,
    pub im: Var,
}

/// Polar-side variables, present in the QC family and the intersected model.
#[derive(Debug, Clone, Default)]
pub struct PolarVars {
    /// Voltage magnitude per bus index.
    pub v: Vec<Var>,
    /// Bus angle per bus index.
    pub theta: Vec<Var>,
    /// Angle difference variable per modeled pair.
    pub theta_pair: BTreeMap<(usize, usize), Var>,
}

/// Counts per constraint class, for reports.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ModelStats {
    pub variables: usize,
    pub affine_eq: usize,
    pub affine_ineq: usize,
    pub quad_cuts: usize,
    pub soc: usize,
    pub rsoc: usize,
    pub psd_blocks: usize,
    pub max_psd_dim: usize,
    pub linking_equalities: usize,
}

/// A fully assembled relaxation instance.
pub struct ModelInstance {
    pub variant: Variant,
    pub vars: VarRegistry,
    /// Affine rows and second-order-representable quadratic cuts.
    pub cuts: AffineCutSet,
    pub socs: Vec<SocCon>,
    pub rsocs: Vec<RotatedSocCut>,
    pub psd_blocks: Vec<PsdCon>,
    /// Linear objective terms ($/h); constant carries the Σc offsets.
    pub objective: LinExpr,
    /// Quadratic cost terms, lowered to epigraphs at build time; kept for
    /// reporting the model composition.
    pub gen_costs: Vec<GenCost>,
    /// (generator list index, P variable, Q variable) per in-service
    /// machine, in network order.
    pub gen_vars: Vec<(usize, Var, Var)>,
    /// W diagonal variable per bus index.
    pub w_diag: Vec<Var>,
    /// Canonical W off-diagonal variables per modeled pair (i < j).
    pub w_pairs: BTreeMap<(usize, usize), PairW>,
    pub polar: Option<PolarVars>,
    /// Number of emitted block-linking equalities.
    pub linking_equalities: usize,
    /// Diagnostics accumulated during assembly.
    pub notes: Vec<String>,
}

impl ModelInstance {
    pub fn stats(&self) -> ModelStats {
        let affine_eq = self
            .cuts
            .affine
            .iter()
            .filter(|c| c.sense == crate::expr::Sense::Eq)
            .count();
        ModelStats {
            variables: self.vars.len(),
            affine_eq,
            affine_ineq: self.cuts.affine.len() - affine_eq,
            quad_cuts: self.cuts.quadratic.len(),
            soc: self.socs.len(),
            rsoc: self.rsocs.len(),
            psd_blocks: self.psd_blocks.len(),
            max_psd_dim: self.psd_blocks.iter().map(|b| b.dim).max().unwrap_or(0),
            linking_equalities: self.linking_equalities,
        }
    }

    /// PSD block dimension histogram (dim → count).
    pub fn psd_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for b in &self.psd_blocks {
            *h.entry(b.dim).or_insert(0) += 1;
        }
        h
    }
}
