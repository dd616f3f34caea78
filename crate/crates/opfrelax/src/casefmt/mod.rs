//! MATPOWER case parsing and network admittance construction.
//!
//! The parser accepts the matrix subset of the MATPOWER case format
//! (`baseMVA`, `bus`, `gen`, `branch`, `gencost`) and produces an immutable,
//! validated [`Network`]. Electrical quantities keep their file units (MW,
//! MVAr, MVA, degrees); per-unit accessors convert on demand so that a
//! serialize/re-parse round trip is bit-exact.

mod admittance;
mod parse;

pub use admittance::{build_admittance, AdmittanceModel, BranchAdmittance};
pub use parse::{network_to_json, parse_case, to_case_string};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Bus identifier as used in the case file (not necessarily consecutive).
pub type BusId = usize;

/// Default half-width for absent or degenerate angle-difference bounds.
/// Kept strictly inside (−π/2, π/2) so trigonometric envelopes stay valid.
pub const DEFAULT_ANGLE_BOUND: f64 = std::f64::consts::FRAC_PI_2 - 1e-6;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing required matrix `mpc.{0}`")]
    MissingMatrix(&'static str),
    #[error("{kind} references unknown bus {id}")]
    DanglingBus { kind: &'static str, id: BusId },
    #[error("baseMVA must be positive (got {0})")]
    BadBaseMva(f64),
    #[error("generator {index} uses a piecewise-linear cost model (unsupported)")]
    PiecewiseLinearCost { index: usize },
    #[error("generator {index} cost polynomial has degree > 2")]
    UnsupportedCostDegree { index: usize },
    #[error("gencost has {got} rows for {expected} generators")]
    CostRowMismatch { got: usize, expected: usize },
    #[error("network validation failed: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub bus_type: BusType,
    /// Active load, MW.
    pub pd: f64,
    /// Reactive load, MVAr.
    pub qd: f64,
    /// Shunt conductance, MW demanded at v = 1 p.u.
    pub gs: f64,
    /// Shunt susceptance, MVAr injected at v = 1 p.u.
    pub bs: f64,
    /// Voltage magnitude bounds, p.u.
    pub v_min: f64,
    pub v_max: f64,
}

/// Quadratic generation cost `a·P² + b·P + c` with P in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    /// Active power bounds, MW.
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive power bounds, MVAr.
    pub q_min: f64,
    pub q_max: f64,
    pub status: bool,
    pub cost: QuadraticCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Series impedance, p.u.
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, p.u.
    pub b_ch: f64,
    /// Tap ratio (file value 0 is normalized to 1.0 at parse time).
    pub tap: f64,
    /// Phase shift, degrees as stored in the file.
    pub shift_deg: f64,
    /// Long-term MVA rating; 0 means unlimited.
    pub rate_a: f64,
    /// Angle difference bounds, degrees as stored in the file.
    pub ang_min_deg: f64,
    pub ang_max_deg: f64,
    pub status: bool,
}

impl Branch {
    /// Phase shift in radians.
    pub fn shift(&self) -> f64 {
        self.shift_deg.to_radians()
    }

    /// Whether the branch carries a finite thermal rating.
    pub fn is_limited(&self) -> bool {
        self.status && self.rate_a > 0.0
    }

    /// Thermal rating in p.u. on the given MVA base.
    pub fn rate_a_pu(&self, base_mva: f64) -> f64 {
        self.rate_a / base_mva
    }

    /// Effective angle-difference bounds in radians.
    ///
    /// Absent bounds (both zero), bounds of magnitude ≥ 360°, and bounds
    /// outside ±90° fall back to ±[`DEFAULT_ANGLE_BOUND`]; genuine bounds
    /// are clamped into that interval.
    pub fn angle_bounds(&self) -> (f64, f64) {
        if !self.has_real_angle_bounds() {
            return (-DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND);
        }
        let lo = self.ang_min_deg.to_radians().max(-DEFAULT_ANGLE_BOUND);
        let hi = self.ang_max_deg.to_radians().min(DEFAULT_ANGLE_BOUND);
        (lo, hi)
    }

    /// True when the file provides usable (finite, non-degenerate) bounds.
    pub fn has_real_angle_bounds(&self) -> bool {
        let degenerate = self.ang_min_deg == 0.0 && self.ang_max_deg == 0.0;
        let unbounded = self.ang_min_deg.abs() >= 360.0 || self.ang_max_deg.abs() >= 360.0;
        let wide = self.ang_min_deg <= -90.0 && self.ang_max_deg >= 90.0;
        !(degenerate || unbounded || wide)
    }
}

/// A parsed and validated power network. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub ref_bus: BusId,
    #[serde(skip)]
    index: BTreeMap<BusId, usize>,
}

impl Network {
    pub(crate) fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Result<Self, CaseError> {
        let mut index = BTreeMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(CaseError::Invalid(format!("duplicate bus id {}", b.id)));
            }
        }
        let refs: Vec<BusId> = buses
            .iter()
            .filter(|b| b.bus_type == BusType::Ref)
            .map(|b| b.id)
            .collect();
        if refs.len() != 1 {
            return Err(CaseError::Invalid(format!(
                "expected exactly one reference bus, found {}",
                refs.len()
            )));
        }
        let net = Network {
            base_mva,
            buses,
            generators,
            branches,
            ref_bus: refs[0],
            index,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::BadBaseMva(self.base_mva));
        }
        for b in &self.buses {
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(CaseError::Invalid(format!(
                    "bus {}: voltage bounds must satisfy 0 < v_min <= v_max (got [{}, {}])",
                    b.id, b.v_min, b.v_max
                )));
            }
        }
        for g in &self.generators {
            if self.bus_index(g.bus).is_none() {
                return Err(CaseError::DanglingBus {
                    kind: "generator",
                    id: g.bus,
                });
            }
            if g.status && (g.p_min > g.p_max || g.q_min > g.q_max) {
                return Err(CaseError::Invalid(format!(
                    "generator at bus {}: inverted capability bounds",
                    g.bus
                )));
            }
        }
        for br in &self.branches {
            for id in [br.from, br.to] {
                if self.bus_index(id).is_none() {
                    return Err(CaseError::DanglingBus { kind: "branch", id });
                }
            }
            if br.status && br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::Invalid(format!(
                    "branch {}-{}: zero series impedance",
                    br.from, br.to
                )));
            }
            if !(br.tap > 0.0) {
                return Err(CaseError::Invalid(format!(
                    "branch {}-{}: tap ratio must be positive",
                    br.from, br.to
                )));
            }
            if !br.rate_a.is_finite() {
                return Err(CaseError::Invalid(format!(
                    "branch {}-{}: non-finite rating",
                    br.from, br.to
                )));
            }
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Dense 0-based index of a bus id.
    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Complex load at a bus index, p.u.
    pub fn load_pu(&self, idx: usize) -> num_complex::Complex64 {
        let b = &self.buses[idx];
        num_complex::Complex64::new(b.pd, b.qd) / self.base_mva
    }

    /// Shunt admittance at a bus index, p.u.
    pub fn shunt_pu(&self, idx: usize) -> num_complex::Complex64 {
        let b = &self.buses[idx];
        num_complex::Complex64::new(b.gs, b.bs) / self.base_mva
    }

    /// Rebuild the id index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
    }

    /// In-service generators with their bus indices.
    pub fn active_generators(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.status)
    }

    /// In-service branches with their positions in the branch list.
    pub fn active_branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.status)
    }
}
