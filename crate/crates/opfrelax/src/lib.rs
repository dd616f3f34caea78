//! Convex relaxations of AC optimal power flow.
//!
//! The crate builds, tightens, decomposes and solves conic relaxations of
//! the AC-OPF problem: the full semidefinite relaxation, its chordal
//! decomposition with clique-tree or clique-graph merging, quadratic convex
//! envelopes with trilinear extreme-point hulls, lifted nonlinear cuts and
//! analytic bound tightening, all reduced to a solver-agnostic conic
//! standard form.

pub mod casefmt;
pub mod chordal;
pub mod conic;
pub mod cuts;
pub mod envelope;
pub mod expr;
pub mod linalg;
pub mod relax;
