//! Numerical toolkit for the geometry of hyperbolic ends on discrete surfaces.
//!
//! The crate works with triangulated closed oriented surfaces carrying
//! per-edge metrics. On top of that substrate it provides:
//!
//! - discrete conformal changes and uniformization to curvature -1 ([`conformal`]),
//! - symmetric 2-tensor fields, a discrete Codazzi operator and numerical
//!   bases of traceless Codazzi tensors ([`tensor`]),
//! - reconstruction of equidistant foliation leaves from data at infinity
//!   and the W-functional along the foliation ([`end_geometry`]),
//! - finite-difference verification of the first-variation identities
//!   ([`variation`]),
//! - the Riccati comparison ODE, its inverse phi and holomorphic-disk
//!   radius bounds ([`riccati`]),
//! - Nehari/Weil-Petersson bound arithmetic ([`bounds`]),
//! - flat-strip grafting along discrete geodesics ([`grafting`]).
//!
//! All types are immutable values after construction and all operations are
//! pure functions, so everything is safe to share across threads.

pub mod bounds;
pub mod conformal;
pub mod end_geometry;
pub mod fixtures;
pub mod grafting;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod riccati;
pub mod tensor;
pub mod variation;

pub use mesh::{DiscreteMetric, Mesh, ScalarField};
