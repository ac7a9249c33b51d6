//! Samplers and exact verification machinery for oriented cycle-rooted
//! spanning forests (CRSFs) on graph-discretized surfaces, together with the
//! random-walk loop measure they are built from.
//!
//! The crate provides:
//!
//! - [`surface`]: embedded graphs as combinatorial maps with fundamental-group
//!   edge labels, contractibility tests, the all-annuli (Temperleyan)
//!   condition, and dual complement cycles;
//! - [`walk`]: the weighted random walk, chronological loop erasure with full
//!   erased-loop records, and the noncontractible-cycle stopping rule;
//! - [`wilson`]: CRSF samplers for the wired, Temperleyan and dual-reweighted
//!   laws, plus the cell-based vertex ordering;
//! - [`loopmeasure`]: exact loop-measure computations (Green values, masses of
//!   loops hitting a path, branch densities, pair factorization) and a Poisson
//!   loop-soup sampler;
//! - [`exactdist`]: independent brute-force oracles (absorbing chains on
//!   self-avoiding-path states, exhaustive CRSF enumeration, length-truncated
//!   loop sums with certified tails);
//! - [`pairchain`]: the concentric-scale apparatus for a pair of paths
//!   conditioned to stay disjoint (unnormalized measures, marginals,
//!   h-transform, one-scale Markov chain, separation predicates);
//! - [`io`] and [`render`]: the text graph format, sample records, experiment
//!   records and SVG figures.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `crsf` binary for the command-line interface.

pub mod cli;
pub mod error;
pub mod exactdist;
pub mod fixtures;
pub mod homotopy;
pub mod io;
pub mod linalg;
pub mod loopmeasure;
pub mod pairchain;
pub mod render;
pub mod stats;
pub mod surface;
pub mod walk;
pub mod wilson;

pub use error::{Error, Result};
pub use homotopy::{GroupKind, HomotopyWord};
pub use surface::{DirEdge, EdgeId, FaceId, SurfaceGraph, SurfaceSpec, VertexId};
