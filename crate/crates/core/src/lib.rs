//! Singular ("gap") diffusion on a rectangle Ω.
//!
//! A speed measure μ lives on a subset of Ω (a filled polygon or a union of
//! segments). The energy of a function on `supp μ` is the classical Dirichlet
//! energy of its harmonic extension across the gap `Ω∖supp μ`, with zero
//! values on ∂Ω. This crate discretizes that form with P1 elements on a
//! uniform mesh, computes the spectrum and semigroup of the generator
//! `H = M⁻¹Ã`, and simulates the jump process it generates.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod geometry;
pub mod io;
pub mod measure;
pub mod mesh;
pub mod operator;
pub mod problem;
pub mod process;
pub mod semigroup;
pub mod solver;
pub mod sparse;

pub use eigen::{eigen_smallest, EigenPair, MassKind};
pub use error::{Error, ErrorFamily, Result};
pub use geometry::{
    hyperplane_support, koch_snowflake, point_in_polygon, Point, Polygon, Rect, SegmentSet,
    SupportSpec,
};
pub use measure::{assemble_mass, classify_dofs, DofPartition, DofRole, MassMatrix};
pub use mesh::{build_uniform_mesh, Mesh};
pub use operator::{assemble_stiffness, ExtendedField, SchurOperator, SolverSettings};
pub use problem::Discretization;
pub use process::{
    build_ctmc, estimate_expectation, estimate_many, sample_path, Ctmc, McEstimate, PathSample,
    PathStatus,
};
pub use semigroup::{check_submarkov, evolve, EvolutionResult, MarkovReport};
pub use solver::{solve_spd, LinearOperator};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
