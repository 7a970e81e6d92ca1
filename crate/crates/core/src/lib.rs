//! Simulation and Monte Carlo verification of alpha-homogeneous classes of
//! random fields on lattices.

pub mod anchoring;
pub mod cli;
pub mod config;
pub mod error;
pub mod extremal;
pub mod field;
pub mod functional;
pub mod gaussian;
pub mod lattice;
pub mod maxstable;
pub mod mc;
pub mod norm;
pub mod pareto;
pub mod tailfields;

pub use error::{Error, Result};
pub use field::{FieldSample, FieldSampler, FieldView};
pub use functional::{BoundFunctional, FunctionalSpec, Homogeneity, Measure, Normalizer, Region};
pub use lattice::{Lattice, Point, Window};
pub use mc::{compare, ComparisonReport, MCEstimate, McConfig};
pub use norm::HomogeneousNorm;
pub use pareto::ParetoAlpha;
