//! Variable-exponent function spaces and an implicit variational solver for
//! the Dirichlet problem of the evolution `p(x,t)`-Laplacian with nonlinear
//! sources, with tools to measure continuous dependence on the data.

pub mod error;
pub mod exponent;
pub mod expr;
pub mod grid;
pub mod oracles;
pub mod solver;
pub mod spaces;
pub mod stability;

pub use error::{Error, Result};
pub use exponent::{check_proximity, conjugate, r_star, ExponentField, ProximityReport};
pub use expr::{ScalarExpr, SpaceTimeExpr};
pub use grid::{Grid, Rect};
pub use solver::{solve, ProblemSpec, SolveResult, SourceSpec};
pub use spaces::{GridFunction, Region, VectorField};
pub use stability::Variant;
