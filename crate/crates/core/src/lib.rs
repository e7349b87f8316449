//! Forward-looking evolutionary game dynamics with exploration-cost constraints.
//!
//! A population's distribution of actions on `[0, 1]` (or `[0, 1]²`) evolves
//! under pairwise-comparison protocols. Agents compare *value functions*
//! rather than raw utilities, and the switching intensity is scaled by a
//! Lagrange multiplier `η` that makes aggregate exploration cost meet a
//! budget `ε`. Every explicit Euler step therefore solves a static HJB
//! system for `(Φ, η)` first.
//!
//! Modules:
//! * [`grid`]: cell partitions and probability masses
//! * [`utility`]: utility families evaluated at cell centers
//! * [`hjb`]: value function and multiplier solvers
//! * [`dynamics`]: time stepping and the simulation driver
//! * [`diagnostics`]: exploration cost, Nash gap, convergence studies

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod numerics;
pub mod utility;

pub use error::{EgdError, Result};
pub use grid::{Density, Grid, Grid1D, Grid2D};
