//! Mixed finite element solver for the clamped Kirchhoff plate bending problem.
//!
//! The plate model is discretized with the lowest-order Hellan-Herrmann-Johnson
//! (HHJ) method: piecewise constant symmetric bending moments with continuous
//! normal-normal component, paired with continuous piecewise linear deflections.
//! The resulting saddle point system is solved by a V-cycle multigrid method
//! whose smoother sweeps over vertex patches and corrects inside the kernel of
//! the discrete double-divergence constraint, parametrized through the
//! symmetric-curl image of vector hat functions.
//!
//! The crate is organized around the pieces of that solver:
//!
//! - [`mesh`]: triangulations, uniform red refinement, nested hierarchies;
//! - [`hhj`]: element spaces, operator assembly, interpolation and projection;
//! - [`certify`]: executable checks of the discrete exact sequence
//!   `P1bar -> S_h -> V_h -> P_h -> 0` and of the interpolation
//!   commutativity properties the solver relies on;
//! - [`multigrid`]: hierarchy construction, patch smoother, V-cycle, and
//!   contraction-factor measurement;
//! - [`pipeline`]: source transfer, deflection recovery, manufactured
//!   solutions, and error norms;
//! - [`cli`]: the experiment driver behind the `platemg` binary.

pub mod certify;
pub mod cli;
pub mod error;
pub mod hhj;
pub mod mesh;
pub mod multigrid;
pub mod pipeline;
pub mod poly2;
pub mod quadrature;
pub mod sparse;

#[cfg(test)]
pub(crate) mod testmesh;

pub use error::{Error, Result};
