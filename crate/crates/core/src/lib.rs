//! First-passage times of one-dimensional diffusions through two time-varying
//! boundaries: sub-densities, the joint density of the two hitting times, its
//! copula, Laplace-domain checks and a Monte Carlo oracle.

pub mod boundary;
pub mod closed_form;
pub mod config;
pub mod error;
pub mod interp;
pub mod joint;
pub mod laplace;
pub mod mc;
pub mod normal;
pub mod output;
pub mod process;
pub mod volterra;

pub use boundary::{Boundary, Configuration, StripProblem};
pub use error::{FptError, Result};
pub use process::{Process, ProcessKind, TransitionKernel};
pub use volterra::{solve_single_boundary, solve_two_boundary, Side, SubDensityPair, TimeGrid};
