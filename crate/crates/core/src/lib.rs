//! Positivity-preserving, energy-stable finite-difference solver for the
//! Poisson-Nernst-Planck-Cahn-Hilliard equations on periodic grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: periodic cell-centred grids, cell and face fields, stencils,
//!   inner products and norms.
//! - [`elliptic`]: mean-zero solves of `-div(D grad phi) = f` and the
//!   discrete `H^-1` inner product.
//! - [`model`]: species, steric splitting, dimensionless coefficients,
//!   fixed charges and initial data.
//! - [`scheme`]: the semi-implicit convex-splitting step, its Newton solver,
//!   the discrete free energy and the time loop.
//! - [`mms`]: manufactured solutions and convergence studies.

pub mod eigen;
pub mod elliptic;
pub mod grid;
pub mod mms;
pub mod model;
pub mod scheme;
mod spectral;

pub use elliptic::{
    hminus1_inner, hminus1_norm, solve_zero_mean, EllipticError, EllipticProblem,
    EllipticSolveReport, EllipticSolver,
};
pub use grid::{
    div, div_coeff_grad, edge_average, edge_inner, grad, inner, laplace, norms, CellField,
    EdgeField, GridError, Norms, PeriodicGrid,
};
pub use mms::{
    case_1d, case_2d, convergence_study, run_forced, ConvergenceRow, ConvergenceStudy,
    ManufacturedCase,
};
pub use model::{
    check_neutrality, make_fixed_charge, make_initial_condition, nondimensionalize, split_steric,
    ChargeSpec, Electrostatics, InitSpec, Model, ModelError, Neutrality, PhysicalInputs,
    SpeciesSet, SquareMatrix, StericSplit,
};
pub use scheme::{
    discrete_free_energy, run, EnergyBreakdown, Horizon, RunOutput, SchemeError, SeriesRecord,
    StepConfig, StepReport, Stepper, SystemState,
};
