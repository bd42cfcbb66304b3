//! Semi-implicit convex-splitting time step, its Newton solver, the discrete
//! free energy and the time loop.
//!
//! One step advances `(c^m, mu^m, psi)` from level `l` to `l + 1` by solving
//!
//! ```text
//! (c^m - c^m_old) / dt = eps^m div_h(A_h c^m_old grad_h mu^m) + f^m
//! mu^m = z^m psi + log c^m + sum_n gc^{mn} c^n - sigma^m Delta_h c^m - sum_n ge^{mn} c^n_old
//! -kappa Delta_h psi = sum_m z^m c^m + rho_f
//! ```
//!
//! where `A_h` is the face average and `f^m` is an optional source used only
//! for manufactured solutions.

mod energy;
mod jacobian;
mod newton;
mod residual;
mod run;

use thiserror::Error;

use crate::elliptic::EllipticError;
use crate::grid::{CellField, GridError};
use crate::model::ModelError;

pub use energy::{discrete_free_energy, EnergyBreakdown};
pub use newton::{newton_step_solve, Linearization, Stepper};
pub use residual::{chemical_potential_semi_implicit, residual, residual_forced, ResidualBlocks};
pub use run::{run, Horizon, InvariantKind, RunOutput, SeriesRecord};

/// Solution at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub step_index: usize,
    pub c: Vec<CellField>,
    pub psi: CellField,
    pub mu: Vec<CellField>,
}

impl SystemState {
    pub fn species(&self) -> usize {
        self.c.len()
    }

    pub fn min_concentrations(&self) -> Vec<f64> {
        self.c.iter().map(CellField::min).collect()
    }

    /// Total amount of each species, `h^d sum c^m`.
    pub fn masses(&self) -> Vec<f64> {
        self.c.iter().map(CellField::integral).collect()
    }
}

/// Unknowns of one Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub c: Vec<CellField>,
    pub mu: Vec<CellField>,
    pub psi: CellField,
}

impl Candidate {
    pub fn from_state(state: &SystemState) -> Self {
        Self {
            c: state.c.clone(),
            mu: state.mu.clone(),
            psi: state.psi.clone(),
        }
    }
}

/// Source terms for a forced step: `source[m]` is added to the right side
/// of the concentration update, `rho_f` replaces the fixed charge.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub source: Vec<CellField>,
    pub rho_f: Option<CellField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    /// Sup-norm bound on the stacked residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative residual targeted by iterative refinement of each linear solve.
    pub linear_tol: f64,
    /// Refinement sweeps allowed per linear solve.
    pub linear_max_iter: usize,
    /// Fraction-to-boundary factor in `(0, 1)`.
    pub damping_safety: f64,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            linear_tol: 1e-12,
            linear_max_iter: 3,
            damping_safety: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |key: &'static str, reason: &'static str| {
            Err(SchemeError::InvalidConfig { key, reason })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol", "must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter", "must be at least 1");
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol", "must be positive");
        }
        if !(self.damping_safety > 0.0 && self.damping_safety < 1.0) {
            return bad("damping_safety", "must lie strictly between 0 and 1");
        }
        Ok(())
    }

    /// Allowed energy increase per step: `100 * newton_tol * N^d`.
    pub fn energy_slack(&self, cells: usize) -> f64 {
        100.0 * self.newton_tol * cells as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub damping_activations: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub energy_terms: EnergyBreakdown,
    /// `mean(c_new) - mean(c_old)` per species.
    pub mass_drift: Vec<f64>,
    pub min_concentration: Vec<f64>,
}

#[derive(Debug, Error, Clone)]
pub enum SchemeError {
    #[error("concentration {species} is not positive at cell {cell} (value {value:.3e})")]
    NonPositiveConcentration {
        species: usize,
        cell: usize,
        value: f64,
    },
    #[error("Newton iteration stalled after {iterations} iterations at residual {residual:.3e}")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),
    #[error("fraction-to-boundary damping shrank the step to {step_fraction:.3e} at Newton iteration {iteration}")]
    PositivityLost {
        iteration: usize,
        step_fraction: f64,
    },
    #[error("initial data are not electroneutral (residual {residual:.3e})")]
    NotNeutral { residual: f64 },
    #[error("{key} {reason}")]
    InvalidConfig {
        key: &'static str,
        reason: &'static str,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{kind} invariant violated at step {step}: {detail}")]
    InvariantViolation {
        kind: InvariantKind,
        step: usize,
        detail: String,
    },
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}
