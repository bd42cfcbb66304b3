use std::fmt;

use log::info;

use crate::model::check_neutrality;

use super::energy::EnergyBreakdown;
use super::newton::Stepper;
use super::{SchemeError, SystemState};

/// How far to integrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Steps(usize),
    /// Final time; the step count is `T / dt` rounded to the nearest integer.
    Until(f64),
}

impl Horizon {
    pub fn steps(&self, dt: f64) -> usize {
        match *self {
            Horizon::Steps(n) => n,
            Horizon::Until(t) => (t / dt - 1e-9).ceil().max(0.0) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantKind {
    Mass,
    Positivity,
    Energy,
}

impl fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvariantKind::Mass => "mass",
            InvariantKind::Positivity => "positivity",
            InvariantKind::Energy => "energy",
        })
    }
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub step: usize,
    pub time: f64,
    pub energy: EnergyBreakdown,
    /// `h^d sum c^m` per species.
    pub mass: Vec<f64>,
    pub min_concentration: Vec<f64>,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: SystemState,
    pub series: Vec<SeriesRecord>,
}

/// Advances `state0` with fixed steps, checking mass, positivity and energy
/// after every step. `observer` sees the initial state and every accepted
/// step.
pub fn run(
    stepper: &Stepper,
    state0: SystemState,
    horizon: Horizon,
    observer: &mut dyn FnMut(&SystemState, &SeriesRecord),
) -> Result<RunOutput, SchemeError> {
    let model = stepper.model();
    let cfg = stepper.config();
    let grid = model.grid();
    let neutral_tol = 1e-10 * state0.c.iter().map(|c| c.max_abs()).fold(1.0, f64::max);
    let neutrality = check_neutrality(
        &model.species,
        &state0.c,
        model.electrostatics.rho_f(),
        neutral_tol,
    );
    if !neutrality.is_neutral() {
        return Err(SchemeError::NotNeutral {
            residual: neutrality.residual(),
        });
    }
    let mass_tol = 10.0 * cfg.newton_tol / grid.volume();
    let energy_slack = cfg.energy_slack(grid.len());

    let energy0 = stepper.energy(&state0.c)?;
    let first = SeriesRecord {
        step: state0.step_index,
        time: state0.time,
        energy: energy0,
        mass: state0.masses(),
        min_concentration: state0.min_concentrations(),
        newton_iterations: 0,
    };
    observer(&state0, &first);
    let mut series = vec![first];
    let mut state = state0;
    let n_steps = horizon.steps(cfg.dt);
    for _ in 0..n_steps {
        let (next, report) = stepper.step(&state)?;
        let step = next.step_index;
        for (s, drift) in report.mass_drift.iter().enumerate() {
            if !(drift.abs() <= mass_tol) {
                return Err(SchemeError::InvariantViolation {
                    kind: InvariantKind::Mass,
                    step,
                    detail: format!(
                        "species {s} mean drifted by {drift:.3e} (allowed {mass_tol:.3e})"
                    ),
                });
            }
        }
        for (s, &min) in report.min_concentration.iter().enumerate() {
            if !(min > 0.0) {
                return Err(SchemeError::InvariantViolation {
                    kind: InvariantKind::Positivity,
                    step,
                    detail: format!("species {s} reached {min:.3e}"),
                });
            }
        }
        let rise = report.energy_after - report.energy_before;
        if !(rise <= energy_slack) {
            return Err(SchemeError::InvariantViolation {
                kind: InvariantKind::Energy,
                step,
                detail: format!("energy rose by {rise:.3e} (allowed {energy_slack:.3e})"),
            });
        }
        let record = SeriesRecord {
            step,
            time: next.time,
            energy: report.energy_terms,
            mass: next.masses(),
            min_concentration: report.min_concentration.clone(),
            newton_iterations: report.newton_iterations,
        };
        if step % 100 == 0 {
            info!(
                "step {step} t = {:.4} F = {:.10e} newton = {}",
                next.time, record.energy.total, record.newton_iterations
            );
        }
        observer(&next, &record);
        series.push(record);
        state = next;
    }
    Ok(RunOutput {
        final_state: state,
        series,
    })
}
