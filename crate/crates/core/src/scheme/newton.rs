use std::sync::Mutex;

use log::debug;

use crate::elliptic::{attainable_tolerance, default_max_iter, EllipticProblem, EllipticSolver};
use crate::grid::{CellField, EdgeField};
use crate::model::Model;

use super::energy::{energy_with, EnergyBreakdown};
use super::jacobian::{for_each_entry, SparseJacobian};
use super::residual::{
    check_positive, chemical_potential_semi_implicit, residual_flat, Layout, StepData,
};
use super::{Candidate, Forcing, SchemeError, StepConfig, StepReport, SystemState};

/// Smallest damped step length accepted before giving up on positivity.
const MIN_STEP_FRACTION: f64 = 1e-12;

/// Time stepper bound to one model and step configuration.
///
/// Holds the Poisson preconditioner and the symbolic factorisation of the
/// Newton matrix so that repeated steps only redo numeric work.
#[derive(Debug)]
pub struct Stepper {
    model: Model,
    cfg: StepConfig,
    layout: Layout,
    poisson: EllipticSolver,
    jacobian: Mutex<SparseJacobian>,
}

impl Stepper {
    pub fn new(model: Model, cfg: StepConfig) -> Result<Self, SchemeError> {
        cfg.validate()?;
        let grid = model.grid().clone();
        let layout = Layout {
            species: model.species.len(),
            cells: grid.len(),
        };
        let jacobian = SparseJacobian::new(&model, &layout)?;
        Ok(Self {
            poisson: EllipticSolver::new(&grid),
            model,
            cfg,
            layout,
            jacobian: Mutex::new(jacobian),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Completes initial concentrations with the mean-zero potential of
    /// `-kappa Delta_h psi = sum z c + rho_f` and the matching chemical
    /// potentials.
    pub fn initial_state(&self, c: Vec<CellField>) -> Result<SystemState, SchemeError> {
        let rho = self.model.electrostatics.rho_f().clone();
        self.initial_state_with_charge(c, &rho)
    }

    pub fn initial_state_with_charge(
        &self,
        c: Vec<CellField>,
        rho_f: &CellField,
    ) -> Result<SystemState, SchemeError> {
        let m = &self.model;
        let grid = m.grid();
        if c.len() != m.species.len() || c.iter().any(|f| f.grid() != grid) {
            return Err(SchemeError::ShapeMismatch(
                "initial concentrations do not match the model".into(),
            ));
        }
        let mut charge = rho_f.clone();
        for (f, &z) in c.iter().zip(m.species.valence()) {
            charge.add_scaled(z as f64, f);
        }
        let kappa = EdgeField::constant(grid, m.electrostatics.kappa());
        let (psi, _) = self.poisson.solve(
            &EllipticProblem::new(&kappa, &charge),
            attainable_tolerance(1e-13, &kappa),
            default_max_iter(grid),
        )?;
        let mu = chemical_potential_semi_implicit(&c, &c, &psi, &m.species, &m.split)?;
        Ok(SystemState {
            time: 0.0,
            step_index: 0,
            c,
            psi,
            mu,
        })
    }

    pub fn energy(&self, c: &[CellField]) -> Result<EnergyBreakdown, SchemeError> {
        energy_with(
            &self.poisson,
            c,
            self.model.electrostatics.rho_f(),
            &self.model,
        )
    }

    pub fn step(&self, old: &SystemState) -> Result<(SystemState, StepReport), SchemeError> {
        self.solve(old, &Candidate::from_state(old), None)
    }

    pub fn step_forced(
        &self,
        old: &SystemState,
        forcing: &Forcing,
    ) -> Result<(SystemState, StepReport), SchemeError> {
        self.solve(old, &Candidate::from_state(old), Some(forcing))
    }

    /// One step from an explicit Newton starting point.
    pub fn step_with_guess(
        &self,
        old: &SystemState,
        guess: &Candidate,
        forcing: Option<&Forcing>,
    ) -> Result<(SystemState, StepReport), SchemeError> {
        self.solve(old, guess, forcing)
    }

    /// Residual and Jacobian of one step, for diagnostics and tests.
    pub fn linearization(
        &self,
        old: &SystemState,
        forcing: Option<&Forcing>,
    ) -> Result<Linearization<'_>, SchemeError> {
        Ok(Linearization {
            stepper: self,
            data: StepData::new(&self.model, &old.c, self.cfg.dt, forcing)?,
        })
    }

    fn solve(
        &self,
        old: &SystemState,
        guess: &Candidate,
        forcing: Option<&Forcing>,
    ) -> Result<(SystemState, StepReport), SchemeError> {
        let cfg = &self.cfg;
        let layout = &self.layout;
        let model = &self.model;
        let data = StepData::new(model, &old.c, cfg.dt, forcing)?;
        let rho_step = CellField::from_values(model.grid(), data.rho.clone()).expect("grid length");
        let energy_before = energy_with(&self.poisson, &old.c, &rho_step, model)?;

        let mut x = layout.pack(guess);
        check_positive(layout, &x)?;
        let shift = mean(&x[layout.psi()]);
        x[layout.psi()].iter_mut().for_each(|v| *v -= shift);

        let mut f = vec![0.0; layout.total()];
        residual_flat(model, layout, &data, &x, &mut f)?;
        let mut res = sup(&f);
        let mut iterations = 0;
        let mut damping_activations = 0;
        let mut jac = self.jacobian.lock().unwrap_or_else(|e| e.into_inner());
        let mut delta = vec![0.0; layout.total()];
        while res > cfg.newton_tol {
            if iterations >= cfg.newton_max_iter {
                return Err(SchemeError::NewtonDiverged {
                    iterations,
                    residual: res,
                });
            }
            jac.assemble(model, layout, &data.mobility, &x, cfg.dt);
            let factor = jac.factor()?;
            delta.iter_mut().zip(&f).for_each(|(d, r)| *d = -r);
            delta[layout.psi().start] = 0.0;
            jac.solve(&factor, &mut delta, cfg.linear_tol, cfg.linear_max_iter)?;

            let mut ratio = f64::INFINITY;
            for s in 0..layout.species {
                for (c, d) in x[layout.c(s)].iter().zip(&delta[layout.c(s)]) {
                    if *d < 0.0 {
                        ratio = ratio.min(-c / d);
                    }
                }
            }
            let alpha = (cfg.damping_safety * ratio).min(1.0);
            if alpha < 1.0 {
                damping_activations += 1;
            }
            if !(alpha >= MIN_STEP_FRACTION) {
                return Err(SchemeError::PositivityLost {
                    iteration: iterations,
                    step_fraction: alpha,
                });
            }
            x.iter_mut()
                .zip(&delta)
                .for_each(|(xi, di)| *xi += alpha * di);
            self.regauge(&mut x);
            iterations += 1;
            residual_flat(model, layout, &data, &x, &mut f)?;
            res = sup(&f);
            debug!("newton iteration {iterations}: residual {res:.3e}, step {alpha:.3}");
        }
        drop(jac);

        let cand = layout.unpack(model.grid(), &x);
        let energy_terms = energy_with(&self.poisson, &cand.c, &rho_step, model)?;
        let mass_drift = cand
            .c
            .iter()
            .zip(&old.c)
            .map(|(n, o)| n.mean() - o.mean())
            .collect();
        let min_concentration = cand.c.iter().map(CellField::min).collect();
        let state = SystemState {
            time: old.time + cfg.dt,
            step_index: old.step_index + 1,
            c: cand.c,
            psi: cand.psi,
            mu: cand.mu,
        };
        let report = StepReport {
            newton_iterations: iterations,
            final_residual: res,
            damping_activations,
            energy_before: energy_before.total,
            energy_after: energy_terms.total,
            energy_terms,
            mass_drift,
            min_concentration,
        };
        Ok((state, report))
    }

    /// Moves `psi` to mean zero along the exact null direction of the
    /// residual: `psi -> psi - a`, `mu^m -> mu^m - z^m a`.
    fn regauge(&self, x: &mut [f64]) {
        let layout = &self.layout;
        let a = mean(&x[layout.psi()]);
        x[layout.psi()].iter_mut().for_each(|v| *v -= a);
        for s in 0..layout.species {
            let za = self.model.species.valence()[s] as f64 * a;
            x[layout.mu(s)].iter_mut().for_each(|v| *v -= za);
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn mean(v: &[f64]) -> f64 {
    crate::grid::compensated_sum(v.iter().copied()) / v.len() as f64
}

/// Residual map of one step and its exact Jacobian on the stacked unknown
/// `(c^1..c^M, mu^1..mu^M, psi)`.
#[derive(Debug)]
pub struct Linearization<'a> {
    stepper: &'a Stepper,
    data: StepData,
}

impl Linearization<'_> {
    pub fn unknowns(&self) -> usize {
        self.stepper.layout.total()
    }

    pub fn pack(&self, cand: &Candidate) -> Vec<f64> {
        self.stepper.layout.pack(cand)
    }

    pub fn unpack(&self, x: &[f64]) -> Candidate {
        self.stepper.layout.unpack(self.stepper.model.grid(), x)
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>, SchemeError> {
        let s = self.stepper;
        let mut out = vec![0.0; s.layout.total()];
        residual_flat(&s.model, &s.layout, &self.data, x, &mut out)?;
        Ok(out)
    }

    /// Triplets of the Jacobian at `x`; duplicates must be summed.
    pub fn jacobian_triplets(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let s = self.stepper;
        let mut out = Vec::new();
        for_each_entry(
            &s.model,
            &s.layout,
            &self.data.mobility,
            x,
            s.cfg.dt,
            false,
            |r, c, v| out.push((r, c, v)),
        );
        out
    }

    pub fn jacobian_times(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.unknowns()];
        for (r, c, v) in self.jacobian_triplets(x) {
            out[r] += v * d[c];
        }
        out
    }
}

/// One step with a freshly built [`Stepper`].
pub fn newton_step_solve(
    old: &SystemState,
    cfg: &StepConfig,
    model: &Model,
) -> Result<(SystemState, StepReport), SchemeError> {
    Stepper::new(model.clone(), cfg.clone())?.step(old)
}
