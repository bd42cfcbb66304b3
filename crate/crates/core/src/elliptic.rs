//! Zero-mean solves of `-div_h(D grad_h phi) = f` on periodic grids and the
//! discrete `H^-1` inner product built on them.
//!
//! The operator `L_D = -div_h(D grad_h .)` is symmetric positive definite on
//! mean-zero grid functions whenever `D > 0`. Solves use preconditioned
//! conjugate gradients restricted to that subspace; the preconditioner is
//! the exact FFT inverse of `mean(D) * (-Delta_h)`, so constant coefficients
//! converge in a single iteration.

use thiserror::Error;

use crate::grid::{
    div_coeff_grad_into, inner, l2_norm, CellField, CompensatedSum, EdgeField, PeriodicGrid,
};
use crate::spectral::SpectralPoisson;

/// Default relative residual tolerance for elliptic solves.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Default iteration cap: ten sweeps per unknown.
pub fn default_max_iter(grid: &PeriodicGrid) -> usize {
    10 * grid.len()
}

/// Smallest relative residual that round-off lets PCG reach for the
/// coefficient `d`, about `8 eps cond(L_D)`, floored at `base`.
pub fn attainable_tolerance(base: f64, d: &EdgeField) -> f64 {
    let grid = d.grid();
    let (lo, hi) = (d.min(), d.max());
    if !(lo > 0.0) {
        return base;
    }
    let smallest = (std::f64::consts::PI / grid.n() as f64).sin().powi(2);
    let cond = hi / lo * grid.dim() as f64 / smallest.max(f64::MIN_POSITIVE);
    base.max(8.0 * f64::EPSILON * cond)
}

/// Default allowance on `|mean(rhs)|`, scaled by the size of the data.
pub fn default_mean_tolerance(rhs: &CellField) -> f64 {
    1e-10 * rhs.max_abs().max(1.0)
}

#[derive(Debug, Error, Clone)]
pub enum EllipticError {
    #[error("right-hand side has mean {mean:.3e}, outside the tolerance {tolerance:.3e}")]
    NotMeanZero { mean: f64, tolerance: f64 },
    #[error("coefficient must be strictly positive (min = {min:.3e})")]
    NonPositiveCoefficient { min: f64 },
    #[error("conjugate gradients stopped after {} iterations with residual {:.3e}", .report.iterations, .report.final_residual)]
    NoConvergence {
        solution: Box<CellField>,
        report: EllipticSolveReport,
    },
    #[error("coefficient and right-hand side live on different grids")]
    GridMismatch,
}

/// Problem data for one zero-mean solve.
#[derive(Debug, Clone, Copy)]
pub struct EllipticProblem<'a> {
    pub coefficient: &'a EdgeField,
    pub rhs: &'a CellField,
    /// How far `mean(rhs)` may stray from zero before the solve is refused.
    pub mean_tolerance: f64,
}

impl<'a> EllipticProblem<'a> {
    pub fn new(coefficient: &'a EdgeField, rhs: &'a CellField) -> Self {
        Self {
            coefficient,
            rhs,
            mean_tolerance: default_mean_tolerance(rhs),
        }
    }

    pub fn with_mean_tolerance(mut self, tol: f64) -> Self {
        self.mean_tolerance = tol;
        self
    }

    fn validate(&self) -> Result<(), EllipticError> {
        if self.coefficient.grid() != self.rhs.grid() {
            return Err(EllipticError::GridMismatch);
        }
        let min = self.coefficient.min();
        if !(min > 0.0) {
            return Err(EllipticError::NonPositiveCoefficient { min });
        }
        let mean = self.rhs.mean();
        if mean.abs() > self.mean_tolerance {
            return Err(EllipticError::NotMeanZero {
                mean,
                tolerance: self.mean_tolerance,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSolveReport {
    pub iterations: usize,
    /// `||L_D phi - f||_2` (grid-weighted) of the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
}

/// Reusable solver holding the FFT preconditioner for one grid.
#[derive(Debug)]
pub struct EllipticSolver {
    precond: SpectralPoisson,
}

impl EllipticSolver {
    pub fn new(grid: &PeriodicGrid) -> Self {
        Self {
            precond: SpectralPoisson::new(grid),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.precond.grid()
    }

    pub fn solve(
        &self,
        problem: &EllipticProblem<'_>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(CellField, EllipticSolveReport), EllipticError> {
        self.solve_with_guess(
            problem,
            &CellField::zeros(problem.rhs.grid()),
            tol,
            max_iter,
        )
    }

    /// Solves starting from `guess`; the guess is projected to zero mean first.
    pub fn solve_with_guess(
        &self,
        problem: &EllipticProblem<'_>,
        guess: &CellField,
        tol: f64,
        max_iter: usize,
    ) -> Result<(CellField, EllipticSolveReport), EllipticError> {
        problem.validate()?;
        let grid = problem.rhs.grid();
        if grid != self.grid() || guess.grid() != grid {
            return Err(EllipticError::GridMismatch);
        }
        let d = problem.coefficient;
        let d_mean = {
            let mut acc = CompensatedSum::new();
            for a in 0..grid.dim() {
                d.axis(a).iter().for_each(|&v| acc.add(v));
            }
            acc.value() / (grid.dim() * grid.len()) as f64
        };

        let mut f = problem.rhs.clone();
        f.remove_mean();
        let target = tol * l2_norm(&f).max(1.0);

        let mut x = guess.clone();
        x.remove_mean();

        let n = grid.len();
        let apply = |u: &[f64], out: &mut [f64]| {
            div_coeff_grad_into(grid, d, u, out);
            out.iter_mut().for_each(|v| *v = -*v);
        };
        let dot = |a: &[f64], b: &[f64]| {
            let mut acc = CompensatedSum::new();
            a.iter().zip(b).for_each(|(x, y)| acc.add(x * y));
            acc.value() * grid.cell_volume()
        };
        let project = |v: &mut [f64]| {
            let mut acc = CompensatedSum::new();
            v.iter().for_each(|&x| acc.add(x));
            let m = acc.value() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        };

        let mut ax = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut ap = vec![0.0; n];

        let true_residual = |x: &[f64], r: &mut [f64], ax: &mut [f64]| {
            apply(x, ax);
            for ((ri, fi), ai) in r.iter_mut().zip(f.values()).zip(ax.iter()) {
                *ri = fi - ai;
            }
            project(r);
            dot(r, r).sqrt()
        };

        let mut res = true_residual(x.values(), &mut r, &mut ax);
        let mut iterations = 0;
        // Outer loop restarts from the true residual whenever the recurrence
        // claims convergence, so the reported residual is always honest.
        while res > target && iterations < max_iter {
            self.precond.solve_into(&r, d_mean, &mut z);
            p.copy_from_slice(&z);
            let mut rz = dot(&r, &z);
            loop {
                apply(&p, &mut ap);
                let pap = dot(&p, &ap);
                if pap <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                for ((xi, pi), (ri, api)) in
                    x.values_mut().iter_mut().zip(&p).zip(r.iter_mut().zip(&ap))
                {
                    *xi += alpha * pi;
                    *ri -= alpha * api;
                }
                iterations += 1;
                let rec = dot(&r, &r).sqrt();
                if rec <= target || iterations >= max_iter {
                    break;
                }
                self.precond.solve_into(&r, d_mean, &mut z);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for (pi, zi) in p.iter_mut().zip(&z) {
                    *pi = zi + beta * *pi;
                }
            }
            x.remove_mean();
            let new_res = true_residual(x.values(), &mut r, &mut ax);
            if new_res >= res && new_res > target {
                // Stagnated at rounding level.
                res = new_res;
                break;
            }
            res = new_res;
        }

        let report = EllipticSolveReport {
            iterations,
            final_residual: res,
            converged: res <= target,
        };
        if report.converged {
            Ok((x, report))
        } else {
            Err(EllipticError::NoConvergence {
                solution: Box::new(x),
                report,
            })
        }
    }
}

/// One-shot zero-mean solve of `-div_h(D grad_h phi) = rhs`.
pub fn solve_zero_mean(
    problem: &EllipticProblem<'_>,
    tol: f64,
    max_iter: usize,
) -> Result<(CellField, EllipticSolveReport), EllipticError> {
    EllipticSolver::new(problem.rhs.grid()).solve(problem, tol, max_iter)
}

/// `<u, L_D^-1 w>`, the discrete `H^-1` inner product weighted by `D`.
pub fn hminus1_inner(u: &CellField, w: &CellField, d: &EdgeField) -> Result<f64, EllipticError> {
    hminus1_inner_with(&EllipticSolver::new(u.grid()), u, w, d)
}

pub(crate) fn hminus1_inner_with(
    solver: &EllipticSolver,
    u: &CellField,
    w: &CellField,
    d: &EdgeField,
) -> Result<f64, EllipticError> {
    let um = u.mean();
    let tol_u = default_mean_tolerance(u);
    if um.abs() > tol_u {
        return Err(EllipticError::NotMeanZero {
            mean: um,
            tolerance: tol_u,
        });
    }
    let problem = EllipticProblem::new(d, w);
    let (phi, _) = solver.solve(
        &problem,
        attainable_tolerance(1e-12, d),
        default_max_iter(w.grid()),
    )?;
    Ok(inner(u, &phi))
}

pub fn hminus1_norm(u: &CellField, d: &EdgeField) -> Result<f64, EllipticError> {
    Ok(hminus1_inner(u, u, d)?.max(0.0).sqrt())
}
