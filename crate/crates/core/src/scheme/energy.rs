use crate::elliptic::{hminus1_inner_with, EllipticSolver};
use crate::grid::{edge_inner, grad, inner, CellField, CompensatedSum, EdgeField};
use crate::model::Model;

use super::{SchemeError, SystemState};

/// Discrete free energy split into its four contributions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub total: f64,
    /// `1/2 ||sum z c + rho_f||^2` in the `kappa`-weighted `H^-1` norm.
    pub electrostatic: f64,
    /// `sum <c, log(v c) - 1>`.
    pub entropy: f64,
    /// `1/2 sum g^{mn} <c^m, c^n>`.
    pub steric: f64,
    /// `sum sigma/2 ||grad_h c||^2`.
    pub gradient: f64,
}

pub fn discrete_free_energy(
    state: &SystemState,
    model: &Model,
) -> Result<EnergyBreakdown, SchemeError> {
    let solver = EllipticSolver::new(model.grid());
    energy_with(&solver, &state.c, model.electrostatics.rho_f(), model)
}

pub(crate) fn energy_with(
    solver: &EllipticSolver,
    c: &[CellField],
    rho_f: &CellField,
    model: &Model,
) -> Result<EnergyBreakdown, SchemeError> {
    let sp = &model.species;
    let grid = model.grid();
    if c.len() != sp.len() || c.iter().any(|f| f.grid() != grid) {
        return Err(SchemeError::ShapeMismatch(
            "concentrations do not match the model".into(),
        ));
    }
    let v = sp.v();
    let mut entropy = CompensatedSum::new();
    for (s, f) in c.iter().enumerate() {
        if let Some((cell, &value)) = f.values().iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
            return Err(SchemeError::NonPositiveConcentration {
                species: s,
                cell,
                value,
            });
        }
        f.values()
            .iter()
            .for_each(|&x| entropy.add(x * ((v * x).ln() - 1.0)));
    }
    let entropy = entropy.value() * grid.cell_volume();

    let mut charge = rho_f.clone();
    for (f, &z) in c.iter().zip(sp.valence()) {
        charge.add_scaled(z as f64, f);
    }
    let kappa = EdgeField::constant(grid, model.electrostatics.kappa());
    let electrostatic = 0.5 * hminus1_inner_with(solver, &charge, &charge, &kappa)?;

    let g = &model.split.g;
    let mut steric = 0.0;
    for s in 0..sp.len() {
        for t in 0..sp.len() {
            if g.get(s, t) != 0.0 {
                steric += 0.5 * g.get(s, t) * inner(&c[s], &c[t]);
            }
        }
    }

    let gradient = c
        .iter()
        .zip(sp.sigma())
        .filter(|(_, &sigma)| sigma != 0.0)
        .map(|(f, &sigma)| {
            let gf = grad(f);
            0.5 * sigma * edge_inner(&gf, &gf)
        })
        .sum();

    Ok(EnergyBreakdown {
        total: electrostatic + entropy + steric + gradient,
        electrostatic,
        entropy,
        steric,
        gradient,
    })
}
