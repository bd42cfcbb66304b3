use std::ops::Range;

use crate::grid::{
    div_coeff_grad_into, edge_average, laplace_into, CellField, EdgeField, PeriodicGrid,
};
use crate::model::{Model, SpeciesSet, StericSplit};

use super::{Candidate, Forcing, SchemeError, StepConfig, SystemState};

/// Offsets of the stacked unknown `(c^1..c^M, mu^1..mu^M, psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub species: usize,
    pub cells: usize,
}

impl Layout {
    pub fn c(&self, s: usize) -> Range<usize> {
        s * self.cells..(s + 1) * self.cells
    }

    pub fn mu(&self, s: usize) -> Range<usize> {
        self.c(self.species + s)
    }

    pub fn psi(&self) -> Range<usize> {
        self.c(2 * self.species)
    }

    pub fn total(&self) -> usize {
        (2 * self.species + 1) * self.cells
    }

    pub fn pack(&self, cand: &Candidate) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total());
        cand.c.iter().for_each(|f| x.extend_from_slice(f.values()));
        cand.mu.iter().for_each(|f| x.extend_from_slice(f.values()));
        x.extend_from_slice(cand.psi.values());
        x
    }

    pub fn unpack(&self, grid: &PeriodicGrid, x: &[f64]) -> Candidate {
        let field =
            |r: Range<usize>| CellField::from_values(grid, x[r].to_vec()).expect("layout length");
        Candidate {
            c: (0..self.species).map(|s| field(self.c(s))).collect(),
            mu: (0..self.species).map(|s| field(self.mu(s))).collect(),
            psi: field(self.psi()),
        }
    }
}

/// Quantities frozen at the old time level.
#[derive(Debug, Clone)]
pub(crate) struct StepData {
    pub dt: f64,
    pub c_old: Vec<Vec<f64>>,
    pub mobility: Vec<EdgeField>,
    /// `sum_n ge^{mn} c^n_old`.
    pub explicit: Vec<Vec<f64>>,
    pub source: Option<Vec<Vec<f64>>>,
    pub rho: Vec<f64>,
}

impl StepData {
    pub fn new(
        model: &Model,
        c_old: &[CellField],
        dt: f64,
        forcing: Option<&Forcing>,
    ) -> Result<Self, SchemeError> {
        let grid = model.grid();
        let m = model.species.len();
        if c_old.len() != m {
            return Err(SchemeError::ShapeMismatch(format!(
                "{} concentration fields for {m} species",
                c_old.len()
            )));
        }
        if c_old.iter().any(|f| f.grid() != grid) {
            return Err(SchemeError::ShapeMismatch(
                "concentration grid differs from model grid".into(),
            ));
        }
        let ge = &model.split.ge;
        let explicit = (0..m)
            .map(|s| {
                (0..grid.len())
                    .map(|i| (0..m).map(|t| ge.get(s, t) * c_old[t].values()[i]).sum())
                    .collect()
            })
            .collect();
        let (source, rho) = match forcing {
            Some(f) => {
                if f.source.len() != m || f.source.iter().any(|s| s.grid() != grid) {
                    return Err(SchemeError::ShapeMismatch(
                        "forcing does not match species or grid".into(),
                    ));
                }
                let rho = match &f.rho_f {
                    Some(r) if r.grid() == grid => r.values().to_vec(),
                    Some(_) => {
                        return Err(SchemeError::ShapeMismatch(
                            "forced charge grid differs".into(),
                        ))
                    }
                    None => model.electrostatics.rho_f().values().to_vec(),
                };
                (
                    Some(f.source.iter().map(|s| s.values().to_vec()).collect()),
                    rho,
                )
            }
            None => (None, model.electrostatics.rho_f().values().to_vec()),
        };
        Ok(Self {
            dt,
            c_old: c_old.iter().map(|f| f.values().to_vec()).collect(),
            mobility: c_old.iter().map(edge_average).collect(),
            explicit,
            source,
            rho,
        })
    }
}

pub(crate) fn check_positive(layout: &Layout, x: &[f64]) -> Result<(), SchemeError> {
    for s in 0..layout.species {
        if let Some((cell, &value)) = x[layout.c(s)].iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(SchemeError::NonPositiveConcentration {
                species: s,
                cell,
                value,
            });
        }
    }
    Ok(())
}

/// Stacked residual `(F1^1..F1^M, F2^1..F2^M, F3)` of the stacked unknown `x`.
pub(crate) fn residual_flat(
    model: &Model,
    layout: &Layout,
    data: &StepData,
    x: &[f64],
    out: &mut [f64],
) -> Result<(), SchemeError> {
    check_positive(layout, x)?;
    let grid = model.grid();
    let sp = &model.species;
    let gc = &model.split.gc;
    let mut tmp = vec![0.0; layout.cells];
    let inv_dt = 1.0 / data.dt;
    let psi = &x[layout.psi()];
    for s in 0..layout.species {
        let c = &x[layout.c(s)];
        let mu = &x[layout.mu(s)];
        let eps = sp.epsilon()[s];
        div_coeff_grad_into(grid, &data.mobility[s], mu, &mut tmp);
        let f1 = &mut out[layout.c(s)];
        for i in 0..layout.cells {
            f1[i] = (c[i] - data.c_old[s][i]) * inv_dt - eps * tmp[i];
        }
        if let Some(src) = &data.source {
            f1.iter_mut().zip(&src[s]).for_each(|(f, q)| *f -= q);
        }

        laplace_into(grid, c, &mut tmp);
        let z = sp.valence()[s] as f64;
        let sigma = sp.sigma()[s];
        let f2 = &mut out[layout.mu(s)];
        for i in 0..layout.cells {
            let steric: f64 = (0..layout.species)
                .map(|t| gc.get(s, t) * x[layout.c(t).start + i])
                .sum();
            f2[i] = mu[i] - z * psi[i] - c[i].ln() - steric + sigma * tmp[i] + data.explicit[s][i];
        }
    }
    laplace_into(grid, psi, &mut tmp);
    let kappa = model.electrostatics.kappa();
    let f3 = &mut out[layout.psi()];
    for i in 0..layout.cells {
        let charge: f64 = (0..layout.species)
            .map(|t| sp.valence()[t] as f64 * x[layout.c(t).start + i])
            .sum();
        f3[i] = -kappa * tmp[i] - charge - data.rho[i];
    }
    Ok(())
}

/// `mu^m = z^m psi + log c^m + sum gc^{mn} c^n - sigma^m Delta_h c^m - sum ge^{mn} c^n_old`.
pub fn chemical_potential_semi_implicit(
    c_new: &[CellField],
    c_old: &[CellField],
    psi_new: &CellField,
    species: &SpeciesSet,
    split: &StericSplit,
) -> Result<Vec<CellField>, SchemeError> {
    let m = species.len();
    if c_new.len() != m || c_old.len() != m || split.g.size() != m {
        return Err(SchemeError::ShapeMismatch(
            "species count differs between inputs".into(),
        ));
    }
    let grid = psi_new.grid();
    for (s, c) in c_new.iter().enumerate() {
        if let Some((cell, &value)) = c.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(SchemeError::NonPositiveConcentration {
                species: s,
                cell,
                value,
            });
        }
    }
    let mut lap = vec![0.0; grid.len()];
    let mut out = Vec::with_capacity(m);
    for s in 0..m {
        laplace_into(grid, c_new[s].values(), &mut lap);
        let z = species.valence()[s] as f64;
        let sigma = species.sigma()[s];
        let values = (0..grid.len())
            .map(|i| {
                let implicit: f64 = (0..m)
                    .map(|t| split.gc.get(s, t) * c_new[t].values()[i])
                    .sum();
                let explicit: f64 = (0..m)
                    .map(|t| split.ge.get(s, t) * c_old[t].values()[i])
                    .sum();
                z * psi_new.values()[i] + c_new[s].values()[i].ln() + implicit
                    - sigma * lap[i]
                    - explicit
            })
            .collect();
        out.push(CellField::from_values(grid, values).expect("grid length"));
    }
    Ok(out)
}

/// Residual blocks of one step evaluated at a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlocks {
    /// Concentration updates, one per species.
    pub mass: Vec<CellField>,
    /// Chemical-potential definitions, one per species.
    pub potential: Vec<CellField>,
    pub poisson: CellField,
}

impl ResidualBlocks {
    pub fn norm_inf(&self) -> f64 {
        self.mass
            .iter()
            .chain(&self.potential)
            .chain(std::iter::once(&self.poisson))
            .map(CellField::max_abs)
            .fold(0.0, f64::max)
    }
}

pub fn residual(
    old: &SystemState,
    candidate: &Candidate,
    cfg: &StepConfig,
    model: &Model,
) -> Result<ResidualBlocks, SchemeError> {
    residual_impl(old, candidate, cfg, model, None)
}

pub fn residual_forced(
    old: &SystemState,
    candidate: &Candidate,
    cfg: &StepConfig,
    model: &Model,
    forcing: &Forcing,
) -> Result<ResidualBlocks, SchemeError> {
    residual_impl(old, candidate, cfg, model, Some(forcing))
}

fn residual_impl(
    old: &SystemState,
    candidate: &Candidate,
    cfg: &StepConfig,
    model: &Model,
    forcing: Option<&Forcing>,
) -> Result<ResidualBlocks, SchemeError> {
    let grid = model.grid();
    let layout = Layout {
        species: model.species.len(),
        cells: grid.len(),
    };
    if candidate.c.len() != layout.species || candidate.mu.len() != layout.species {
        return Err(SchemeError::ShapeMismatch("candidate species count".into()));
    }
    let data = StepData::new(model, &old.c, cfg.dt, forcing)?;
    let x = layout.pack(candidate);
    let mut out = vec![0.0; layout.total()];
    residual_flat(model, &layout, &data, &x, &mut out)?;
    let blocks = layout.unpack(grid, &out);
    Ok(ResidualBlocks {
        mass: blocks.c,
        potential: blocks.mu,
        poisson: blocks.psi,
    })
}
