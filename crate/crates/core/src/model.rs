//! Species, steric interactions and their convex splitting, dimensionless
//! coefficients, fixed charges, and initial conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eigen::min_eigenvalue;
use crate::grid::{CellField, GridError, PeriodicGrid};

/// Tolerance on `|g_ij - g_ji|` accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("matrix rows must all have length {expected} (row {row} has {actual})")]
    NotSquare {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("matrix is not symmetric: |g[{i}][{j}] - g[{j}][{i}]| = {diff:.3e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("{name} must be {requirement} (got {value})")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("expected {expected} {what}, got {actual}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("lines at x = {first} and x = {second} fall into the same column of cells")]
    LineOffGrid { first: f64, second: f64 },
    #[error(
        "perturbation amplitude {amplitude} must be below the mean {mean} of species {species}"
    )]
    AmplitudeTooLarge {
        species: usize,
        amplitude: f64,
        mean: f64,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn require(
    name: &'static str,
    requirement: &'static str,
    value: f64,
    ok: bool,
) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            requirement,
            value,
        })
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return Err(ModelError::NotSquare {
                    row,
                    expected: n,
                    actual: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn check_symmetric(&self, tol: f64) -> Result<(), ModelError> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let diff = (self.get(i, j) - self.get(j, i)).abs();
                if !(diff <= tol) {
                    return Err(ModelError::NotSymmetric { i, j, diff });
                }
            }
        }
        Ok(())
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.data[i * self.n + i] += shift;
        }
        m
    }
}

/// Ionic species: valences, mobilities, gradient-energy weights and the
/// entropy scale `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSet {
    valence: Vec<i32>,
    epsilon: Vec<f64>,
    sigma: Vec<f64>,
    v: f64,
}

impl SpeciesSet {
    pub fn new(
        valence: Vec<i32>,
        epsilon: Vec<f64>,
        sigma: Vec<f64>,
        v: f64,
    ) -> Result<Self, ModelError> {
        let m = valence.len();
        if m == 0 {
            return Err(ModelError::CountMismatch {
                what: "species (at least one)",
                expected: 1,
                actual: 0,
            });
        }
        for (what, len) in [
            ("epsilon values", epsilon.len()),
            ("sigma values", sigma.len()),
        ] {
            if len != m {
                return Err(ModelError::CountMismatch {
                    what,
                    expected: m,
                    actual: len,
                });
            }
        }
        for &e in &epsilon {
            require("epsilon", "positive", e, e > 0.0 && e.is_finite())?;
        }
        for &s in &sigma {
            require("sigma", "non-negative", s, s >= 0.0 && s.is_finite())?;
        }
        require("v", "positive", v, v > 0.0 && v.is_finite())?;
        Ok(Self {
            valence,
            epsilon,
            sigma,
            v,
        })
    }

    /// Binary monovalent electrolyte `z = (+1, -1)`.
    pub fn binary(epsilon: f64, sigma: f64) -> Result<Self, ModelError> {
        Self::new(vec![1, -1], vec![epsilon; 2], vec![sigma; 2], 1.0)
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    pub fn valence(&self) -> &[i32] {
        &self.valence
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn v(&self) -> f64 {
        self.v
    }
}

/// Convex splitting `G = Gc - Ge` with `Gc = G + lambda I`, `Ge = lambda I`.
#[derive(Debug, Clone, PartialEq)]
pub struct StericSplit {
    pub g: SquareMatrix,
    pub gc: SquareMatrix,
    pub ge: SquareMatrix,
    pub lambda: f64,
}

/// Smallest non-negative shift making both parts positive semi-definite.
pub fn split_steric(g: &SquareMatrix) -> Result<StericSplit, ModelError> {
    g.check_symmetric(SYMMETRY_TOLERANCE)?;
    let lambda = (-min_eigenvalue(g)).max(0.0);
    split_steric_with_shift(g, lambda)
}

/// Splitting with a caller-chosen shift; `lambda` must not be below the
/// minimal admissible one.
pub fn split_steric_with_shift(g: &SquareMatrix, lambda: f64) -> Result<StericSplit, ModelError> {
    g.check_symmetric(SYMMETRY_TOLERANCE)?;
    let minimal = (-min_eigenvalue(g)).max(0.0);
    require(
        "lambda",
        "at least -min eigenvalue of G",
        lambda,
        lambda.is_finite() && lambda >= minimal - SYMMETRY_TOLERANCE * g.norm_inf().max(1.0),
    )?;
    let n = g.size();
    let mut ge = SquareMatrix::zeros(n);
    for i in 0..n {
        ge.set(i, i, lambda);
    }
    Ok(StericSplit {
        g: g.clone(),
        gc: g.shifted(lambda),
        ge,
        lambda,
    })
}

/// Uniform dielectric coefficient and fixed charge density.
#[derive(Debug, Clone, PartialEq)]
pub struct Electrostatics {
    kappa: f64,
    rho_f: CellField,
}

impl Electrostatics {
    pub fn new(kappa: f64, rho_f: CellField) -> Result<Self, ModelError> {
        require("kappa", "positive", kappa, kappa > 0.0 && kappa.is_finite())?;
        Ok(Self { kappa, rho_f })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rho_f(&self) -> &CellField {
        &self.rho_f
    }
}

/// Everything the time stepper needs to know about the physics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub species: SpeciesSet,
    pub split: StericSplit,
    pub electrostatics: Electrostatics,
}

impl Model {
    pub fn new(
        species: SpeciesSet,
        split: StericSplit,
        electrostatics: Electrostatics,
    ) -> Result<Self, ModelError> {
        if split.g.size() != species.len() {
            return Err(ModelError::CountMismatch {
                what: "rows in the steric matrix",
                expected: species.len(),
                actual: split.g.size(),
            });
        }
        Ok(Self {
            species,
            split,
            electrostatics,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.electrostatics.rho_f.grid()
    }
}

/// Dimensional inputs in the units customary for electrolytes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalInputs {
    /// Reference concentration in mol/L.
    pub c0_molar: f64,
    /// Reference length in nm.
    pub length_nm: f64,
    /// Reference diffusivity in nm^2/ns.
    pub d0: f64,
    /// Species diffusivities in nm^2/ns.
    pub diffusivities: Vec<f64>,
    pub eps_r: f64,
    /// Kelvin.
    pub temperature: f64,
}

pub const ROOM_TEMPERATURE: f64 = 300.0;

impl Default for PhysicalInputs {
    fn default() -> Self {
        Self {
            c0_molar: 1.0,
            length_nm: 1.0,
            d0: 1.0,
            diffusivities: vec![1.0, 1.0],
            eps_r: 78.0,
            temperature: ROOM_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nondimensional {
    pub kappa: f64,
    pub epsilon: Vec<f64>,
    pub debye_length_nm: f64,
}

const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const BOLTZMANN: f64 = 1.380_649e-23;
const AVOGADRO: f64 = 6.022_140_76e23;

pub fn nondimensionalize(p: &PhysicalInputs) -> Result<Nondimensional, ModelError> {
    for (name, v) in [
        ("c0", p.c0_molar),
        ("L", p.length_nm),
        ("D0", p.d0),
        ("eps_r", p.eps_r),
        ("T", p.temperature),
    ] {
        require(name, "positive", v, v > 0.0 && v.is_finite())?;
    }
    for &d in &p.diffusivities {
        require("D", "positive", d, d > 0.0 && d.is_finite())?;
    }
    // mol/L -> number per m^3
    let c0 = p.c0_molar * 1e3 * AVOGADRO;
    let debye_m = (VACUUM_PERMITTIVITY * p.eps_r * BOLTZMANN * p.temperature
        / (2.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * c0))
        .sqrt();
    let debye_length_nm = debye_m * 1e9;
    let ratio = debye_length_nm / p.length_nm;
    Ok(Nondimensional {
        kappa: 2.0 * ratio * ratio,
        epsilon: p.diffusivities.iter().map(|d| ratio * d / p.d0).collect(),
        debye_length_nm,
    })
}

/// Outcome of the discrete neutrality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neutrality {
    Neutral { residual: f64 },
    Violated { residual: f64 },
}

impl Neutrality {
    pub fn residual(&self) -> f64 {
        match *self {
            Neutrality::Neutral { residual } | Neutrality::Violated { residual } => residual,
        }
    }

    pub fn is_neutral(&self) -> bool {
        matches!(self, Neutrality::Neutral { .. })
    }
}

/// `mean(rho_f) + sum_m z^m mean(c^m)`, neutral when within `tol`.
pub fn check_neutrality(
    species: &SpeciesSet,
    c_init: &[CellField],
    rho_f: &CellField,
    tol: f64,
) -> Neutrality {
    let residual = rho_f.mean()
        + species
            .valence()
            .iter()
            .zip(c_init)
            .map(|(&z, c)| z as f64 * c.mean())
            .sum::<f64>();
    if residual.abs() <= tol {
        Neutrality::Neutral { residual }
    } else {
        Neutrality::Violated { residual }
    }
}

/// Fixed charge distributions. Profiles vary along the first axis only.
#[derive(Debug, Clone, PartialEq)]
pub enum ChargeSpec {
    Zero,
    /// `amplitude * (exp(-decay (x - positive_center)^2) - exp(-decay (x - negative_center)^2))`.
    GaussianPair {
        amplitude: f64,
        decay: f64,
        positive_center: f64,
        negative_center: f64,
    },
    /// Surface charges `-q` at `negative_x` and `+q` at `positive_x`, each
    /// deposited into the nearest column of cells as `q / h`.
    LinePair {
        surface_density: f64,
        negative_x: f64,
        positive_x: f64,
    },
    Samples(Vec<f64>),
}

/// Column of cells whose centre is nearest to `x`; exact ties go to the
/// smaller coordinate.
pub fn nearest_column(grid: &PeriodicGrid, x: f64) -> usize {
    let t = (x - grid.lo()) / grid.h() - 0.5;
    let fl = t.floor();
    let col = if (t - fl - 0.5).abs() <= 1e-9 {
        fl
    } else {
        t.round()
    };
    (col as i64).rem_euclid(grid.n() as i64) as usize
}

pub fn make_fixed_charge(spec: &ChargeSpec, grid: &PeriodicGrid) -> Result<CellField, ModelError> {
    match spec {
        ChargeSpec::Zero => Ok(CellField::zeros(grid)),
        &ChargeSpec::GaussianPair {
            amplitude,
            decay,
            positive_center,
            negative_center,
        } => Ok(CellField::from_fn(grid, |x| {
            let bump = |c: f64| (-decay * (x[0] - c) * (x[0] - c)).exp();
            amplitude * (bump(positive_center) - bump(negative_center))
        })),
        &ChargeSpec::LinePair {
            surface_density,
            negative_x,
            positive_x,
        } => {
            let neg = nearest_column(grid, negative_x);
            let pos = nearest_column(grid, positive_x);
            if neg == pos {
                return Err(ModelError::LineOffGrid {
                    first: negative_x,
                    second: positive_x,
                });
            }
            let value = surface_density / grid.h();
            let mut f = CellField::zeros(grid);
            let stride0 = grid.stride(0);
            for (idx, v) in f.values_mut().iter_mut().enumerate() {
                let col = (idx / stride0) % grid.n();
                if col == neg {
                    *v = -value;
                } else if col == pos {
                    *v = value;
                }
            }
            Ok(f)
        }
        ChargeSpec::Samples(values) => Ok(CellField::from_values(grid, values.clone())?),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Uniform(Vec<f64>),
    /// i.i.d. uniform perturbations of the given means, drawn per species
    /// from a seeded stream.
    Random {
        means: Vec<f64>,
        amplitude: f64,
    },
    Samples(Vec<Vec<f64>>),
}

pub fn make_initial_condition(
    spec: &InitSpec,
    grid: &PeriodicGrid,
    species: &SpeciesSet,
    seed: u64,
) -> Result<Vec<CellField>, ModelError> {
    let m = species.len();
    let check_count = |len: usize| {
        if len == m {
            Ok(())
        } else {
            Err(ModelError::CountMismatch {
                what: "initial fields",
                expected: m,
                actual: len,
            })
        }
    };
    match spec {
        InitSpec::Uniform(values) => {
            check_count(values.len())?;
            for &v in values {
                require(
                    "initial concentration",
                    "positive",
                    v,
                    v > 0.0 && v.is_finite(),
                )?;
            }
            Ok(values
                .iter()
                .map(|&v| CellField::constant(grid, v))
                .collect())
        }
        InitSpec::Random { means, amplitude } => {
            check_count(means.len())?;
            let a = *amplitude;
            require("amplitude", "non-negative", a, a >= 0.0 && a.is_finite())?;
            for (species, &mean) in means.iter().enumerate() {
                if !(a < mean) {
                    return Err(ModelError::AmplitudeTooLarge {
                        species,
                        amplitude: a,
                        mean,
                    });
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fields = means
                .iter()
                .map(|&mean| {
                    let mut p = CellField::from_fn(grid, |_| {
                        if a > 0.0 {
                            rng.random_range(-a..=a)
                        } else {
                            0.0
                        }
                    });
                    p.remove_mean();
                    let sup = p.max_abs();
                    if sup > a {
                        p.scale(a / sup);
                    }
                    p.shift(mean);
                    p
                })
                .collect();
            Ok(fields)
        }
        InitSpec::Samples(all) => {
            check_count(all.len())?;
            let fields = all
                .iter()
                .map(|v| CellField::from_values(grid, v.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            for f in &fields {
                let min = f.min();
                require("initial concentration", "positive", min, min > 0.0)?;
            }
            Ok(fields)
        }
    }
}
