//! Manufactured solutions for the forced system and convergence studies.
//!
//! Every exact field is a single separable mode
//! `offset + a e^{-r t} prod_k trig_k(w_k x_k)`, so all spatial derivatives
//! needed by the source terms follow from the mode's gradient and its
//! Laplacian eigenvalue `sum_k w_k^2`.

use std::f64::consts::PI;

use crate::grid::{CellField, PeriodicGrid};
use crate::model::{split_steric, Electrostatics, Model, SpeciesSet, SquareMatrix};
use crate::scheme::{Forcing, SchemeError, StepConfig, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    fn eval(self, v: f64) -> f64 {
        match self {
            Trig::Cos => v.cos(),
            Trig::Sin => v.sin(),
        }
    }

    fn deriv(self, v: f64) -> f64 {
        match self {
            Trig::Cos => -v.sin(),
            Trig::Sin => v.cos(),
        }
    }
}

/// `offset + amplitude * exp(-decay t) * prod_k trig_k(wavenumber_k x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableMode {
    pub offset: f64,
    pub amplitude: f64,
    pub decay: f64,
    /// One factor per axis.
    pub factors: Vec<(Trig, f64)>,
}

impl SeparableMode {
    fn envelope(&self, t: f64) -> f64 {
        self.amplitude * (-self.decay * t).exp()
    }

    fn shape(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(x)
            .map(|(&(f, k), &xi)| f.eval(k * xi))
            .product()
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.offset + self.envelope(t) * self.shape(x)
    }

    pub fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        -self.decay * self.envelope(t) * self.shape(x)
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        let env = self.envelope(t);
        for (a, ga) in g.iter_mut().enumerate().take(self.factors.len()) {
            *ga = env
                * self
                    .factors
                    .iter()
                    .zip(x)
                    .enumerate()
                    .map(|(b, (&(f, k), &xi))| {
                        if a == b {
                            k * f.deriv(k * xi)
                        } else {
                            f.eval(k * xi)
                        }
                    })
                    .product::<f64>();
        }
        g
    }

    /// `-Delta` eigenvalue of the varying part.
    pub fn laplace_eigenvalue(&self) -> f64 {
        self.factors.iter().map(|&(_, k)| k * k).sum()
    }

    /// Varying part only: `value - offset`.
    pub fn fluctuation(&self, t: f64, x: &[f64]) -> f64 {
        self.envelope(t) * self.shape(x)
    }
}

/// When the concentration source is sampled within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForcingTime {
    /// `t_l`, the start of the step.
    #[default]
    Start,
    /// `t_{l+1}`, the end of the step.
    End,
}

impl std::str::FromStr for ForcingTime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "start" => Ok(ForcingTime::Start),
            "end" => Ok(ForcingTime::End),
            other => Err(format!(
                "unknown forcing time '{other}' (expected start or end)"
            )),
        }
    }
}

/// A closed-form solution of the forced system together with the data it
/// was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub species: SpeciesSet,
    pub g: SquareMatrix,
    pub kappa: f64,
    pub c: Vec<SeparableMode>,
    pub psi: SeparableMode,
    pub final_time: f64,
    pub forcing_time: ForcingTime,
    pub newton_tol: f64,
}

/// `c^1 = c^2 = 0.1 e^{-t} cos(pi x) + 0.2`, `psi = e^{-t} cos(pi x)` on `[-1, 1]`.
pub fn case_1d() -> ManufacturedCase {
    let c = SeparableMode {
        offset: 0.2,
        amplitude: 0.1,
        decay: 1.0,
        factors: vec![(Trig::Cos, PI)],
    };
    ManufacturedCase {
        name: "1d",
        dim: 1,
        lo: -1.0,
        hi: 1.0,
        species: SpeciesSet::binary(0.304, 0.01).expect("valid species"),
        g: SquareMatrix::from_rows(vec![vec![3.6, 2.6], vec![2.6, 0.2]]).expect("square"),
        kappa: 0.185,
        c: vec![c.clone(), c],
        psi: SeparableMode {
            offset: 0.0,
            amplitude: 1.0,
            decay: 1.0,
            factors: vec![(Trig::Cos, PI)],
        },
        final_time: 0.0016,
        forcing_time: ForcingTime::default(),
        newton_tol: 1e-10,
    }
}

/// `c^1 = c^2 = 0.1 e^{-20t} cos(pi x/4) sin(pi y/4) + 1`,
/// `psi = e^{-20t} cos(pi x) sin(pi y/4)` on `[-4, 4]^2`.
pub fn case_2d() -> ManufacturedCase {
    case_2d_with_sigma(0.01)
}

pub fn case_2d_with_sigma(sigma: f64) -> ManufacturedCase {
    let c = SeparableMode {
        offset: 1.0,
        amplitude: 0.1,
        decay: 20.0,
        factors: vec![(Trig::Cos, PI / 4.0), (Trig::Sin, PI / 4.0)],
    };
    ManufacturedCase {
        name: "2d",
        dim: 2,
        lo: -4.0,
        hi: 4.0,
        species: SpeciesSet::binary(0.304, sigma).expect("valid species"),
        g: SquareMatrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).expect("square"),
        kappa: 0.185,
        c: vec![c.clone(), c],
        psi: SeparableMode {
            offset: 0.0,
            amplitude: 1.0,
            decay: 20.0,
            factors: vec![(Trig::Cos, PI), (Trig::Sin, PI / 4.0)],
        },
        final_time: 0.16,
        forcing_time: ForcingTime::default(),
        newton_tol: 1e-10,
    }
}

/// Looks a case up by its CLI name.
pub fn case_by_name(name: &str) -> Option<ManufacturedCase> {
    match name {
        "1d" => Some(case_1d()),
        "2d" => Some(case_2d()),
        _ => None,
    }
}

impl ManufacturedCase {
    pub fn exact_c(&self, m: usize, t: f64, x: &[f64]) -> f64 {
        self.c[m].value(t, x)
    }

    pub fn exact_psi(&self, t: f64, x: &[f64]) -> f64 {
        self.psi.value(t, x)
    }

    /// `c_t - eps div(c grad mu)` with `mu = z psi + log c + sum g c - sigma Delta c`.
    pub fn forcing(&self, m: usize, t: f64, x: &[f64]) -> f64 {
        let d = self.dim;
        let sp = &self.species;
        let cm = &self.c[m];
        let c = cm.value(t, x);
        let gc = cm.gradient(t, x);
        let lam_c = cm.laplace_eigenvalue();
        let lap_c = -lam_c * cm.fluctuation(t, x);
        let bilap_c = lam_c * lam_c * cm.fluctuation(t, x);
        let gp = self.psi.gradient(t, x);
        let lap_p = -self.psi.laplace_eigenvalue() * self.psi.fluctuation(t, x);
        let dot = |a: &[f64; 3], b: &[f64; 3]| (0..d).map(|k| a[k] * b[k]).sum::<f64>();

        let z = sp.valence()[m] as f64;
        let electro = z * (dot(&gc, &gp) + c * lap_p);
        let mut steric = 0.0;
        for n in 0..sp.len() {
            let cn = &self.c[n];
            let lap_n = -cn.laplace_eigenvalue() * cn.fluctuation(t, x);
            steric += self.g.get(m, n) * (dot(&gc, &cn.gradient(t, x)) + c * lap_n);
        }
        // grad(Delta c) = -lambda grad c for a single mode.
        let grad_lap: [f64; 3] = [-lam_c * gc[0], -lam_c * gc[1], -lam_c * gc[2]];
        let gradient = sp.sigma()[m] * (dot(&gc, &grad_lap) + c * bilap_c);
        cm.time_derivative(t, x) - sp.epsilon()[m] * (electro + lap_c + steric - gradient)
    }

    /// `-kappa Delta psi - sum z c`.
    pub fn rho_f(&self, t: f64, x: &[f64]) -> f64 {
        let lap_p = -self.psi.laplace_eigenvalue() * self.psi.fluctuation(t, x);
        let charge: f64 = (0..self.species.len())
            .map(|m| self.species.valence()[m] as f64 * self.exact_c(m, t, x))
            .sum();
        -self.kappa * lap_p - charge
    }

    pub fn grid(&self, n: usize) -> Result<PeriodicGrid, SchemeError> {
        Ok(PeriodicGrid::new(self.dim, n, self.lo, self.hi)?)
    }

    /// Sampled source terms and fixed charge at time `t`.
    pub fn sampled_forcing(&self, grid: &PeriodicGrid, t: f64) -> Forcing {
        Forcing {
            source: (0..self.species.len())
                .map(|m| CellField::from_fn(grid, |x| self.forcing(m, t, x)))
                .collect(),
            rho_f: Some(CellField::from_fn(grid, |x| self.rho_f(t, x))),
        }
    }

    fn model(&self, grid: &PeriodicGrid) -> Result<Model, SchemeError> {
        let rho0 = CellField::from_fn(grid, |x| self.rho_f(0.0, x));
        Ok(Model::new(
            self.species.clone(),
            split_steric(&self.g)?,
            Electrostatics::new(self.kappa, rho0)?,
        )?)
    }
}

/// Errors of one resolution, orders against the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    /// Sup-norm error per species.
    pub err_c: Vec<f64>,
    /// Sup-norm error of the potential after removing both means.
    pub err_psi: f64,
    pub order_c: Option<Vec<f64>>,
    pub order_psi: Option<f64>,
}

impl ConvergenceRow {
    /// Every order in this row, concentrations first.
    pub fn orders(&self) -> Vec<f64> {
        let mut v = self.order_c.clone().unwrap_or_default();
        v.extend(self.order_psi);
        v
    }
}

/// Runs the forced scheme at resolution `n` with `dt = h^2` up to the
/// case's final time and measures sup-norm errors at cell centres.
pub fn run_forced(case: &ManufacturedCase, n: usize) -> Result<ConvergenceRow, SchemeError> {
    if n < 8 || n % 2 != 0 {
        return Err(SchemeError::InvalidConfig {
            key: "levels",
            reason: "must be even and at least 8",
        });
    }
    let grid = case.grid(n)?;
    let h = grid.h();
    let dt = h * h;
    let steps = (case.final_time / dt).round() as usize;
    let mut cfg = StepConfig::new(dt);
    cfg.newton_tol = case.newton_tol;
    let stepper = Stepper::new(case.model(&grid)?, cfg)?;

    let c0 = (0..case.species.len())
        .map(|m| CellField::from_fn(&grid, |x| case.exact_c(m, 0.0, x)))
        .collect();
    let rho0 = CellField::from_fn(&grid, |x| case.rho_f(0.0, x));
    let mut state = stepper.initial_state_with_charge(c0, &rho0)?;
    for l in 0..steps {
        let t_start = l as f64 * dt;
        let t_end = (l + 1) as f64 * dt;
        let t_src = match case.forcing_time {
            ForcingTime::Start => t_start,
            ForcingTime::End => t_end,
        };
        let mut forcing = case.sampled_forcing(&grid, t_src);
        forcing.rho_f = Some(CellField::from_fn(&grid, |x| case.rho_f(t_end, x)));
        let (next, _) = stepper.step_forced(&state, &forcing)?;
        state = next;
    }
    let t_final = steps as f64 * dt;
    let err_c = (0..case.species.len())
        .map(|m| {
            let exact = CellField::from_fn(&grid, |x| case.exact_c(m, t_final, x));
            sup_diff(&state.c[m], &exact)
        })
        .collect();
    let mut exact_psi = CellField::from_fn(&grid, |x| case.exact_psi(t_final, x));
    exact_psi.remove_mean();
    let mut psi = state.psi.clone();
    psi.remove_mean();
    Ok(ConvergenceRow {
        n,
        h,
        dt,
        err_c,
        err_psi: sup_diff(&psi, &exact_psi),
        order_c: None,
        order_psi: None,
    })
}

fn sup_diff(a: &CellField, b: &CellField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Inclusive window every observed order must fall in.
    pub window: (f64, f64),
    pub passed: bool,
}

/// Runs every level (up to `threads` at a time) and fills in observed orders
/// `log(e_prev / e) / log(h_prev / h)`.
pub fn convergence_study(
    case: &ManufacturedCase,
    levels: &[usize],
    window: (f64, f64),
    threads: usize,
) -> Result<ConvergenceStudy, SchemeError> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SchemeError::InvalidConfig {
            key: "levels",
            reason: "must be strictly increasing",
        });
    }
    let threads = threads.max(1);
    let mut results: Vec<Option<Result<ConvergenceRow, SchemeError>>> = vec![None; levels.len()];
    for (chunk_idx, chunk) in levels.chunks(threads).enumerate() {
        let outs: Vec<Result<ConvergenceRow, SchemeError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&n| s.spawn(move || run_forced(case, n)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("convergence worker panicked"))
                .collect()
        });
        for (k, out) in outs.into_iter().enumerate() {
            results[chunk_idx * threads + k] = Some(out);
        }
    }
    let mut rows = results
        .into_iter()
        .map(|r| r.expect("every level ran"))
        .collect::<Result<Vec<_>, _>>()?;
    for i in 1..rows.len() {
        let (prev, cur) = (&rows[i - 1], &rows[i]);
        let lh = (prev.h / cur.h).ln();
        let order = |a: f64, b: f64| (a / b).ln() / lh;
        let oc = prev
            .err_c
            .iter()
            .zip(&cur.err_c)
            .map(|(&a, &b)| order(a, b))
            .collect();
        let op = order(prev.err_psi, cur.err_psi);
        rows[i].order_c = Some(oc);
        rows[i].order_psi = Some(op);
    }
    let passed = rows
        .iter()
        .flat_map(ConvergenceRow::orders)
        .all(|o| o >= window.0 && o <= window.1);
    Ok(ConvergenceStudy {
        rows,
        window,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        let c1 = case_1d();
        assert_eq!(c1.exact_psi(0.0, &[0.0]), 1.0);
        assert!((c1.exact_c(0, 0.0, &[0.0]) - 0.3).abs() < 1e-15);
        for &(t, x) in &[(0.0f64, 0.3f64), (0.5, -0.7)] {
            let expect = 0.185 * PI * PI * (-t).exp() * (PI * x).cos();
            assert!((c1.rho_f(t, &[x]) - expect).abs() < 1e-13);
        }
        let c2 = case_2d();
        assert!((c2.exact_c(0, 0.0, &[0.0, 2.0]) - 1.1).abs() < 1e-15);
        let (t, x, y): (f64, f64, f64) = (0.03, 0.4, -1.3);
        let expect = 0.185
            * (PI * PI + PI * PI / 16.0)
            * (-20.0 * t).exp()
            * (PI * x).cos()
            * (PI * y / 4.0).sin();
        assert!((c2.rho_f(t, &[x, y]) - expect).abs() < 1e-13);
    }

    #[test]
    fn exact_fields_are_periodic() {
        let c2 = case_2d();
        for &(x, y) in &[(0.3, -1.1), (-3.9, 2.2)] {
            for (dx, dy) in [(8.0, 0.0), (0.0, 8.0)] {
                let p = [x + dx, y + dy];
                assert!((c2.exact_c(0, 0.1, &[x, y]) - c2.exact_c(0, 0.1, &p)).abs() < 1e-13);
                assert!((c2.exact_psi(0.1, &[x, y]) - c2.exact_psi(0.1, &p)).abs() < 1e-13);
                assert!((c2.forcing(1, 0.1, &[x, y]) - c2.forcing(1, 0.1, &p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_level_has_no_orders() {
        let study = convergence_study(&case_1d(), &[8], (1.9, 2.1), 1).unwrap();
        assert_eq!(study.rows.len(), 1);
        assert!(study.rows[0].order_c.is_none());
        assert!(study.passed);
    }
}
