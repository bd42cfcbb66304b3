use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Conj, MatMut, Par, Side};

use crate::grid::{EdgeField, PeriodicGrid};
use crate::model::Model;

use super::residual::Layout;
use super::SchemeError;

/// Emits every Jacobian entry `(row, col, value)` of the stacked residual at
/// `x`; duplicates are meant to be summed. With `pin` set, the Poisson row of
/// cell 0 is replaced by the identity on `psi_0`.
pub(crate) fn for_each_entry(
    model: &Model,
    layout: &Layout,
    mobility: &[EdgeField],
    x: &[f64],
    dt: f64,
    pin: bool,
    mut emit: impl FnMut(usize, usize, f64),
) {
    let grid = model.grid();
    let sp = &model.species;
    let gc = &model.split.gc;
    let kappa = model.electrostatics.kappa();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let m = layout.species;

    // Entries of div_h(d grad_h .) in row i, shifted by `row0` and `col0`.
    let stencil = |emit: &mut dyn FnMut(usize, usize, f64),
                   row0: usize,
                   col0: usize,
                   i: usize,
                   d: Option<&EdgeField>,
                   scale: f64| {
        for axis in 0..grid.dim() {
            let ip = grid.next(i, axis);
            let im = grid.prev(i, axis);
            let (dp, dm) = match d {
                Some(d) => (d.axis(axis)[i], d.axis(axis)[im]),
                None => (1.0, 1.0),
            };
            emit(row0 + i, col0 + ip, scale * dp * inv_h2);
            emit(row0 + i, col0 + im, scale * dm * inv_h2);
            emit(row0 + i, col0 + i, -scale * (dp + dm) * inv_h2);
        }
    };

    for s in 0..m {
        let cs = layout.c(s).start;
        let ms = layout.mu(s).start;
        let eps = sp.epsilon()[s];
        let z = sp.valence()[s] as f64;
        let sigma = sp.sigma()[s];
        for i in 0..layout.cells {
            emit(cs + i, cs + i, 1.0 / dt);
            stencil(&mut emit, cs, ms, i, Some(&mobility[s]), -eps);

            emit(ms + i, ms + i, 1.0);
            emit(ms + i, layout.psi().start + i, -z);
            for t in 0..m {
                let mut v = -gc.get(s, t);
                if t == s {
                    v -= 1.0 / x[cs + i];
                }
                emit(ms + i, layout.c(t).start + i, v);
            }
            stencil(&mut emit, ms, cs, i, None, sigma);
        }
    }
    let ps = layout.psi().start;
    for i in 0..layout.cells {
        if pin && i == 0 {
            emit(ps, ps, 1.0);
            continue;
        }
        stencil(&mut emit, ps, ps, i, None, -kappa);
        for t in 0..m {
            emit(ps + i, layout.c(t).start + i, -(sp.valence()[t] as f64));
        }
    }
}

/// Sparse pinned Jacobian with a reusable symbolic factorisation.
pub(crate) struct SparseJacobian {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu_symbolic: SymbolicLu<usize>,
    sym: SymmetricForm,
}

/// Upper triangle of `S = P D J`, where `D` scales the mass rows by `dt` and
/// `P` swaps them with the chemical-potential rows. `S` is symmetric, so it
/// admits a sparse `LDL^T` factorisation without pivoting.
struct SymmetricForm {
    /// Rows `< block` hold the chemical-potential equations.
    block: usize,
    dt: f64,
    /// Source entry of the full Jacobian and whether it is a mass row.
    src: Vec<(usize, bool)>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    cholesky: SymbolicCholesky<usize>,
}

/// Numeric factorisation of the Newton matrix.
pub(crate) enum Factor {
    Ldlt(Vec<f64>),
    Lu(Lu<usize, f64>),
}

impl std::fmt::Debug for SparseJacobian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseJacobian")
            .field("dim", &self.dim)
            .field("entries", &self.rows.len())
            .finish_non_exhaustive()
    }
}

fn linear_error(e: impl std::fmt::Debug) -> SchemeError {
    SchemeError::LinearSolveFailed(format!("{e:?}"))
}

impl SparseJacobian {
    pub fn new(model: &Model, layout: &Layout) -> Result<Self, SchemeError> {
        let grid: &PeriodicGrid = model.grid();
        let mobility: Vec<EdgeField> = (0..layout.species)
            .map(|_| EdgeField::constant(grid, 1.0))
            .collect();
        let x = vec![1.0; layout.total()];
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for_each_entry(model, layout, &mobility, &x, 1.0, true, |r, c, _| {
            rows.push(r);
            cols.push(c);
        });
        let pairs: Vec<Pair<usize, usize>> = rows
            .iter()
            .zip(&cols)
            .map(|(&row, &col)| Pair { row, col })
            .collect();
        let dim = layout.total();
        let (symbolic, argsort) =
            SymbolicSparseColMat::try_new_from_indices(dim, dim, &pairs).map_err(linear_error)?;
        let lu_symbolic = SymbolicLu::try_new(symbolic.as_ref()).map_err(linear_error)?;
        let values = vec![0.0; rows.len()];
        let sym = SymmetricForm::new(layout, &rows, &cols)?;
        Ok(Self {
            dim,
            rows,
            cols,
            values,
            symbolic,
            argsort,
            lu_symbolic,
            sym,
        })
    }

    pub fn assemble(
        &mut self,
        model: &Model,
        layout: &Layout,
        mobility: &[EdgeField],
        x: &[f64],
        dt: f64,
    ) {
        let mut k = 0;
        let values = &mut self.values;
        for_each_entry(model, layout, mobility, x, dt, true, |_, _, v| {
            values[k] = v;
            k += 1;
        });
        debug_assert_eq!(k, values.len());
        let sym = &mut self.sym;
        sym.dt = dt;
        for (v, &(k, mass)) in sym.values.iter_mut().zip(&sym.src) {
            *v = if mass { dt * values[k] } else { values[k] };
        }
    }

    /// Factors the assembled matrix, preferring the symmetric form.
    pub fn factor(&self) -> Result<Factor, SchemeError> {
        match self.sym.factor() {
            Some(l) => Ok(Factor::Ldlt(l)),
            None => self.factor_lu().map(Factor::Lu),
        }
    }

    fn factor_lu(&self) -> Result<Lu<usize, f64>, SchemeError> {
        let mat =
            SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, &self.values)
                .map_err(linear_error)?;
        Lu::try_new_with_symbolic(self.lu_symbolic.clone(), mat.as_ref()).map_err(linear_error)
    }

    /// `out = J v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for ((&r, &c), &a) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            out[r] += a * v[c];
        }
    }

    /// Solves `J x = rhs` in place with a few sweeps of iterative refinement.
    /// An `LDL^T` solve that misses the tolerance is redone with `LU`.
    pub fn solve(
        &self,
        factor: &Factor,
        rhs: &mut [f64],
        tol: f64,
        sweeps: usize,
    ) -> Result<(), SchemeError> {
        match factor {
            Factor::Lu(lu) => self.solve_lu(lu, rhs, tol, sweeps),
            Factor::Ldlt(l) => {
                let b = rhs.to_vec();
                let mut sb = self.sym.permute(&b);
                if self.sym.solve(l, &mut sb, tol, sweeps) {
                    rhs.copy_from_slice(&sb);
                    return Ok(());
                }
                log::debug!("LDL^T solve missed the tolerance, falling back to LU");
                let lu = self.factor_lu()?;
                self.solve_lu(&lu, rhs, tol, sweeps)
            }
        }
    }

    fn solve_lu(
        &self,
        lu: &Lu<usize, f64>,
        rhs: &mut [f64],
        tol: f64,
        sweeps: usize,
    ) -> Result<(), SchemeError> {
        let b = rhs.to_vec();
        let b_norm = sup(&b);
        lu.solve_in_place(MatMut::from_column_major_slice_mut(rhs, self.dim, 1));
        let mut r = vec![0.0; self.dim];
        for _ in 0..sweeps {
            self.apply(rhs, &mut r);
            let mut r_norm = 0.0f64;
            for (ri, bi) in r.iter_mut().zip(&b) {
                *ri = bi - *ri;
                r_norm = r_norm.max(ri.abs());
            }
            if r_norm <= tol * b_norm {
                break;
            }
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut r, self.dim, 1));
            rhs.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        }
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SchemeError::LinearSolveFailed("non-finite solution".into()))
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl SymmetricForm {
    fn new(layout: &Layout, rows: &[usize], cols: &[usize]) -> Result<Self, SchemeError> {
        let block = layout.species * layout.cells;
        let dim = layout.total();
        let pin = layout.psi().start;
        let mut src = Vec::new();
        let mut pairs = Vec::new();
        for (k, (&r, &c)) in rows.iter().zip(cols).enumerate() {
            let (row, mass) = Self::row_of(block, r);
            // The pinned unknown is decoupled: its column only keeps the diagonal.
            let pinned = (c == pin) != (row == pin);
            if row <= c && !pinned {
                src.push((k, mass));
                pairs.push(Pair { row, col: c });
            }
        }
        let (symbolic, argsort) =
            SymbolicSparseColMat::try_new_from_indices(dim, dim, &pairs).map_err(linear_error)?;
        let cholesky = factorize_symbolic_cholesky(
            symbolic.as_ref(),
            Side::Upper,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(linear_error)?;
        Ok(Self {
            block,
            dt: 1.0,
            rows: pairs.iter().map(|p| p.row).collect(),
            cols: pairs.iter().map(|p| p.col).collect(),
            values: vec![0.0; src.len()],
            src,
            symbolic,
            argsort,
            cholesky,
        })
    }

    /// Row of `S` holding Jacobian row `r`, and whether `r` is a mass row.
    fn row_of(block: usize, r: usize) -> (usize, bool) {
        if r < block {
            (r + block, true)
        } else if r < 2 * block {
            (r - block, false)
        } else {
            (r, false)
        }
    }

    /// `P D b`.
    fn permute(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; b.len()];
        for (r, &v) in b.iter().enumerate() {
            let (row, mass) = Self::row_of(self.block, r);
            out[row] = if mass { self.dt * v } else { v };
        }
        out
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for ((&r, &c), &a) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            out[r] += a * v[c];
            if r != c {
                out[c] += a * v[r];
            }
        }
    }

    fn factor(&self) -> Option<Vec<f64>> {
        let mat =
            SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, &self.values)
                .ok()?;
        let mut l = vec![0.0; self.cholesky.len_val()];
        let mut mem = MemBuffer::new(
            self.cholesky
                .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()),
        );
        self.cholesky
            .factorize_numeric_ldlt(
                &mut l,
                mat.as_ref(),
                Side::Upper,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .ok()?;
        l.iter().all(|v| v.is_finite()).then_some(l)
    }

    /// Refined solve of `S x = b` in place; reports whether the relative
    /// residual reached `tol`.
    fn solve(&self, l: &[f64], b: &mut [f64], tol: f64, sweeps: usize) -> bool {
        let n = b.len();
        let ldlt = LdltRef::new(&self.cholesky, l);
        let mut mem = MemBuffer::new(self.cholesky.solve_in_place_scratch::<f64>(1, Par::Seq));
        let mut lsolve = |x: &mut [f64]| {
            ldlt.solve_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(x, n, 1),
                Par::Seq,
                MemStack::new(&mut mem),
            )
        };
        let rhs = b.to_vec();
        let b_norm = sup(&rhs);
        lsolve(b);
        let mut r = vec![0.0; n];
        for sweep in 0..=sweeps {
            self.apply(b, &mut r);
            let mut r_norm = 0.0f64;
            for (ri, bi) in r.iter_mut().zip(&rhs) {
                *ri = bi - *ri;
                r_norm = r_norm.max(ri.abs());
            }
            if !r_norm.is_finite() {
                return false;
            }
            if r_norm <= tol * b_norm {
                return true;
            }
            if sweep == sweeps {
                break;
            }
            lsolve(&mut r);
            b.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        }
        false
    }
}
