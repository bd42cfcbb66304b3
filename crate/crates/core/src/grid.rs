//! Periodic cell-centred grids, grid functions and the staggered difference
//! operators built on them.
//!
//! A grid covers the cuboid `[lo, hi]^dim` with `n` cells per axis. Cell
//! centres sit at `lo + (i + 1/2) h` for `i = 0..n`. Values are stored flat in
//! row-major order (the first axis varies slowest) and every stencil wraps
//! periodically; there are no ghost layers.
//!
//! An [`EdgeField`] stores one array per axis. Entry `idx` of the array for
//! axis `a` lives on the face between cell `idx` and its forward neighbour
//! along `a`, i.e. at the half-integer index `i + 1/2`.

use thiserror::Error;

/// Errors raised when building grids or combining fields.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1, 2 or 3 (got {0})")]
    InvalidDimension(usize),
    #[error("grid needs at least one cell per axis")]
    NoCells,
    #[error("domain bounds must satisfy lo < hi (got lo = {lo}, hi = {hi})")]
    EmptyDomain { lo: f64, hi: f64 },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("fields live on different grids")]
    Mismatch,
}

/// Uniform periodic grid on `[lo, hi]^dim` with `n` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    lo: f64,
    hi: f64,
    h: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, lo: f64, hi: f64) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::InvalidDimension(dim));
        }
        if n == 0 {
            return Err(GridError::NoCells);
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(GridError::EmptyDomain { lo, hi });
        }
        Ok(Self {
            dim,
            n,
            lo,
            hi,
            h: (hi - lo) / n as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Mesh spacing, shared by all axes.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of cells, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^dim`, the weight of one cell in discrete integrals.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// `|Omega| = (hi - lo)^dim`.
    pub fn volume(&self) -> f64 {
        (self.hi - self.lo).powi(self.dim as i32)
    }

    /// Flat-index distance between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        debug_assert!(axis < self.dim);
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Coordinate of cell centre `i` along any axis.
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.h
    }

    /// Per-axis integer coordinates of a flat index; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rem = idx;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    /// Flat index of periodic integer coordinates (any integers are accepted).
    pub fn index(&self, coords: &[isize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let n = self.n as isize;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.n + c.rem_euclid(n) as usize)
    }

    /// Physical position of the centre of cell `idx`; unused axes are zero.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.center(c[axis]);
        }
        x
    }

    /// Forward neighbour of `idx` along `axis`, wrapping periodically.
    #[inline]
    pub fn next(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (idx / s) % self.n == self.n - 1 {
            idx + s - self.n * s
        } else {
            idx + s
        }
    }

    /// Backward neighbour of `idx` along `axis`, wrapping periodically.
    #[inline]
    pub fn prev(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (idx / s) % self.n == 0 {
            idx + self.n * s - s
        } else {
            idx - s
        }
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator of reals.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Scalar grid function on cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &PeriodicGrid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &PeriodicGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at every cell centre. The closure receives a slice of
    /// length `dim`.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: &PeriodicGrid, mut f: F) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|idx| f(&grid.position(idx)[..dim]))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at periodic integer coordinates.
    pub fn at(&self, coords: &[isize]) -> f64 {
        self.values[self.grid.index(coords)]
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    /// Discrete average `h^dim / |Omega| * sum(values)`.
    pub fn mean(&self) -> f64 {
        self.sum() / self.grid.len() as f64
    }

    /// `h^dim * sum(values)`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Adds `value` to every cell.
    pub fn shift(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v += value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &CellField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    /// Subtracts the mean so the field lies in the zero-mean subspace.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.shift(-m);
    }

    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> CellField {
        CellField {
            grid: self.grid.clone(),
            values: self.values.iter().copied().map(f).collect(),
        }
    }
}

/// Vector field on cell faces, one periodic array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    grid: PeriodicGrid,
    axes: Vec<Vec<f64>>,
}

impl EdgeField {
    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &PeriodicGrid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            axes: vec![vec![value; grid.len()]; grid.dim()],
        }
    }

    pub fn from_axes(grid: &PeriodicGrid, axes: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if axes.len() != grid.dim() {
            return Err(GridError::LengthMismatch {
                expected: grid.dim(),
                actual: axes.len(),
            });
        }
        for a in &axes {
            if a.len() != grid.len() {
                return Err(GridError::LengthMismatch {
                    expected: grid.len(),
                    actual: a.len(),
                });
            }
        }
        Ok(Self {
            grid: grid.clone(),
            axes,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn axis_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.axes[axis]
    }

    pub fn min(&self) -> f64 {
        self.axes
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.axes
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Face-wise product `self * other`.
    pub fn product(&self, other: &EdgeField) -> EdgeField {
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect())
            .collect();
        EdgeField {
            grid: self.grid.clone(),
            axes,
        }
    }
}

// Slice kernels shared by the field-level operators and the time stepper.

pub(crate) fn laplace_into(grid: &PeriodicGrid, u: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let two_d = 2.0 * grid.dim() as f64;
    for (idx, o) in out.iter_mut().enumerate() {
        let mut acc = -two_d * u[idx];
        for axis in 0..grid.dim() {
            acc += u[grid.next(idx, axis)] + u[grid.prev(idx, axis)];
        }
        *o = acc * inv_h2;
    }
}

pub(crate) fn div_coeff_grad_into(grid: &PeriodicGrid, d: &EdgeField, u: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    out.iter_mut().for_each(|o| *o = 0.0);
    for axis in 0..grid.dim() {
        let da = d.axis(axis);
        for idx in 0..grid.len() {
            let ip = grid.next(idx, axis);
            let im = grid.prev(idx, axis);
            out[idx] += (da[idx] * (u[ip] - u[idx]) - da[im] * (u[idx] - u[im])) * inv_h2;
        }
    }
}

/// Discrete gradient: `(u(i+1) - u(i)) / h` on every face.
pub fn grad(u: &CellField) -> EdgeField {
    let grid = u.grid();
    let inv_h = 1.0 / grid.h();
    let v = u.values();
    let axes = (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|idx| (v[grid.next(idx, axis)] - v[idx]) * inv_h)
                .collect()
        })
        .collect();
    EdgeField {
        grid: grid.clone(),
        axes,
    }
}

/// Discrete divergence: `sum_axes (f(i+1/2) - f(i-1/2)) / h`.
pub fn div(f: &EdgeField) -> CellField {
    let grid = f.grid();
    let inv_h = 1.0 / grid.h();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let fa = f.axis(axis);
        for (idx, o) in out.iter_mut().enumerate() {
            *o += (fa[idx] - fa[grid.prev(idx, axis)]) * inv_h;
        }
    }
    CellField {
        grid: grid.clone(),
        values: out,
    }
}

/// Standard `2 dim + 1` point Laplacian with periodic wrap.
pub fn laplace(u: &CellField) -> CellField {
    let mut out = vec![0.0; u.grid().len()];
    laplace_into(u.grid(), u.values(), &mut out);
    CellField {
        grid: u.grid().clone(),
        values: out,
    }
}

/// Arithmetic face average `(c(i+1) + c(i)) / 2`.
pub fn edge_average(c: &CellField) -> EdgeField {
    let grid = c.grid();
    let v = c.values();
    let axes = (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|idx| 0.5 * (v[grid.next(idx, axis)] + v[idx]))
                .collect()
        })
        .collect();
    EdgeField {
        grid: grid.clone(),
        axes,
    }
}

/// Variable-coefficient operator `div_h(D grad_h u)`.
pub fn div_coeff_grad(d: &EdgeField, u: &CellField) -> CellField {
    debug_assert_eq!(d.grid(), u.grid());
    let mut out = vec![0.0; u.grid().len()];
    div_coeff_grad_into(u.grid(), d, u.values(), &mut out);
    CellField {
        grid: u.grid().clone(),
        values: out,
    }
}

/// Cell inner product `h^dim sum u w`.
pub fn inner(u: &CellField, w: &CellField) -> f64 {
    debug_assert_eq!(u.grid(), w.grid());
    compensated_sum(u.values().iter().zip(w.values()).map(|(a, b)| a * b)) * u.grid().cell_volume()
}

/// Face inner product, summed over axes.
///
/// Per axis this is `<a_x(f g), 1>`; on a periodic grid the face average
/// telescopes, so it reduces to `h^dim` times the plain sum of products.
pub fn edge_inner(f: &EdgeField, g: &EdgeField) -> f64 {
    debug_assert_eq!(f.grid(), g.grid());
    let mut acc = CompensatedSum::new();
    for axis in 0..f.grid().dim() {
        for (a, b) in f.axis(axis).iter().zip(g.axis(axis)) {
            acc.add(a * b);
        }
    }
    acc.value() * f.grid().cell_volume()
}

/// Discrete norms of a grid function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// `||grad_h u||_2`, summed over per-axis face norms.
    pub grad_l2: f64,
    pub h1: f64,
    pub h2: f64,
}

pub fn l2_norm(u: &CellField) -> f64 {
    inner(u, u).sqrt()
}

pub fn norms(u: &CellField) -> Norms {
    let vol = u.grid().cell_volume();
    let l1 = compensated_sum(u.values().iter().map(|v| v.abs())) * vol;
    let l2_sq = inner(u, u);
    let g = grad(u);
    let grad_sq = edge_inner(&g, &g);
    let lap = laplace(u);
    let lap_sq = inner(&lap, &lap);
    Norms {
        l1,
        l2: l2_sq.sqrt(),
        linf: u.max_abs(),
        grad_l2: grad_sq.sqrt(),
        h1: (l2_sq + grad_sq).sqrt(),
        h2: (l2_sq + grad_sq + lap_sq).sqrt(),
    }
}
