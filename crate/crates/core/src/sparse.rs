//! Compressed sparse row matrices, Jacobi-preconditioned conjugate gradients
//! and a small dense LDLᵀ solver used as a cross-check.

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::DimensionMismatch(format!(
                "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
            )));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &DenseMatrix<T>) -> Self {
        let triplets = (0..dense.nrows()).flat_map(|i| {
            (0..dense.ncols()).filter_map(move |j| {
                let v = dense.get(i, j);
                (v != T::zero()).then_some((i, j, v))
            })
        });
        Self::from_triplets(dense.nrows(), dense.ncols(), triplets)
            .expect("dense indices are in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        // rows visited in increasing order keep the transposed columns sorted
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                col_idx[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// Largest `|M_ij − M_ji|` over the stored pattern of both triangles.
    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let other = if j < self.nrows && i < self.ncols {
                    self.get(j, i)
                } else {
                    T::zero()
                };
                worst = worst.max((v - other).abs());
            }
        }
        worst
    }

    /// `y = M x`
    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, vector has length {}",
                self.ncols,
                x.len()
            )));
        }
        let mut y = vec![T::zero(); self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked `y = M x` for hot loops; panics on length mismatch.
    pub fn spmv_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// Entrywise `self + alpha * other`.
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let triplets = (0..self.nrows).flat_map(|i| {
            self.row(i)
                .map(move |(j, v)| (i, j, v))
                .chain(other.row(i).map(move |(j, v)| (i, j, alpha * v)))
        });
        Self::from_triplets(self.nrows, self.ncols, triplets)
    }

    /// Checks the structural invariants of the storage.
    pub fn is_well_formed(&self) -> bool {
        self.row_ptr.len() == self.nrows + 1
            && self.row_ptr[0] == 0
            && self.row_ptr.windows(2).all(|w| w[0] <= w[1])
            && *self.row_ptr.last().unwrap() == self.nnz()
            && self.col_idx.len() == self.values.len()
            && (0..self.nrows).all(|i| {
                let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
                cols.windows(2).all(|w| w[0] < w[1]) && cols.iter().all(|&c| c < self.ncols)
            })
    }
}

/// Free-function form of [`CsrMatrix::spmv`].
pub fn spmv<T: Scalar>(m: &CsrMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    m.spmv(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub rel_tolerance: T,
    /// `None` means ten times the system size.
    pub max_iterations: Option<usize>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            rel_tolerance: T::of(1e-12),
            max_iterations: None,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(rel_tolerance: T, max_iterations: Option<usize>) -> Result<Self> {
        if !(rel_tolerance > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerance must be positive, got {rel_tolerance}"
            )));
        }
        Ok(Self {
            rel_tolerance,
            max_iterations,
        })
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// `‖b − M x‖ / ‖b‖` of the recursively updated residual.
    pub relative_residual: T,
}

/// Solves `M x = b` for symmetric positive definite `M` by Jacobi-preconditioned
/// conjugate gradients, stopping once `‖b − M x‖ ≤ tol · ‖b‖`.
pub fn cg_solve<T: Scalar>(m: &CsrMatrix<T>, b: &[T], cfg: &SolverConfig<T>) -> Result<CgSolution<T>> {
    let n = m.nrows();
    if m.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cg needs a square system, got {:?} with rhs of length {}",
            m.shape(),
            b.len()
        )));
    }
    let b_norm = norm2(b);
    let mut x = vec![T::zero(); n];
    if b_norm == T::zero() {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let inv_diag: Vec<T> = m
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();

    let target = cfg.rel_tolerance * b_norm;
    let cap = cfg.iteration_cap(n);
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut r_norm = b_norm;

    for it in 1..=cap {
        m.spmv_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > T::zero()) {
            // curvature breakdown: the matrix is not positive definite
            return Err(Error::NonConvergence {
                iterations: it,
                residual: (r_norm / b_norm).as_f64(),
            });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        r_norm = norm2(&r);
        if r_norm <= target {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: r_norm / b_norm,
            });
        }
        for ((zi, &ri), &di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::NonConvergence {
        iterations: cap,
        residual: (r_norm / b_norm).as_f64(),
    })
}

/// `A + coeff · Dᵀ diag(c)⁻¹ D`, assembled directly in sparse form.
pub fn schur_matrix<T: Scalar>(
    a: &CsrMatrix<T>,
    d: &CsrMatrix<T>,
    c_diag: &[T],
    coeff: T,
) -> Result<CsrMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || d.ncols() != n || d.nrows() != c_diag.len() {
        return Err(Error::DimensionMismatch(format!(
            "A is {:?}, D is {:?}, C has {} entries",
            a.shape(),
            d.shape(),
            c_diag.len()
        )));
    }
    if let Some((index, &value)) = c_diag.iter().enumerate().find(|(_, &c)| !(c > T::zero())) {
        return Err(Error::NonPositiveDiagonal {
            index,
            value: value.as_f64(),
        });
    }
    let mut triplets: Vec<(usize, usize, T)> = (0..n)
        .flat_map(|i| a.row(i).map(move |(j, v)| (i, j, v)))
        .collect();
    for (q, &c) in c_diag.iter().enumerate() {
        let scale = coeff / c;
        let row: Vec<(usize, T)> = d.row(q).collect();
        for &(i, di) in &row {
            for &(j, dj) in &row {
                triplets.push((i, j, scale * di * dj));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m.data[i * ncols + j] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.nrows)
            .map(|i| dot(&self.data[i * self.ncols..(i + 1) * self.ncols], x))
            .collect()
    }

    /// Solves `M x = b` for symmetric `M` with an unpivoted LDLᵀ factorization.
    pub fn ldlt_solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.nrows;
        if self.ncols != n || b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "ldlt needs a square system, got {}x{} with rhs of length {}",
                self.nrows,
                self.ncols,
                b.len()
            )));
        }
        let mut l = DenseMatrix::zeros(n, n);
        let mut diag = vec![T::zero(); n];
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for j in 0..n {
            let mut dj = self.get(j, j);
            for k in 0..j {
                dj -= l.get(j, k) * l.get(j, k) * diag[k];
            }
            if dj.abs() <= T::epsilon() * scale * T::of_usize(n) {
                return Err(Error::SingularMatrix {
                    index: j,
                    value: dj.as_f64(),
                });
            }
            diag[j] = dj;
            l.set(j, j, T::one());
            for i in (j + 1)..n {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k) * diag[k];
                }
                l.set(i, j, v / dj);
            }
        }
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = l.get(i, k) * y[k];
                y[i] -= t;
            }
        }
        for i in 0..n {
            y[i] /= diag[i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let t = l.get(k, i) * y[k];
                y[i] -= t;
            }
        }
        Ok(y)
    }
}
