//! Sparse symmetric systems and a Jacobi-preconditioned conjugate gradient
//! solver with a dense Cholesky cross-check for small systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RTOL: f64 = 1e-12;
/// Largest system that is also solved densely as a cross-check.
pub const DENSE_CHECK_LIMIT: usize = 2000;
/// Relative energy agreement demanded between CG and the dense solve.
pub const DENSE_CHECK_TOL: f64 = 1e-8;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_offsets: Vec<usize>,
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; the result does not depend on triplet order
    /// beyond floating point summation, which follows the input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps the input order of duplicates
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_offsets = vec![0; n + 1];
        let mut columns = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                columns.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self { n, row_offsets, columns, values }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_offsets[i]..self.row_offsets[i + 1] {
                s += self.values[p] * x[self.columns[p]];
            }
            *yi = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_offsets[i]..self.row_offsets[i + 1])
                    .find(|&p| self.columns[p] == i)
                    .map_or(0.0, |p| self.values[p])
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_offsets[i]..self.row_offsets[i + 1] {
                m[(i, self.columns[p])] += self.values[p];
            }
        }
        m
    }

    /// Largest `|A_ij - A_ji| / max|A|`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.to_dense();
        let scale = d.amax().max(f64::MIN_POSITIVE);
        (&d - d.transpose()).amax() / scale
    }
}

/// A gauged (definite) symmetric system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Coefficient contrast, only carried into failure reports.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG; stops when `sqrt(r.D^-1 r) <= rtol sqrt(b.D^-1 b)`.
pub fn conjugate_gradient(system: &SpdSystem, rtol: f64, max_iter: usize) -> Result<Solution> {
    let a = &system.matrix;
    let n = a.n;
    let b = &system.rhs;
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let b_norm = dot(b, &z).sqrt();
    if n == 0 || b_norm == 0.0 {
        return Ok(Solution { x, iterations: 0, residual: 0.0 });
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = 1.0;
    for it in 1..=max_iter {
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolverFailure { iterations: it, residual, contrast: system.contrast });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        residual = rz_new.max(0.0).sqrt() / b_norm;
        if residual <= rtol {
            return Ok(Solution { x, iterations: it, residual });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure { iterations: max_iter, residual, contrast: system.contrast })
}

/// Dense Cholesky solve after symmetric diagonal scaling.
pub fn solve_dense(system: &SpdSystem) -> Result<Vec<f64>> {
    let n = system.matrix.n;
    let a = system.matrix.to_dense();
    let s: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)].abs().max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| s[i] * a[(i, j)] * s[j]);
    let rhs = DVector::from_iterator(n, system.rhs.iter().zip(&s).map(|(b, s)| b * s));
    let y = scaled
        .cholesky()
        .ok_or(Error::SolverFailure { iterations: 0, residual: f64::INFINITY, contrast: system.contrast })?
        .solve(&rhs);
    Ok(y.iter().zip(&s).map(|(y, s)| y * s).collect())
}

/// `x^T A x`.
pub fn energy(matrix: &CsrMatrix, x: &[f64]) -> f64 {
    let mut ax = vec![0.0; matrix.n];
    matrix.mul(x, &mut ax);
    dot(x, &ax)
}

/// CG with the default iteration cap `50 n`; systems with at most
/// [`DENSE_CHECK_LIMIT`] unknowns are also solved densely and must agree in
/// energy to [`DENSE_CHECK_TOL`].
pub fn solve_spd(system: &SpdSystem, rtol: f64, max_iter: Option<usize>) -> Result<Solution> {
    let n = system.matrix.n;
    let sol = conjugate_gradient(system, rtol, max_iter.unwrap_or(50 * n.max(1)))?;
    if n > 0 && n <= DENSE_CHECK_LIMIT {
        let dense = solve_dense(system)?;
        let e_cg = energy(&system.matrix, &sol.x);
        let e_dense = energy(&system.matrix, &dense);
        if (e_cg - e_dense).abs() > DENSE_CHECK_TOL * e_dense.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::SolverFailure { iterations: sol.iterations, residual: sol.residual, contrast: system.contrast });
        }
    }
    Ok(sol)
}
