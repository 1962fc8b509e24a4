//! Lagrange nodal basis on the reference triangle `conv{(0,0), (1,0), (0,1)}`.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::quadrature::triangle_rule;
use crate::error::{Error, Result};
use crate::Point;

pub const MAX_DEGREE: usize = 4;

/// Barycentric multi-indices `(i0, i1, i2)`, `i0 + i1 + i2 = degree`, in local
/// order: the three vertices, the interior points of edges 0-1, 1-2, 2-0 (each
/// walked from its first vertex), then element-interior points.
pub fn lattice(degree: usize) -> Vec<[usize; 3]> {
    let l = degree;
    let mut out = vec![[l, 0, 0], [0, l, 0], [0, 0, l]];
    for k in 1..l {
        out.push([l - k, k, 0]);
    }
    for k in 1..l {
        out.push([0, l - k, k]);
    }
    for k in 1..l {
        out.push([k, 0, l - k]);
    }
    for i1 in 1..l {
        for i2 in 1..l {
            if i1 + i2 < l {
                out.push([l - i1 - i2, i1, i2]);
            }
        }
    }
    out
}

/// Nodal basis of `P_degree` expressed in monomials `xi^a eta^b`, plus values
/// and gradients at an exact reference rule for assembling element matrices.
#[derive(Debug)]
pub struct RefBasis {
    degree: usize,
    lattice: Vec<[usize; 3]>,
    monomials: Vec<(usize, usize)>,
    // coeffs[(m, n)]: weight of monomial m in basis function n
    coeffs: DMatrix<f64>,
    rule: Vec<(Point, f64)>,
    rule_values: Vec<Vec<f64>>,
    rule_grads: Vec<Vec<[f64; 2]>>,
    mass: DMatrix<f64>,
}

impl RefBasis {
    pub fn get(degree: usize) -> Result<&'static RefBasis> {
        static CACHE: [OnceLock<RefBasis>; MAX_DEGREE] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        Ok(CACHE[degree - 1].get_or_init(|| RefBasis::build(degree)))
    }

    fn build(degree: usize) -> Self {
        let lattice = lattice(degree);
        let mut monomials = Vec::new();
        for total in 0..=degree {
            for b in 0..=total {
                monomials.push((total - b, b));
            }
        }
        let n = lattice.len();
        let l = degree as f64;
        let vander = DMatrix::from_fn(n, n, |i, m| {
            let (xi, eta) = (lattice[i][1] as f64 / l, lattice[i][2] as f64 / l);
            let (a, b) = monomials[m];
            xi.powi(a as i32) * eta.powi(b as i32)
        });
        // V[i, m] C[m, n] = delta_in
        let coeffs = vander.try_inverse().expect("lattice Vandermonde is invertible");

        let mut basis = RefBasis {
            degree,
            lattice,
            monomials,
            coeffs,
            rule: triangle_rule(2 * degree),
            rule_values: Vec::new(),
            rule_grads: Vec::new(),
            mass: DMatrix::zeros(n, n),
        };
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        for q in 0..basis.rule.len() {
            let (xi, w) = basis.rule[q];
            basis.eval(xi, &mut vals, &mut grads);
            for i in 0..n {
                for j in 0..n {
                    basis.mass[(i, j)] += w * vals[i] * vals[j];
                }
            }
            basis.rule_values.push(vals.clone());
            basis.rule_grads.push(grads.clone());
        }
        basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &[[usize; 3]] {
        &self.lattice
    }

    /// Reference coordinates of local node `n`.
    pub fn node(&self, n: usize) -> Point {
        let l = self.degree as f64;
        [self.lattice[n][1] as f64 / l, self.lattice[n][2] as f64 / l]
    }

    /// Values and reference gradients of all local basis functions at `xi`.
    pub fn eval(&self, xi: Point, values: &mut [f64], grads: &mut [[f64; 2]]) {
        let d = self.degree;
        let mut px = [1.0; MAX_DEGREE + 1];
        let mut py = [1.0; MAX_DEGREE + 1];
        for k in 1..=d {
            px[k] = px[k - 1] * xi[0];
            py[k] = py[k - 1] * xi[1];
        }
        values.iter_mut().for_each(|v| *v = 0.0);
        grads.iter_mut().for_each(|g| *g = [0.0; 2]);
        for (m, &(a, b)) in self.monomials.iter().enumerate() {
            let val = px[a] * py[b];
            let dx = if a > 0 { a as f64 * px[a - 1] * py[b] } else { 0.0 };
            let dy = if b > 0 { b as f64 * px[a] * py[b - 1] } else { 0.0 };
            for n in 0..self.lattice.len() {
                let c = self.coeffs[(m, n)];
                if c != 0.0 {
                    values[n] += c * val;
                    grads[n][0] += c * dx;
                    grads[n][1] += c * dy;
                }
            }
        }
    }

    pub fn values(&self, xi: Point) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        let mut g = vec![[0.0; 2]; self.len()];
        self.eval(xi, &mut v, &mut g);
        v
    }

    /// Exact rule on the reference triangle (weights sum to 1/2).
    pub fn rule(&self) -> &[(Point, f64)] {
        &self.rule
    }

    pub fn rule_values(&self, q: usize) -> &[f64] {
        &self.rule_values[q]
    }

    pub fn rule_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.rule_grads[q]
    }

    /// Mass matrix on the reference triangle.
    pub fn reference_mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
}

/// Lagrange polynomials on the equispaced nodes `k / degree` of `[0, 1]`.
pub fn lagrange_1d(degree: usize, t: f64) -> Vec<f64> {
    let l = degree as f64;
    (0..=degree)
        .map(|k| {
            let tk = k as f64 / l;
            (0..=degree)
                .filter(|&m| m != k)
                .map(|m| (t - m as f64 / l) / (tk - m as f64 / l))
                .product()
        })
        .collect()
}
