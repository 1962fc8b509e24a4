//! Best approximation in the weighted energy norm
//! `|v|^2 = sum_K a_K ||grad v||_K^2 + beta ||v||^2`, globally and on
//! element, pair and star patches.
//!
//! Element matrices are exact; the target enters only through its moments
//! against the basis and, for the reported errors, through direct quadrature
//! of `|grad(u - V)|^2` and `(u - V)^2` at the cached samples.

pub mod report;
pub mod solver;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::Coefficient;
use crate::error::{Error, Result};
use crate::fespace::{LagrangeSpace, SampledField};
use crate::mesh::Locus;
pub use report::{LocalizationReport, LocusError, LocusKind, LocusSet};
pub use solver::{solve_spd, CsrMatrix, Solution, SpdSystem, DEFAULT_RTOL};

/// How the constant mode (or boundary values) of a problem is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gauge {
    /// Nodes on the domain boundary are fixed to zero.
    Dirichlet,
    /// No boundary condition; for pure seminorm problems one node is pinned
    /// and the result shifted to match the mean of the target.
    MeanZero,
}

/// Exact element matrices and target moments for one space/target pair.
pub struct Projector<'a> {
    space: &'a LagrangeSpace,
    samples: &'a SampledField,
    stiffness: Vec<DMatrix<f64>>,
    mass: Vec<DMatrix<f64>>,
    grad_moments: Vec<DVector<f64>>,
    value_moments: Vec<DVector<f64>>,
    integrals: Vec<f64>,
    rtol: f64,
}

/// Minimizer on a set of elements.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFit {
    /// Global node ids touched by the region, ascending.
    pub nodes: Vec<usize>,
    /// Values of the minimizer at `nodes`.
    pub values: Vec<f64>,
    pub error_sq: f64,
    pub iterations: usize,
}

impl RegionFit {
    pub fn value_at(&self, node: usize) -> Option<f64> {
        self.nodes.binary_search(&node).ok().map(|i| self.values[i])
    }
}

/// Local polynomial best fit on one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementFit {
    pub element: usize,
    pub error_sq: f64,
    /// Nodal values of `P_K` in local lattice order.
    pub local_values: Vec<f64>,
}

/// Global Ritz projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFit {
    pub error_sq: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

/// Errors of the combined reaction-diffusion norm and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdErrors {
    pub beta: f64,
    pub combined_global_sq: f64,
    pub gradient_global_sq: f64,
    pub l2_global_sq: f64,
    /// `a_K inf_P ||grad(u - P)||_K^2` per element.
    pub element_gradient: Vec<f64>,
    /// `(edge, inf_V ||u - V||^2_{omega_F})` per interior edge.
    pub pair_l2: Vec<(usize, f64)>,
}

impl RdErrors {
    /// `sum_K element_gradient + beta sum_F pair_l2`.
    pub fn localized_sum(&self) -> f64 {
        self.element_gradient.iter().sum::<f64>() + self.beta * self.pair_l2.iter().map(|p| p.1).sum::<f64>()
    }
}

impl<'a> Projector<'a> {
    pub fn new(space: &'a LagrangeSpace, samples: &'a SampledField) -> Result<Self> {
        let ne = space.mesh().num_elements();
        if samples.num_elements() != ne {
            return Err(Error::PlanMismatch(format!(
                "samples cover {} elements, space has {ne}",
                samples.num_elements()
            )));
        }
        let n = space.reference().len();
        let per_element: Vec<_> = (0..ne)
            .into_par_iter()
            .map(|k| {
                let mut vals = vec![0.0; n];
                let mut grads = vec![[0.0; 2]; n];
                let mut g = DVector::zeros(n);
                let mut m = DVector::zeros(n);
                let mut integral = 0.0;
                for s in samples.element(k) {
                    space.eval_local(k, s.x, &mut vals, &mut grads);
                    for i in 0..n {
                        g[i] += s.w * (s.grad[0] * grads[i][0] + s.grad[1] * grads[i][1]);
                        m[i] += s.w * s.u * vals[i];
                    }
                    integral += s.w * s.u;
                }
                (space.local_stiffness(k), space.local_mass(k), g, m, integral)
            })
            .collect();
        let mut out = Projector {
            space,
            samples,
            stiffness: Vec::with_capacity(ne),
            mass: Vec::with_capacity(ne),
            grad_moments: Vec::with_capacity(ne),
            value_moments: Vec::with_capacity(ne),
            integrals: Vec::with_capacity(ne),
            rtol: DEFAULT_RTOL,
        };
        for (s, m, g, v, i) in per_element {
            out.stiffness.push(s);
            out.mass.push(m);
            out.grad_moments.push(g);
            out.value_moments.push(v);
            out.integrals.push(i);
        }
        Ok(out)
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn space(&self) -> &LagrangeSpace {
        self.space
    }

    pub fn samples(&self) -> &SampledField {
        self.samples
    }

    /// `int_K u phi_i` in local order.
    pub fn value_moments(&self, k: usize) -> &DVector<f64> {
        &self.value_moments[k]
    }

    /// `int_K u`.
    pub fn integral(&self, k: usize) -> f64 {
        self.integrals[k]
    }

    fn check_region(&self, region: &[usize], a: Option<&Coefficient>) -> Result<Vec<usize>> {
        let ne = self.space.mesh().num_elements();
        if let Some(a) = a {
            if a.len() != ne {
                return Err(Error::InvalidInput(format!("coefficient has {} values for {ne} elements", a.len())));
            }
        }
        if region.is_empty() {
            return Err(Error::InvalidInput("empty region".into()));
        }
        let mut r = region.to_vec();
        r.sort_unstable();
        r.dedup();
        if let Some(&k) = r.last().filter(|&&k| k >= ne) {
            return Err(Error::PlanMismatch(format!("element {k} is not covered")));
        }
        Ok(r)
    }

    /// `sum_{K in region} a_K ||grad(u - V)||_K^2 + beta ||u - V||^2_K` by
    /// direct quadrature; `value(node)` gives the nodal values of `V`.
    pub fn region_error(&self, region: &[usize], a: Option<&Coefficient>, beta: f64, value: impl Fn(usize) -> f64 + Sync) -> f64 {
        let n = self.space.reference().len();
        let parts: Vec<f64> = region
            .par_iter()
            .map(|&k| {
                let coeffs: Vec<f64> = self.space.element_nodes(k).iter().map(|&id| value(id)).collect();
                let weight = a.map_or(0.0, |a| a.value(k));
                let mut vals = vec![0.0; n];
                let mut grads = vec![[0.0; 2]; n];
                let mut total = 0.0;
                for s in self.samples.element(k) {
                    self.space.eval_local(k, s.x, &mut vals, &mut grads);
                    let mut v = 0.0;
                    let mut g = [0.0; 2];
                    for i in 0..n {
                        v += coeffs[i] * vals[i];
                        g[0] += coeffs[i] * grads[i][0];
                        g[1] += coeffs[i] * grads[i][1];
                    }
                    let (dx, dy, d) = (s.grad[0] - g[0], s.grad[1] - g[1], s.u - v);
                    total += s.w * (weight * (dx * dx + dy * dy) + beta * d * d);
                }
                total
            })
            .collect();
        parts.into_iter().sum()
    }

    /// Minimizes the weighted norm of `u - V` over the continuous degree-`l`
    /// functions on `region`. With `dirichlet`, nodes on the domain boundary
    /// are fixed to zero. A pure seminorm problem without fixed nodes pins
    /// its first node and then matches the target mean on the region.
    pub fn solve_region(&self, region: &[usize], a: Option<&Coefficient>, beta: f64, dirichlet: bool) -> Result<RegionFit> {
        let region = self.check_region(region, a)?;
        if a.is_none() && beta <= 0.0 {
            return Err(Error::InvalidInput("norm has neither a gradient nor a mass part".into()));
        }
        let nodes = self.space.region_nodes(&region);
        let fixed: Vec<bool> = nodes.iter().map(|&id| dirichlet && self.space.node(id).boundary).collect();
        let seminorm = beta <= 0.0;
        let pin = (seminorm && !fixed.iter().any(|&f| f)).then_some(0);
        let mut free_index = vec![usize::MAX; nodes.len()];
        let mut nfree = 0;
        for i in 0..nodes.len() {
            if !fixed[i] && pin != Some(i) {
                free_index[i] = nfree;
                nfree += 1;
            }
        }
        let local_of = |id: usize| nodes.binary_search(&id).unwrap();

        let mut triplets = Vec::new();
        let mut rhs = vec![0.0; nfree];
        for &k in &region {
            let ak = a.map_or(0.0, |a| a.value(k));
            let ids: Vec<usize> = self.space.element_nodes(k).iter().map(|&id| free_index[local_of(id)]).collect();
            for (i, &fi) in ids.iter().enumerate() {
                if fi == usize::MAX {
                    continue;
                }
                rhs[fi] += ak * self.grad_moments[k][i] + beta * self.value_moments[k][i];
                for (j, &fj) in ids.iter().enumerate() {
                    if fj != usize::MAX {
                        triplets.push((fi, fj, ak * self.stiffness[k][(i, j)] + beta * self.mass[k][(i, j)]));
                    }
                }
            }
        }
        let contrast = a.map_or(1.0, |a| a.alpha());
        let system = SpdSystem { matrix: CsrMatrix::from_triplets(nfree, triplets), rhs, contrast };
        let sol = solve_spd(&system, self.rtol, None)?;
        let mut values: Vec<f64> = (0..nodes.len())
            .map(|i| if free_index[i] == usize::MAX { 0.0 } else { sol.x[free_index[i]] })
            .collect();
        if pin.is_some() {
            let target: f64 = region.iter().map(|&k| self.integrals[k]).sum();
            let mut current = 0.0;
            let mut area = 0.0;
            for &k in &region {
                let ids = self.space.element_nodes(k);
                let mass = &self.mass[k];
                for i in 0..ids.len() {
                    let row: f64 = (0..ids.len()).map(|j| mass[(i, j)]).sum();
                    current += values[local_of(ids[i])] * row;
                }
                area += self.space.mesh().area(k);
            }
            let shift = (target - current) / area;
            values.iter_mut().for_each(|v| *v += shift);
        }
        let error_sq = self.region_error(&region, a, beta, |id| values[local_of(id)]);
        Ok(RegionFit { nodes, values, error_sq, iterations: sol.iterations })
    }

    /// `a_K inf_{P in P_l(K)} ||grad(u - P)||_K^2` and the minimizer; with
    /// `mean_match` the constant is fixed by `int_K P = int_K u`, otherwise by
    /// `P(barycenter) = mean of u`.
    pub fn local_element_error(&self, k: usize, a: &Coefficient, mean_match: bool) -> Result<ElementFit> {
        let fit = self.solve_region(&[k], Some(a), 0.0, false)?;
        let mut local_values: Vec<f64> = self
            .space
            .element_nodes(k)
            .iter()
            .map(|&id| fit.value_at(id).unwrap())
            .collect();
        if !mean_match {
            let c = self.space.mesh().corners(k);
            let bary = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
            let n = local_values.len();
            let mut vals = vec![0.0; n];
            let mut grads = vec![[0.0; 2]; n];
            self.space.eval_local(k, bary, &mut vals, &mut grads);
            let at_bary: f64 = local_values.iter().zip(&vals).map(|(c, v)| c * v).sum();
            let shift = self.integrals[k] / self.space.mesh().area(k) - at_bary;
            local_values.iter_mut().for_each(|v| *v += shift);
        }
        Ok(ElementFit { element: k, error_sq: fit.error_sq, local_values })
    }

    /// Minimum over a patch: pairs are unconstrained, stars honour the
    /// Dirichlet flag.
    pub fn local_region_error(&self, region: &[usize], a: &Coefficient, dirichlet: bool) -> Result<f64> {
        Ok(self.solve_region(region, Some(a), 0.0, dirichlet)?.error_sq)
    }

    /// Global best approximation error in the weighted energy seminorm.
    pub fn global_best_error(&self, a: &Coefficient, gauge: Gauge) -> Result<GlobalFit> {
        self.global_fit(Some(a), 0.0, gauge)
    }

    fn global_fit(&self, a: Option<&Coefficient>, beta: f64, gauge: Gauge) -> Result<GlobalFit> {
        let all: Vec<usize> = (0..self.space.mesh().num_elements()).collect();
        let fit = self.solve_region(&all, a, beta, gauge == Gauge::Dirichlet)?;
        debug_assert_eq!(fit.nodes.len(), self.space.num_nodes());
        Ok(GlobalFit { error_sq: fit.error_sq, coefficients: fit.values, iterations: fit.iterations })
    }

    /// Errors on every element, every interior edge pair or every interior
    /// vertex star, ascending by locus id.
    pub fn locus_errors(&self, kind: LocusKind, a: &Coefficient, gauge: Gauge) -> Result<Vec<LocusError>> {
        let tri = self.space.mesh();
        let loci: Vec<(usize, Vec<usize>, bool)> = match kind {
            LocusKind::Element => (0..tri.num_elements()).map(|k| (k, vec![k], false)).collect(),
            LocusKind::Pair => tri
                .interior_edges()
                .map(|e| (e, tri.patch_of(Locus::Edge(e)).unwrap(), false))
                .collect(),
            LocusKind::Star => tri
                .interior_vertices()
                .map(|z| (z, tri.patch_of(Locus::Vertex(z)).unwrap(), gauge == Gauge::Dirichlet))
                .collect(),
        };
        loci.into_par_iter()
            .map(|(id, region, dirichlet)| {
                let error_sq = if kind == LocusKind::Element {
                    self.local_element_error(id, a, true)?.error_sq
                } else {
                    self.local_region_error(&region, a, dirichlet)?
                };
                Ok(LocusError { id, error_sq })
            })
            .collect()
    }

    /// Combined, gradient-only and `L^2`-only global errors together with
    /// the element gradient and pair `L^2` localizations.
    pub fn reaction_diffusion_errors(&self, a: &Coefficient, beta: f64, gauge: Gauge) -> Result<RdErrors> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("beta = {beta}")));
        }
        let combined = self.global_fit(Some(a), beta, gauge)?;
        let gradient = self.global_fit(Some(a), 0.0, gauge)?;
        let l2 = self.global_fit(None, 1.0, gauge)?;
        let element_gradient = self
            .locus_errors(LocusKind::Element, a, gauge)?
            .into_iter()
            .map(|l| l.error_sq)
            .collect();
        let tri = self.space.mesh();
        let pairs: Vec<usize> = tri.interior_edges().collect();
        let pair_l2 = pairs
            .into_par_iter()
            .map(|e| {
                let region = tri.patch_of(Locus::Edge(e))?;
                Ok((e, self.solve_region(&region, None, 1.0, false)?.error_sq))
            })
            .collect::<Result<_>>()?;
        Ok(RdErrors {
            beta,
            combined_global_sq: combined.error_sq,
            gradient_global_sq: gradient.error_sq,
            l2_global_sq: l2.error_sq,
            element_gradient,
            pair_l2,
        })
    }
}
