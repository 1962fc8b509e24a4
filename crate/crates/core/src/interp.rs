//! The two quasi-interpolation operators.
//!
//! `Pi`: element-interior nodes take the value of the mean-matched local
//! best fit `P_K`; skeleton nodes take the face moment
//! `int_{F_z} u psi_z^{F_z}` on an edge `F_z` of `K_max(z)`.
//!
//! `Pi~`: every node takes the element moment
//! `int_{K_max(z)} u psi_z^{K_max(z)}`.
//!
//! Under a Dirichlet mask both operators set boundary nodes to zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bestapprox::Projector;
use crate::coeff::{build_omega_hat, check_quasi_monotonicity_nodes, select_fz, select_kmax_node, Coefficient};
use crate::error::{Error, Result};
use crate::fespace::quadrature::edge_rule;
use crate::fespace::{element_dual_basis, face_dual_basis, NodeKind};
use crate::field::TargetField;
use crate::mesh::Locus;

/// Grading levels for face moments of singular targets.
const EDGE_LEVELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    InteriorBestFit { element: usize },
    FaceDual { edge: usize },
    ElementDual { element: usize },
    BoundaryZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    /// Face-dual / best-fit operator.
    Pi,
    /// Element-dual operator.
    PiTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolantResult {
    pub operator: Operator,
    pub coefficients: Vec<f64>,
    pub provenance: Vec<Provenance>,
    /// `K_max(z)` per node.
    pub kmax: Vec<usize>,
    /// `F_z` per node (absent for element-interior nodes).
    pub fz: Vec<Option<usize>>,
}

fn selections(proj: &Projector, a: &Coefficient) -> (Vec<usize>, Vec<Option<usize>>) {
    let space = proj.space();
    let kmax = (0..space.num_nodes()).map(|z| select_kmax_node(space, a, z)).collect();
    let fz = (0..space.num_nodes()).map(|z| select_fz(space, a, z)).collect();
    (kmax, fz)
}

/// Applies `Pi` to the target sampled by `proj`; `target` supplies the face
/// moments.
pub fn quasi_interpolate<T: TargetField + ?Sized>(proj: &Projector, target: &T, a: &Coefficient) -> Result<InterpolantResult> {
    let space = proj.space();
    let (kmax, fz) = selections(proj, a);
    let values: Vec<(f64, Provenance)> = (0..space.num_nodes())
        .into_par_iter()
        .map(|z| {
            if space.dirichlet()[z] {
                return Ok((0.0, Provenance::BoundaryZero));
            }
            match space.node(z).kind {
                NodeKind::Interior { element } => {
                    let fit = proj.local_element_error(element, a, true)?;
                    let local = space.element_nodes(element).iter().position(|&id| id == z).unwrap();
                    Ok((fit.local_values[local], Provenance::InteriorBestFit { element }))
                }
                _ => {
                    let edge = fz[z].expect("skeleton node has a face");
                    let dual = face_dual_basis(space, edge)?;
                    let i = dual.local_index(z).expect("node lies on its face");
                    let [p, q] = dual.endpoints;
                    let mut moment = 0.0;
                    for (x, w) in edge_rule(p, q, target.singular_points(), EDGE_LEVELS) {
                        let psi = dual.values_at(dual.parameter(x));
                        moment += w * target.eval(kmax[z], x).0 * psi[i];
                    }
                    if !moment.is_finite() {
                        return Err(Error::QuadratureFailure { element: kmax[z], reason: format!("face moment on edge {edge}") });
                    }
                    Ok((moment, Provenance::FaceDual { edge }))
                }
            }
        })
        .collect::<Result<_>>()?;
    let (coefficients, provenance) = values.into_iter().unzip();
    Ok(InterpolantResult { operator: Operator::Pi, coefficients, provenance, kmax, fz })
}

/// Applies `Pi~` using the element moments cached in `proj`.
pub fn l2_quasi_interpolate(proj: &Projector, a: &Coefficient) -> Result<InterpolantResult> {
    let space = proj.space();
    let (kmax, fz) = selections(proj, a);
    let mut duals = std::collections::BTreeMap::new();
    for &k in &kmax {
        if let std::collections::btree_map::Entry::Vacant(e) = duals.entry(k) {
            e.insert(element_dual_basis(space, k)?);
        }
    }
    let mut coefficients = Vec::with_capacity(space.num_nodes());
    let mut provenance = Vec::with_capacity(space.num_nodes());
    for z in 0..space.num_nodes() {
        if space.dirichlet()[z] {
            coefficients.push(0.0);
            provenance.push(Provenance::BoundaryZero);
            continue;
        }
        let k = kmax[z];
        let local = space.element_nodes(k).iter().position(|&id| id == z).unwrap();
        let c = &duals[&k];
        let m = proj.value_moments(k);
        coefficients.push((0..m.len()).map(|y| c[(local, y)] * m[y]).sum());
        provenance.push(Provenance::ElementDual { element: k });
    }
    Ok(InterpolantResult { operator: Operator::PiTilde, coefficients, provenance, kmax, fz })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementNearBest {
    pub element: usize,
    /// `a_K ||grad(u - I u)||_K^2`.
    pub error_sq: f64,
    /// Sum of the element best errors over `omega_K`.
    pub patch_local_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub operator: Operator,
    /// `||a^{1/2} grad(u - I u)||^2`.
    pub error_sq: f64,
    /// `sum_K a_K inf_P ||grad(u - P)||_K^2`.
    pub local_sum_sq: f64,
    /// `error_sq / local_sum_sq`, zero when both vanish.
    pub near_best_ratio: Option<f64>,
    pub elements: Vec<ElementNearBest>,
    /// `||I u|| / ||u||` in `L^2`.
    pub l2_stability: Option<f64>,
    /// `||a^{1/2} grad I u|| / ||a^{1/2} grad u||`.
    pub energy_stability: Option<f64>,
    /// `|omega^_K|` per element when the energy diagnostic ran.
    pub omega_hat_sizes: Option<Vec<usize>>,
}

fn guarded_ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Near-best and stability record for an interpolant. The energy-stability
/// diagnostic is refused unless the coefficient is quasi-monotone on all
/// nodes of the space.
pub fn operator_report(
    proj: &Projector,
    a: &Coefficient,
    result: &InterpolantResult,
    energy_diagnostic: bool,
) -> Result<OperatorReport> {
    let space = proj.space();
    let tri = space.mesh();
    let ne = tri.num_elements();
    let coeffs = &result.coefficients;
    let per_element: Vec<(f64, f64)> = (0..ne)
        .into_par_iter()
        .map(|k| {
            let err = proj.region_error(&[k], Some(a), 0.0, |id| coeffs[id]);
            let local = proj.local_element_error(k, a, true)?.error_sq;
            Ok((err, local))
        })
        .collect::<Result<_>>()?;
    let mut elements = Vec::with_capacity(ne);
    for k in 0..ne {
        let patch = tri.patch_of(Locus::Element(k))?;
        elements.push(ElementNearBest {
            element: k,
            error_sq: per_element[k].0,
            patch_local_sq: patch.iter().map(|&j| per_element[j].1).sum(),
        });
    }
    let error_sq: f64 = per_element.iter().map(|p| p.0).sum();
    let local_sum_sq: f64 = per_element.iter().map(|p| p.1).sum();

    let all: Vec<usize> = (0..ne).collect();
    let mut l2_stability = None;
    let mut energy_stability = None;
    let mut omega_hat_sizes = None;
    if result.operator == Operator::PiTilde {
        let mut fe_l2 = 0.0;
        for k in 0..ne {
            let ids = space.element_nodes(k);
            let m = space.local_mass(k);
            for i in 0..ids.len() {
                for j in 0..ids.len() {
                    fe_l2 += coeffs[ids[i]] * m[(i, j)] * coeffs[ids[j]];
                }
            }
        }
        let u_l2 = proj.region_error(&all, None, 1.0, |_| 0.0);
        l2_stability = guarded_ratio(fe_l2.sqrt(), u_l2.sqrt());
    }
    if energy_diagnostic {
        let qm = check_quasi_monotonicity_nodes(space, a);
        if let Some((node, from, to)) = qm.witness() {
            return Err(Error::NoMonotonePath { node, from, to });
        }
        omega_hat_sizes = Some((0..ne).map(|k| build_omega_hat(space, a, k).map(|w| w.len())).collect::<Result<_>>()?);
        let mut fe_energy = 0.0;
        for k in 0..ne {
            let ids = space.element_nodes(k);
            let s = space.local_stiffness(k);
            for i in 0..ids.len() {
                for j in 0..ids.len() {
                    fe_energy += a.value(k) * coeffs[ids[i]] * s[(i, j)] * coeffs[ids[j]];
                }
            }
        }
        let u_energy = proj.region_error(&all, Some(a), 0.0, |_| 0.0);
        energy_stability = guarded_ratio(fe_energy.max(0.0).sqrt(), u_energy.sqrt());
    }
    Ok(OperatorReport {
        operator: result.operator,
        error_sq,
        local_sum_sq,
        near_best_ratio: guarded_ratio(error_sq, local_sum_sq),
        elements,
        l2_stability,
        energy_stability,
        omega_hat_sizes,
    })
}

impl OperatorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
