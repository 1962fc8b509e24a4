//! Continuous Lagrange spaces on a [`Triangulation`].
//!
//! Global node numbering: mesh vertices first (same ids), then the
//! `degree - 1` interior points of every edge (edge by edge, each walked from
//! its smaller vertex id), then the element-interior points element by element.

pub mod basis;
pub mod quadrature;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TargetField;
use crate::mesh::Triangulation;
use crate::Point;
pub use basis::{lagrange_1d, RefBasis, MAX_DEGREE};
pub use quadrature::{QuadraturePlan, SampledField};

/// Where a node sits in the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Vertex { vertex: usize },
    Edge { edge: usize, position: usize },
    Interior { element: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: Point,
    pub kind: NodeKind,
    /// Barycentric multi-index inside the first owning element.
    pub multi_index: [usize; 3],
    /// Elements containing the node, ascending.
    pub owners: Vec<usize>,
    /// Node lies on the domain boundary.
    pub boundary: bool,
}

impl Node {
    /// Node on the skeleton (union of element boundaries).
    pub fn on_skeleton(&self) -> bool {
        !matches!(self.kind, NodeKind::Interior { .. })
    }
}

/// Affine map `x = origin + jac * xi` from the reference triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub origin: Point,
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl ElementMap {
    pub fn new(corners: [Point; 3]) -> Self {
        let [a, b, c] = corners;
        let jac = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        Self { origin: a, jac, inv, det }
    }

    pub fn forward(&self, xi: Point) -> Point {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn inverse(&self, x: Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [self.inv[0][0] * d[0] + self.inv[0][1] * d[1], self.inv[1][0] * d[0] + self.inv[1][1] * d[1]]
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    pub fn push_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [self.inv[0][0] * g[0] + self.inv[1][0] * g[1], self.inv[0][1] * g[0] + self.inv[1][1] * g[1]]
    }
}

/// The space `S^{l,0}` of continuous piecewise polynomials of degree `l`.
#[derive(Debug, Clone)]
pub struct LagrangeSpace {
    mesh: Triangulation,
    degree: usize,
    nodes: Vec<Node>,
    elem_nodes: Vec<Vec<usize>>,
    dirichlet: Vec<bool>,
    maps: Vec<ElementMap>,
}

/// Builds the degree-`degree` space; with `dirichlet_on_boundary` every node
/// on the domain boundary is constrained to zero.
pub fn build_space(tri: &Triangulation, degree: usize, dirichlet_on_boundary: bool) -> Result<LagrangeSpace> {
    let reference = RefBasis::get(degree)?;
    let l = degree;
    let nv = tri.num_vertices();
    let ne = tri.num_edges();
    let per_edge = l - 1;
    let per_interior = if l >= 3 { (l - 1) * (l - 2) / 2 } else { 0 };
    let total = nv + ne * per_edge + tri.num_elements() * per_interior;

    let mut nodes: Vec<Option<Node>> = vec![None; total];
    let mut elem_nodes = Vec::with_capacity(tri.num_elements());
    let maps: Vec<ElementMap> = (0..tri.num_elements()).map(|k| ElementMap::new(tri.corners(k))).collect();

    for k in 0..tri.num_elements() {
        let t = tri.triangle(k);
        let edges = tri.element_edges(k);
        let mut ids = Vec::with_capacity(reference.len());
        let mut interior_seen = 0;
        for (n, mi) in reference.lattice().iter().enumerate() {
            let zeros = mi.iter().filter(|&&i| i == 0).count();
            let (id, kind, boundary) = if zeros == 2 {
                let local = mi.iter().position(|&i| i == l).unwrap();
                let v = t[local];
                (v, NodeKind::Vertex { vertex: v }, tri.is_boundary_vertex(v))
            } else if zeros == 1 {
                // local edge j joins local vertices j and j + 1; the walk index
                // counts steps away from local vertex j
                let j = mi.iter().position(|&i| i == 0).map(|z| (z + 1) % 3).unwrap();
                let steps = mi[(j + 1) % 3];
                let e = edges[j];
                let forward = tri.edge(e).vertices[0] == t[j];
                let position = if forward { steps - 1 } else { l - 1 - steps };
                (nv + e * per_edge + position, NodeKind::Edge { edge: e, position }, tri.edge(e).is_boundary())
            } else {
                let id = nv + ne * per_edge + k * per_interior + interior_seen;
                interior_seen += 1;
                (id, NodeKind::Interior { element: k }, false)
            };
            let slot = &mut nodes[id];
            match slot {
                Some(node) => node.owners.push(k),
                None => {
                    *slot = Some(Node {
                        x: maps[k].forward(reference.node(n)),
                        kind,
                        multi_index: *mi,
                        owners: vec![k],
                        boundary,
                    })
                }
            }
            ids.push(id);
        }
        elem_nodes.push(ids);
    }
    let nodes: Vec<Node> = nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.ok_or_else(|| Error::InvalidInput(format!("node {i} is not attached to any element"))))
        .collect::<Result<_>>()?;
    let dirichlet = nodes.iter().map(|n| dirichlet_on_boundary && n.boundary).collect();
    Ok(LagrangeSpace { mesh: tri.clone(), degree, nodes, elem_nodes, dirichlet, maps })
}

impl LagrangeSpace {
    pub fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn reference(&self) -> &'static RefBasis {
        RefBasis::get(self.degree).expect("degree validated at build")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    /// Global node ids of element `k` in local lattice order.
    pub fn element_nodes(&self, k: usize) -> &[usize] {
        &self.elem_nodes[k]
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn has_dirichlet(&self) -> bool {
        self.dirichlet.iter().any(|&d| d)
    }

    pub fn num_free(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| !d).count()
    }

    pub fn map(&self, k: usize) -> &ElementMap {
        &self.maps[k]
    }

    /// Nodes of the closed edge `e`, ordered from its first to its second vertex.
    pub fn edge_nodes(&self, e: usize) -> Vec<usize> {
        let [a, b] = self.mesh.edge(e).vertices;
        let nv = self.mesh.num_vertices();
        let mut out = vec![a];
        out.extend((0..self.degree - 1).map(|p| nv + e * (self.degree - 1) + p));
        out.push(b);
        out
    }

    /// Nodes lying in the union of `region`, ascending.
    pub fn region_nodes(&self, region: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = region.iter().flat_map(|&k| self.elem_nodes[k].iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Values and physical gradients of the local basis at an arbitrary point
    /// of element `k`, skipping the containment check.
    pub fn eval_local(&self, k: usize, x: Point, values: &mut [f64], grads: &mut [[f64; 2]]) {
        let map = &self.maps[k];
        self.reference().eval(map.inverse(x), values, grads);
        for g in grads.iter_mut() {
            *g = map.push_grad(*g);
        }
    }

    /// Evaluates `sum_i coeffs[i] phi_i` and its gradient on element `k`.
    pub fn eval_function(&self, coeffs: &[f64], k: usize, x: Point) -> (f64, [f64; 2]) {
        let n = self.reference().len();
        let mut v = vec![0.0; n];
        let mut g = vec![[0.0; 2]; n];
        self.eval_local(k, x, &mut v, &mut g);
        let mut out = (0.0, [0.0; 2]);
        for (i, &id) in self.elem_nodes[k].iter().enumerate() {
            out.0 += coeffs[id] * v[i];
            out.1[0] += coeffs[id] * g[i][0];
            out.1[1] += coeffs[id] * g[i][1];
        }
        out
    }

    /// Nodal interpolant of a pointwise function.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|n| f(n.x)).collect()
    }

    /// Local mass matrix `int_K phi_i phi_j`.
    pub fn local_mass(&self, k: usize) -> DMatrix<f64> {
        self.reference().reference_mass() * self.maps[k].det.abs()
    }

    /// Local stiffness matrix `int_K grad phi_i . grad phi_j`.
    pub fn local_stiffness(&self, k: usize) -> DMatrix<f64> {
        let reference = self.reference();
        let map = &self.maps[k];
        let n = reference.len();
        let mut s = DMatrix::zeros(n, n);
        for (q, &(_, w)) in reference.rule().iter().enumerate() {
            let g: Vec<[f64; 2]> = reference.rule_grads(q).iter().map(|&g| map.push_grad(g)).collect();
            let w = w * map.det.abs();
            for i in 0..n {
                for j in 0..n {
                    s[(i, j)] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        s
    }
}

/// Values and gradients of all local nodal basis functions of element `k` at `x`.
pub fn eval_basis(space: &LagrangeSpace, k: usize, x: Point) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    if k >= space.mesh.num_elements() {
        return Err(Error::UnknownLocus(format!("element {k}")));
    }
    if !space.mesh.contains(k, x, 1e-10) {
        return Err(Error::PointOutsideElement { element: k, x: x[0], y: x[1] });
    }
    let n = space.reference().len();
    let mut v = vec![0.0; n];
    let mut g = vec![[0.0; 2]; n];
    space.eval_local(k, x, &mut v, &mut g);
    Ok((v, g))
}

/// Coefficients `C` with `psi_z = sum_y C[(z, y)] phi_y`, biorthogonal to the
/// nodal basis of element `k` in `L^2(K)`.
pub fn element_dual_basis(space: &LagrangeSpace, k: usize) -> Result<DMatrix<f64>> {
    space
        .local_mass(k)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularMassMatrix(k))
}

/// Dual basis on an edge, biorthogonal in `L^2(F)` to the traces of the nodal
/// basis functions attached to the edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDual {
    pub edge: usize,
    /// Global node ids along the edge from its first to its second vertex.
    pub nodes: Vec<usize>,
    pub endpoints: [Point; 2],
    pub length: f64,
    /// `psi_i = sum_j coeffs[(i, j)] phi_j|_F`.
    pub coeffs: DMatrix<f64>,
}

impl FaceDual {
    /// Values of all dual functions at edge parameter `t in [0, 1]`.
    pub fn values_at(&self, t: f64) -> Vec<f64> {
        let phi = lagrange_1d(self.nodes.len() - 1, t);
        (0..self.nodes.len())
            .map(|i| (0..self.nodes.len()).map(|j| self.coeffs[(i, j)] * phi[j]).sum())
            .collect()
    }

    /// Edge parameter of a point on the edge.
    pub fn parameter(&self, x: Point) -> f64 {
        let [p, q] = self.endpoints;
        let d = [q[0] - p[0], q[1] - p[1]];
        ((x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1]) / (self.length * self.length)
    }

    /// Position of a global node in [`Self::nodes`].
    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }
}

pub fn face_dual_basis(space: &LagrangeSpace, e: usize) -> Result<FaceDual> {
    let tri = space.mesh();
    if e >= tri.num_edges() {
        return Err(Error::UnknownLocus(format!("edge {e}")));
    }
    let l = space.degree();
    let length = tri.edge_length(e);
    let gl = quadrature::gauss_legendre(l + 1);
    let mut mass = DMatrix::zeros(l + 1, l + 1);
    for (t, w) in gl.0.iter().zip(&gl.1) {
        let phi = lagrange_1d(l, *t);
        for i in 0..=l {
            for j in 0..=l {
                mass[(i, j)] += length * w * phi[i] * phi[j];
            }
        }
    }
    let coeffs = mass
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidInput(format!("degenerate edge {e}")))?;
    let [a, b] = tri.edge(e).vertices;
    Ok(FaceDual { edge: e, nodes: space.edge_nodes(e), endpoints: [tri.vertex(a), tri.vertex(b)], length, coeffs })
}

/// A finite element function viewed as a target.
pub struct FeFunction<'a> {
    pub space: &'a LagrangeSpace,
    pub coeffs: &'a [f64],
}

impl TargetField for FeFunction<'_> {
    fn eval(&self, element: usize, x: Point) -> (f64, [f64; 2]) {
        self.space.eval_function(self.coeffs, element, x)
    }
}
