//! Conforming triangulations of polygonal domains.
//!
//! A [`Triangulation`] is immutable once built. Construction validates
//! conformity, normalizes every triangle to counter-clockwise orientation and
//! caches the derived topology (edges, vertex stars, boundary flags) together
//! with the element diameters `h_K`, inscribed-ball diameters `rho_K` and the
//! shape parameter `sigma = max h_K / rho_K`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// An edge with its sorted end vertices and the 1 (boundary) or 2 (interior)
/// incident triangles, in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub elements: Vec<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements.len() == 1
    }
}

/// Where a patch is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locus {
    Vertex(usize),
    Element(usize),
    Edge(usize),
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    // local edge i joins local vertices i and (i + 1) % 3
    element_edges: Vec<[usize; 3]>,
    vertex_elements: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
    areas: Vec<f64>,
    diameters: Vec<f64>,
    inball_diameters: Vec<f64>,
    sigma: f64,
    parents: Option<Vec<usize>>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Triangulation {
    /// Validates the input and derives topology and geometry.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no triangles".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidInput(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        let nv = vertices.len();
        let mut tris = triangles;
        for (k, t) in tris.iter_mut().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidInput(format!("triangle {k} references a missing vertex")));
            }
            let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let scale = dist(vertices[t[0]], vertices[t[1]])
                .max(dist(vertices[t[1]], vertices[t[2]]))
                .max(dist(vertices[t[2]], vertices[t[0]]));
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] || area.abs() <= 1e-14 * scale * scale {
                return Err(Error::DegenerateElement { element: k, area });
            }
            if area < 0.0 {
                t.swap(1, 2);
            }
        }

        let mut edge_map: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (k, t) in tris.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                edge_map.entry((a.min(b), a.max(b))).or_default().push((k, i));
            }
        }
        let mut edges = Vec::with_capacity(edge_map.len());
        let mut element_edges = vec![[usize::MAX; 3]; tris.len()];
        for (id, ((a, b), incident)) in edge_map.into_iter().enumerate() {
            if incident.len() > 2 {
                return Err(Error::NonConforming(format!(
                    "edge ({a}, {b}) has {} incident triangles",
                    incident.len()
                )));
            }
            if incident.len() == 2 {
                // counter-clockwise neighbours traverse a shared edge in opposite directions
                let (k0, i0) = incident[0];
                let (k1, i1) = incident[1];
                if tris[k0][i0] == tris[k1][i1] {
                    return Err(Error::NonConforming(format!(
                        "triangles {k0} and {k1} overlap across edge ({a}, {b})"
                    )));
                }
            }
            for &(k, i) in &incident {
                element_edges[k][i] = id;
            }
            let mut elements: Vec<usize> = incident.iter().map(|&(k, _)| k).collect();
            elements.sort_unstable();
            edges.push(Edge { vertices: [a, b], elements });
        }

        let mut vertex_elements = vec![Vec::new(); nv];
        for (k, t) in tris.iter().enumerate() {
            for &v in t {
                vertex_elements[v].push(k);
            }
        }
        let mut boundary_vertex = vec![false; nv];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            boundary_vertex[e.vertices[0]] = true;
            boundary_vertex[e.vertices[1]] = true;
        }

        // hanging vertices sit in the relative interior of a boundary edge
        for e in edges.iter().filter(|e| e.is_boundary()) {
            let (p, q) = (vertices[e.vertices[0]], vertices[e.vertices[1]]);
            let len = dist(p, q);
            for (v, x) in vertices.iter().enumerate() {
                if vertex_elements[v].is_empty() || v == e.vertices[0] || v == e.vertices[1] {
                    continue;
                }
                let cross = (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
                if cross.abs() > 1e-12 * len * len {
                    continue;
                }
                let t = ((x[0] - p[0]) * (q[0] - p[0]) + (x[1] - p[1]) * (q[1] - p[1])) / (len * len);
                if t > 1e-12 && t < 1.0 - 1e-12 {
                    return Err(Error::NonConforming(format!(
                        "vertex {v} lies inside edge ({}, {})",
                        e.vertices[0], e.vertices[1]
                    )));
                }
            }
        }

        let mut areas = Vec::with_capacity(tris.len());
        let mut diameters = Vec::with_capacity(tris.len());
        let mut inball = Vec::with_capacity(tris.len());
        for t in &tris {
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let area = signed_area(a, b, c);
            let (la, lb, lc) = (dist(b, c), dist(c, a), dist(a, b));
            let semi = 0.5 * (la + lb + lc);
            areas.push(area);
            diameters.push(la.max(lb).max(lc));
            inball.push(2.0 * area / semi);
        }
        let sigma = diameters
            .iter()
            .zip(&inball)
            .map(|(h, r)| h / r)
            .fold(0.0_f64, f64::max);

        Ok(Self {
            vertices,
            triangles: tris,
            edges,
            element_edges,
            vertex_elements,
            boundary_vertex,
            areas,
            diameters,
            inball_diameters: inball,
            sigma,
            parents: None,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, k: usize) -> [usize; 3] {
        self.triangles[k]
    }

    pub fn corners(&self, k: usize) -> [Point; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Global ids of the three edges of `k`; local edge `i` joins local
    /// vertices `i` and `i + 1`.
    pub fn element_edges(&self, k: usize) -> [usize; 3] {
        self.element_edges[k]
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| !self.edges[e].is_boundary())
    }

    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elements[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn interior_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertices.len()).filter(|&v| !self.boundary_vertex[v] && !self.vertex_elements[v].is_empty())
    }

    pub fn area(&self, k: usize) -> f64 {
        self.areas[k]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Element diameter `h_K`.
    pub fn diameter(&self, k: usize) -> f64 {
        self.diameters[k]
    }

    /// Diameter of the largest inscribed ball, twice the inradius.
    pub fn inball_diameter(&self, k: usize) -> f64 {
        self.inball_diameters[k]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    /// Shape parameter `max_K h_K / rho_K`.
    pub fn shape_parameter(&self) -> f64 {
        self.sigma
    }

    /// Child-to-parent element map when this mesh came from [`Self::uniform_refine`].
    pub fn parents(&self) -> Option<&[usize]> {
        self.parents.as_deref()
    }

    /// Elements sharing an edge with `k`, ascending.
    pub fn edge_neighbors(&self, k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.element_edges[k]
            .iter()
            .flat_map(|&e| self.edges[e].elements.iter().copied())
            .filter(|&j| j != k)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The shared edge of two elements, if any.
    pub fn shared_edge(&self, k: usize, j: usize) -> Option<usize> {
        self.element_edges[k]
            .iter()
            .copied()
            .find(|e| self.element_edges[j].contains(e))
    }

    /// `omega_z`, `omega_K` or `omega_F` as an ascending element list.
    pub fn patch_of(&self, locus: Locus) -> Result<Vec<usize>> {
        match locus {
            Locus::Vertex(v) => {
                if v >= self.vertices.len() {
                    return Err(Error::UnknownLocus(format!("vertex {v}")));
                }
                Ok(self.vertex_elements[v].clone())
            }
            Locus::Element(k) => {
                if k >= self.triangles.len() {
                    return Err(Error::UnknownLocus(format!("element {k}")));
                }
                let mut out: Vec<usize> = self.triangles[k]
                    .iter()
                    .flat_map(|&v| self.vertex_elements[v].iter().copied())
                    .collect();
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
            Locus::Edge(e) => {
                if e >= self.edges.len() {
                    return Err(Error::UnknownLocus(format!("edge {e}")));
                }
                Ok(self.edges[e].elements.clone())
            }
        }
    }

    /// Red refinement: every triangle is split into four similar children
    /// through its edge midpoints. New vertex ids follow the old ones in edge
    /// order; children of element `k` are `4k..4k+4`.
    pub fn uniform_refine(&self) -> Triangulation {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for e in &self.edges {
            let (p, q) = (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut parents = Vec::with_capacity(4 * self.triangles.len());
        for (k, t) in self.triangles.iter().enumerate() {
            let [e01, e12, e20] = self.element_edges[k];
            let (m01, m12, m20) = (nv + e01, nv + e12, nv + e20);
            triangles.push([t[0], m01, m20]);
            triangles.push([m01, t[1], m12]);
            triangles.push([m20, m12, t[2]]);
            triangles.push([m01, m12, m20]);
            parents.extend([k; 4]);
        }
        let mut fine = Triangulation::new(vertices, triangles)
            .expect("red refinement of a valid mesh is valid");
        fine.parents = Some(parents);
        fine
    }

    /// Barycentric coordinates of `x` with respect to element `k`.
    pub fn barycentric(&self, k: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.corners(k);
        let area = self.areas[k];
        let l1 = signed_area(a, x, c) / area;
        let l2 = signed_area(a, b, x) / area;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn contains(&self, k: usize, x: Point, tol: f64) -> bool {
        self.barycentric(k, x).iter().all(|&l| l >= -tol)
    }

    pub fn to_file(&self, coefficient: Option<&[f64]>) -> MeshFile {
        MeshFile {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            coefficient: coefficient.map(|c| c.to_vec()),
        }
    }
}

/// On-disk mesh layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<Vec<f64>>,
}

impl MeshFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text)?;
        if let Some(c) = &file.coefficient {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("coefficient contains a non-finite value".into()));
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }

    pub fn triangulation(&self) -> Result<Triangulation> {
        Triangulation::new(self.vertices.clone(), self.triangles.clone())
    }
}
