//! Piecewise-constant coefficients and quasi-monotonicity.
//!
//! Inside the star of a node, the monotone graph has an arc `K -> K'` when the
//! two elements share an edge and `a_K <= a_K'`. The field is quasi-monotone
//! when, for every node and every ordered pair `(K, K~)` in its star with
//! `a_K <= a_K~`, the graph has a path from `K` to `K~`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::{LagrangeSpace, NodeKind};
use crate::mesh::Triangulation;

/// One positive value per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    values: Vec<f64>,
    alpha: f64,
}

/// Validates `values` against `tri` and caches the contrast.
pub fn attach_coefficient(tri: &Triangulation, values: Vec<f64>) -> Result<Coefficient> {
    if values.len() != tri.num_elements() {
        return Err(Error::InvalidInput(format!(
            "{} coefficient values for {} elements",
            values.len(),
            tri.num_elements()
        )));
    }
    Coefficient::new(values)
}

impl Coefficient {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty coefficient".into()));
        }
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::NonPositiveValue { element: k, value: v });
            }
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(0.0, f64::max);
        Ok(Self { alpha: min / max, values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Contrast `min a / max a`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }

    /// Transfers the field to a mesh produced by uniform refinement.
    pub fn refined(&self, fine: &Triangulation) -> Result<Self> {
        let parents = fine
            .parents()
            .ok_or_else(|| Error::InvalidInput("mesh carries no parent map".into()))?;
        Self::new(parents.iter().map(|&p| self.values[p]).collect())
    }
}

/// A chain of edge-adjacent elements with non-decreasing coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonePath {
    pub elements: Vec<usize>,
    /// `faces[n]` is the edge shared by `elements[n]` and `elements[n + 1]`.
    pub faces: Vec<usize>,
}

/// Verdict for a single node star.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVerdict {
    pub node: usize,
    pub star: Vec<usize>,
    pub quasi_monotone: bool,
    /// Every ordered pair `(K, K~)` with `a_K <= a_K~` and no monotone path.
    pub failures: Vec<(usize, usize)>,
}

impl NodeVerdict {
    pub fn witness(&self) -> Option<(usize, usize)> {
        self.failures.first().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmReport {
    pub quasi_monotone: bool,
    pub nodes: Vec<NodeVerdict>,
}

impl QmReport {
    /// First failing node and its first witness pair.
    pub fn witness(&self) -> Option<(usize, usize, usize)> {
        self.nodes
            .iter()
            .find_map(|v| v.witness().map(|(k, j)| (v.node, k, j)))
    }
}

/// Arcs of the monotone graph restricted to `star`: `(K, K')` with a shared
/// edge and `a_K <= a_K'`, neighbours ascending.
fn monotone_arcs(tri: &Triangulation, a: &Coefficient, star: &[usize], from: usize) -> Vec<usize> {
    tri.edge_neighbors(from)
        .into_iter()
        .filter(|j| star.binary_search(j).is_ok() && a.value(from) <= a.value(*j))
        .collect()
}

/// Shortest monotone path inside `star` (ascending element ids), ties broken
/// by the lexicographically smallest id sequence.
pub fn find_monotone_path_in(
    tri: &Triangulation,
    a: &Coefficient,
    node: usize,
    star: &[usize],
    from: usize,
    to: usize,
) -> Result<Option<MonotonePath>> {
    if star.binary_search(&from).is_err() || star.binary_search(&to).is_err() {
        return Err(Error::LocusMismatch { node, from, to });
    }
    // breadth-first search visiting neighbours in ascending order; the first
    // discovery of an element is then via the lexicographically smallest
    // shortest path
    let mut parent = vec![usize::MAX; star.len()];
    let idx = |k: usize| star.binary_search(&k).unwrap();
    let mut seen = vec![false; star.len()];
    seen[idx(from)] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(k) = queue.pop_front() {
        if k == to {
            break;
        }
        for j in monotone_arcs(tri, a, star, k) {
            let i = idx(j);
            if !seen[i] {
                seen[i] = true;
                parent[i] = k;
                queue.push_back(j);
            }
        }
    }
    if !seen[idx(to)] {
        return Ok(None);
    }
    let mut elements = vec![to];
    while *elements.last().unwrap() != from {
        elements.push(parent[idx(*elements.last().unwrap())]);
    }
    elements.reverse();
    let faces = elements
        .windows(2)
        .map(|w| tri.shared_edge(w[0], w[1]).expect("path steps share an edge"))
        .collect();
    Ok(Some(MonotonePath { elements, faces }))
}

/// Monotone path inside the star of mesh vertex `z`.
pub fn find_monotone_path(
    tri: &Triangulation,
    a: &Coefficient,
    z: usize,
    from: usize,
    to: usize,
) -> Result<Option<MonotonePath>> {
    if z >= tri.num_vertices() {
        return Err(Error::UnknownLocus(format!("vertex {z}")));
    }
    find_monotone_path_in(tri, a, z, tri.vertex_elements(z), from, to)
}

fn reachable(tri: &Triangulation, a: &Coefficient, star: &[usize], from: usize) -> Vec<bool> {
    let idx = |k: usize| star.binary_search(&k).unwrap();
    let mut seen = vec![false; star.len()];
    seen[idx(from)] = true;
    let mut stack = vec![from];
    while let Some(k) = stack.pop() {
        for j in monotone_arcs(tri, a, star, k) {
            if !seen[idx(j)] {
                seen[idx(j)] = true;
                stack.push(j);
            }
        }
    }
    seen
}

fn check_star(tri: &Triangulation, a: &Coefficient, node: usize, star: &[usize]) -> NodeVerdict {
    let mut failures = Vec::new();
    for &k in star {
        let seen = reachable(tri, a, star, k);
        for (i, &j) in star.iter().enumerate() {
            if j != k && a.value(k) <= a.value(j) && !seen[i] {
                failures.push((k, j));
            }
        }
    }
    NodeVerdict { node, star: star.to_vec(), quasi_monotone: failures.is_empty(), failures }
}

fn assemble(nodes: Vec<NodeVerdict>) -> QmReport {
    QmReport { quasi_monotone: nodes.iter().all(|v| v.quasi_monotone), nodes }
}

/// Checks every vertex star of the mesh (the node set of the degree-1 space).
pub fn check_quasi_monotonicity(tri: &Triangulation, a: &Coefficient) -> QmReport {
    let nodes = (0..tri.num_vertices())
        .into_par_iter()
        .map(|z| check_star(tri, a, z, tri.vertex_elements(z)))
        .collect();
    assemble(nodes)
}

/// Checks the star of every node of `space`.
pub fn check_quasi_monotonicity_nodes(space: &LagrangeSpace, a: &Coefficient) -> QmReport {
    let tri = space.mesh();
    let nodes = (0..space.num_nodes())
        .into_par_iter()
        .map(|z| check_star(tri, a, z, &space.node(z).owners))
        .collect();
    assemble(nodes)
}

/// Element of `star` with the largest coefficient, smallest id on ties.
pub fn select_kmax(a: &Coefficient, star: &[usize]) -> usize {
    let mut best = star[0];
    for &k in star {
        if a.value(k) > a.value(best) || (a.value(k) == a.value(best) && k < best) {
            best = k;
        }
    }
    best
}

/// `K_max(z)` over the elements owning node `z`.
pub fn select_kmax_node(space: &LagrangeSpace, a: &Coefficient, z: usize) -> usize {
    select_kmax(a, &space.node(z).owners)
}

/// Edge of `K_max(z)` that contains the skeleton node `z`, smallest id on
/// ties; `None` for element-interior nodes.
pub fn select_fz(space: &LagrangeSpace, a: &Coefficient, z: usize) -> Option<usize> {
    let tri = space.mesh();
    match space.node(z).kind {
        NodeKind::Interior { .. } => None,
        NodeKind::Edge { edge, .. } => Some(edge),
        NodeKind::Vertex { vertex } => {
            let kmax = select_kmax_node(space, a, z);
            tri.element_edges(kmax)
                .into_iter()
                .filter(|&e| tri.edge(e).vertices.contains(&vertex))
                .min()
        }
    }
}

/// Union of the selected monotone paths from `k` to `K_max(z)` over all nodes
/// `z` of `k`.
pub fn build_omega_hat(space: &LagrangeSpace, a: &Coefficient, k: usize) -> Result<Vec<usize>> {
    let tri = space.mesh();
    if k >= tri.num_elements() {
        return Err(Error::UnknownLocus(format!("element {k}")));
    }
    let mut out = vec![k];
    for &z in space.element_nodes(k) {
        let star = &space.node(z).owners;
        let kmax = select_kmax(a, star);
        let path = find_monotone_path_in(tri, a, z, star, k, kmax)?
            .ok_or(Error::NoMonotonePath { node: z, from: k, to: kmax })?;
        out.extend(path.elements);
    }
    out.sort_unstable();
    out.dedup();
    debug_assert!(is_connected(tri, &out));
    Ok(out)
}

/// Edge-connectivity of an element set.
pub fn is_connected(tri: &Triangulation, set: &[usize]) -> bool {
    if set.is_empty() {
        return true;
    }
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    let mut seen = vec![false; sorted.len()];
    seen[0] = true;
    let mut stack = vec![sorted[0]];
    while let Some(k) = stack.pop() {
        for j in tri.edge_neighbors(k) {
            if let Ok(i) = sorted.binary_search(&j) {
                if !seen[i] {
                    seen[i] = true;
                    stack.push(j);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Exhaustive search over simple monotone paths; exponential, test oracle only.
pub fn brute_force_monotone_reachable(
    tri: &Triangulation,
    a: &Coefficient,
    star: &[usize],
    from: usize,
    to: usize,
) -> bool {
    fn dfs(tri: &Triangulation, a: &Coefficient, star: &[usize], path: &mut Vec<usize>, to: usize) -> bool {
        let k = *path.last().unwrap();
        if k == to {
            return true;
        }
        for &j in star {
            if path.contains(&j) || a.value(k) > a.value(j) || tri.shared_edge(k, j).is_none() {
                continue;
            }
            path.push(j);
            if dfs(tri, a, star, path, to) {
                return true;
            }
            path.pop();
        }
        false
    }
    dfs(tri, a, star, &mut vec![from], to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::build_space;

    fn hexagon(eps: f64) -> (Triangulation, Coefficient) {
        let t = Triangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0]],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 1]],
        )
        .unwrap();
        let e2 = eps * eps;
        let a = attach_coefficient(&t, vec![1.0, e2, e2, 1.0, e2, e2]).unwrap();
        (t, a)
    }

    #[test]
    fn alpha_and_validation() {
        let (_, a) = hexagon(0.1);
        assert!((a.alpha() - 0.01).abs() < 1e-15);
        assert!(matches!(Coefficient::new(vec![1.0, -1.0]), Err(Error::NonPositiveValue { element: 1, .. })));
        assert!(matches!(Coefficient::new(vec![1.0, 0.0]), Err(Error::NonPositiveValue { .. })));
    }

    #[test]
    fn hexagon_paths() {
        let (t, a) = hexagon(0.1);
        let p = find_monotone_path(&t, &a, 0, 1, 0).unwrap().unwrap();
        assert_eq!(p.elements, vec![1, 0]);
        assert_eq!(p.faces.len(), 1);
        assert!(find_monotone_path(&t, &a, 0, 1, 4).unwrap().is_none());
        assert_eq!(find_monotone_path(&t, &a, 0, 2, 2).unwrap().unwrap().elements, vec![2]);
        assert!(matches!(find_monotone_path(&t, &a, 1, 3, 0), Err(Error::LocusMismatch { .. })));
    }

    #[test]
    fn hexagon_not_qm_with_k2_k5_witness() {
        let (t, a) = hexagon(0.1);
        let r = check_quasi_monotonicity(&t, &a);
        assert!(!r.quasi_monotone);
        let origin = &r.nodes[0];
        assert!(origin.failures.contains(&(1, 4)));
        let (t, a) = hexagon(1.0);
        assert!(check_quasi_monotonicity(&t, &a).quasi_monotone);
    }

    #[test]
    fn kmax_and_omega_hat_on_hexagon() {
        let (t, a) = hexagon(0.1);
        let s = build_space(&t, 1, false).unwrap();
        assert_eq!(select_kmax_node(&s, &a, 0), 0);
        let fz = select_fz(&s, &a, 0).unwrap();
        assert!(t.edge(fz).vertices.contains(&0));
        assert_eq!(build_omega_hat(&s, &a, 1).unwrap(), vec![0, 1]);
        assert!(matches!(
            build_omega_hat(&s, &a, 3),
            Err(Error::NoMonotonePath { node: 0, from: 3, to: 0 })
        ));
    }

    #[test]
    fn constant_field_picks_smallest_id() {
        let (t, _) = hexagon(0.1);
        let a = Coefficient::constant(6, 2.5).unwrap();
        assert_eq!(select_kmax(&a, t.vertex_elements(0)), 0);
        let s = build_space(&t, 2, false).unwrap();
        assert!(check_quasi_monotonicity_nodes(&s, &a).quasi_monotone);
        for k in 0..6 {
            let w = build_omega_hat(&s, &a, k).unwrap();
            let patch = t.patch_of(crate::mesh::Locus::Element(k)).unwrap();
            assert!(w.iter().all(|j| patch.contains(j)));
            assert!(is_connected(&t, &w));
        }
    }
}
