//! Meshes, coefficients and targets for the non-robustness examples and the
//! small quasi-monotonicity demonstrations.
//!
//! The hexagon `{-1 <= x, y <= 1, -1 <= x + y <= 1}` is split into six
//! triangles around the origin; `K_1` (first quadrant) and `K_4` (third
//! quadrant) carry `a = 1`, the other four `a = eps^2`. The target `u_eps`
//! is built from the radial profile `rho_eps`, the affine `w = 1 - x - y`
//! and the explicit correction `u~` on `K_1` outside `B(0, eps)`, and is
//! extended to `K_4, K_5, K_6` by `u(x) = -u(-x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coeff::{attach_coefficient, Coefficient};
use crate::error::{Error, Result};
use crate::field::{SingularPoint, TargetField};
use crate::mesh::Triangulation;
use crate::Point;

pub const MIN_EPS: f64 = 1e-3;
pub const MAX_EPS: f64 = 0.5;

/// Which formula of the hexagon target applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    K1,
    K2,
    K3,
    K4,
    K5,
    K6,
    /// Outside the hexagon (corner triangles of a macro square).
    Zero,
}

impl Piece {
    pub const HEXAGON: [Piece; 6] = [Piece::K1, Piece::K2, Piece::K3, Piece::K4, Piece::K5, Piece::K6];

    /// Piece containing an interior point (e.g. an element centroid) of the
    /// square `[-1, 1]^2`.
    pub fn at(p: Point) -> Piece {
        let [x, y] = p;
        if (x + y).abs() > 1.0 {
            Piece::Zero
        } else if x >= 0.0 && y >= 0.0 {
            Piece::K1
        } else if x <= 0.0 && y <= 0.0 {
            Piece::K4
        } else if x < 0.0 {
            if x + y >= 0.0 {
                Piece::K2
            } else {
                Piece::K3
            }
        } else if x + y <= 0.0 {
            Piece::K5
        } else {
            Piece::K6
        }
    }
}

/// The radial profile: `(1-eps)(r/eps)^eps` below `eps`, `1 - r` up to 1,
/// zero beyond. Returns value and derivative.
pub fn rho(eps: f64, r: f64) -> (f64, f64) {
    if r < eps {
        if r <= 0.0 {
            return (0.0, f64::INFINITY);
        }
        let v = (1.0 - eps) * (r / eps).powf(eps);
        (v, eps * v / r)
    } else if r <= 1.0 {
        (1.0 - r, -1.0)
    } else {
        (0.0, 0.0)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(MIN_EPS..=MAX_EPS).contains(&eps) {
        return Err(Error::ParameterOutOfRange(format!(
            "eps = {eps} outside [{MIN_EPS}, {MAX_EPS}]"
        )));
    }
    Ok(())
}

/// Six-element hexagon mesh with `a = 1` on `K_1, K_4` and `eps^2` elsewhere.
pub fn hexagon_mesh(eps: f64) -> Result<(Triangulation, Coefficient)> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("eps = {eps} outside (0, 1]")));
    }
    let tri = Triangulation::new(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0]],
        vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 1]],
    )?;
    let e2 = eps * eps;
    let a = attach_coefficient(&tri, vec![1.0, e2, e2, 1.0, e2, e2])?;
    Ok((tri, a))
}

/// `u_eps` on the hexagon.
#[derive(Debug, Clone)]
pub struct HexagonTarget {
    eps: f64,
    pieces: Vec<Piece>,
    singular: Vec<SingularPoint>,
}

/// `u_eps` tagged for the six-element hexagon mesh.
pub fn hexagon_target(eps: f64) -> Result<HexagonTarget> {
    check_eps(eps)?;
    Ok(HexagonTarget {
        eps,
        pieces: Piece::HEXAGON.to_vec(),
        singular: vec![SingularPoint { center: [0.0, 0.0], exponent: eps, breakpoints: vec![eps, 1.0] }],
    })
}

impl HexagonTarget {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Retags the target for any mesh subordinate to the six pieces (for
    /// example a uniform refinement of the hexagon mesh).
    pub fn for_mesh(mut self, tri: &Triangulation) -> Self {
        self.pieces = (0..tri.num_elements()).map(|k| Piece::at(centroid(tri, k))).collect();
        self
    }

    /// Point of antisymmetry `u(c + d) = -u(c - d)`.
    pub fn antisymmetry_center(&self) -> Point {
        [0.0, 0.0]
    }

    /// Value and gradient of the formula for `piece` at `x`.
    pub fn eval_piece(&self, piece: Piece, x: Point) -> (f64, [f64; 2]) {
        let neg = |(v, g): (f64, [f64; 2])| (-v, g);
        let m = [-x[0], -x[1]];
        match piece {
            Piece::K1 => self.first_quadrant(x),
            Piece::K2 | Piece::K3 => self.second_quadrant(x),
            Piece::K4 => neg(self.first_quadrant(m)),
            Piece::K5 | Piece::K6 => neg(self.second_quadrant(m)),
            Piece::Zero => (0.0, [0.0; 2]),
        }
    }

    fn second_quadrant(&self, x: Point) -> (f64, [f64; 2]) {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return (0.0, [0.0; 2]);
        }
        let mut theta = x[1].atan2(x[0]);
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        let (p, dp) = rho(self.eps, r);
        let ang = 3.0 - 4.0 * theta / PI;
        let (er, et) = ([x[0] / r, x[1] / r], [-x[1] / r, x[0] / r]);
        let gr = dp * ang;
        let gt = -4.0 / PI * p / r;
        (p * ang, [gr * er[0] + gt * et[0], gr * er[1] + gt * et[1]])
    }

    fn first_quadrant(&self, x: Point) -> (f64, [f64; 2]) {
        let eps = self.eps;
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return (0.0, [0.0; 2]);
        }
        if r < eps {
            let (p, dp) = rho(eps, r);
            return (p, [dp * x[0] / r, dp * x[1] / r]);
        }
        let theta = x[1].atan2(x[0]);
        let (sn, cs) = theta.sin_cos();
        let s = cs + sn;
        let ds = cs - sn;
        let w = 1.0 - x[0] - x[1];
        let denom = 1.0 - eps * s;
        // u~ = G(theta) w with G = (s - 1) / (1 - eps s)
        let big_g = (s - 1.0) / denom;
        let dg = (1.0 - eps) * ds / (denom * denom);
        let r2 = r * r;
        let grad_t = [w * dg * (-x[1]) / r2 - big_g, w * dg * x[0] / r2 - big_g];
        (w + eps * big_g * w, [-1.0 + eps * grad_t[0], -1.0 + eps * grad_t[1]])
    }
}

impl TargetField for HexagonTarget {
    fn eval(&self, element: usize, x: Point) -> (f64, [f64; 2]) {
        self.eval_piece(self.pieces[element], x)
    }

    fn singular_points(&self) -> &[SingularPoint] {
        &self.singular
    }
}

/// Closed-form reference values for the hexagon target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReference {
    pub eps: f64,
    /// `||grad rho_eps||^2` over the full disk `B(0, eps)`.
    pub ball_energy: f64,
    /// `int_0^1 rho_eps^2 / r dr`.
    pub rho_sq_over_r: f64,
    /// Upper bound `1/(2 eps) - ln eps` for the previous integral.
    pub rho_sq_over_r_bound: f64,
    /// `||a^{1/2} grad u_eps||^2` over `K_2 u K_3`.
    pub gray_energy: f64,
}

pub fn analytic_energy_reference(eps: f64) -> AnalyticReference {
    let e = eps;
    let i2 = (1.0 - e).powi(2) / (2.0 * e) - 1.5 - e.ln() + 2.0 * e - 0.5 * e * e;
    let radial = (1.0 - e).powi(2) * e / 2.0 + (1.0 - e * e) / 2.0;
    AnalyticReference {
        eps,
        ball_energy: PI * e * (1.0 - e).powi(2),
        rho_sq_over_r: i2,
        rho_sq_over_r_bound: 1.0 / (2.0 * e) - e.ln(),
        gray_energy: e * e * (PI / 6.0 * radial + 8.0 / PI * i2),
    }
}

fn centroid(tri: &Triangulation, k: usize) -> Point {
    let c = tri.corners(k);
    [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
}

/// Which of the two square configurations of the demonstration figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fig1Layout {
    /// Values `M, 3M/4, M/2, 1` on top, left, bottom, right.
    Left,
    /// Values `M, 1, M, 1` on top, left, bottom, right.
    Right,
}

/// `[-1, 1]^2` cut by both diagonals into top, left, bottom and right
/// triangles (element ids 0..4 in that order), refined `refinements` times.
pub fn diagonal_square(refinements: usize) -> Result<Triangulation> {
    let mut tri = Triangulation::new(
        vec![[0.0, 0.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]],
        vec![[0, 2, 3], [0, 3, 4], [0, 4, 1], [0, 1, 2]],
    )?;
    for _ in 0..refinements {
        tri = tri.uniform_refine();
    }
    Ok(tri)
}

/// Quarter (top 0, left 1, bottom 2, right 3) of every element of a refined
/// diagonal square.
pub fn diagonal_quarters(tri: &Triangulation) -> Vec<usize> {
    (0..tri.num_elements())
        .map(|k| {
            let [x, y] = centroid(tri, k);
            if y >= x.abs() {
                0
            } else if -x >= y.abs() {
                1
            } else if -y >= x.abs() {
                2
            } else {
                3
            }
        })
        .collect()
}

fn quarter_coefficient(tri: &Triangulation, values: [f64; 4]) -> Result<Coefficient> {
    attach_coefficient(tri, diagonal_quarters(tri).into_iter().map(|q| values[q]).collect())
}

/// The figure configurations with parameter `M`.
pub fn fig1_meshes(layout: Fig1Layout, m: f64, refinements: usize) -> Result<(Triangulation, Coefficient)> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("M = {m}")));
    }
    let tri = diagonal_square(refinements)?;
    let values = match layout {
        Fig1Layout::Left => [m, 0.75 * m, 0.5 * m, 1.0],
        Fig1Layout::Right => [m, 1.0, m, 1.0],
    };
    let a = quarter_coefficient(&tri, values)?;
    Ok((tri, a))
}

/// Quasi-monotone family with contrast exactly `alpha`: values
/// `1, alpha^{1/3}, alpha^{2/3}, alpha` on top, left, bottom, right. The
/// values decrease from the top in both directions around the centre, so
/// every star is quasi-monotone, and `alpha = 1` is the constant field.
pub fn fig1_left_alpha(alpha: f64, refinements: usize) -> Result<(Triangulation, Coefficient)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("alpha = {alpha} outside (0, 1]")));
    }
    let tri = diagonal_square(refinements)?;
    let a = quarter_coefficient(&tri, [1.0, alpha.cbrt(), alpha.cbrt().powi(2), alpha])?;
    Ok((tri, a))
}

/// `[0,1]^2` as `2N x 2N` squares of side `1/(2N)`, each cut along its
/// top-left to bottom-right diagonal. Square `(p, q)` (column, row from the
/// bottom left) is black with `a = 1/N^2` when `p + q` is odd, so the top-left
/// square is black. Vertex `(i, j)` has id `j (2N + 1) + i`; square `(p, q)`
/// holds elements `2 (q 2N + p)` (lower-left) and `2 (q 2N + p) + 1`.
pub fn checkerboard_mesh(n: usize) -> Result<(Triangulation, Coefficient)> {
    if n == 0 {
        return Err(Error::ParameterOutOfRange("N must be at least 1".into()));
    }
    let m = 2 * n;
    let h = 1.0 / m as f64;
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut triangles = Vec::with_capacity(2 * m * m);
    let mut values = Vec::with_capacity(2 * m * m);
    let black = 1.0 / (n * n) as f64;
    for q in 0..m {
        for p in 0..m {
            let (bl, br, tl, tr) = (id(p, q), id(p + 1, q), id(p, q + 1), id(p + 1, q + 1));
            triangles.push([bl, br, tl]);
            triangles.push([br, tr, tl]);
            let v = if (p + q) % 2 == 1 { black } else { 1.0 };
            values.extend([v, v]);
        }
    }
    let tri = Triangulation::new(vertices, triangles)?;
    let a = attach_coefficient(&tri, values)?;
    Ok((tri, a))
}

/// `U_N = (1/N) sum_{i,j} u_{1/N}(2N(x - c_ij))` on the checkerboard mesh.
#[derive(Debug, Clone)]
pub struct CheckerboardTarget {
    n: usize,
    hex: HexagonTarget,
    // per element: macro centre and piece of the rescaled hexagon
    pieces: Vec<(Point, Piece)>,
    singular: Vec<SingularPoint>,
}

fn macro_center(n: usize, x: Point) -> Point {
    let nf = n as f64;
    let idx = |t: f64| ((t * nf).floor() as isize).clamp(0, n as isize - 1) as f64;
    [(2.0 * idx(x[0]) + 1.0) / (2.0 * nf), (2.0 * idx(x[1]) + 1.0) / (2.0 * nf)]
}

pub fn checkerboard_target(n: usize) -> Result<CheckerboardTarget> {
    if n < 2 || 1.0 / (n as f64) < MIN_EPS {
        return Err(Error::ParameterOutOfRange(format!(
            "N = {n}: needs 1/N in [{MIN_EPS}, {MAX_EPS}]"
        )));
    }
    let (tri, _) = checkerboard_mesh(n)?;
    let eps = 1.0 / n as f64;
    let hex = hexagon_target(eps)?;
    let scale = 2.0 * n as f64;
    let pieces = (0..tri.num_elements())
        .map(|k| {
            let g = centroid(&tri, k);
            let c = macro_center(n, g);
            (c, Piece::at([scale * (g[0] - c[0]), scale * (g[1] - c[1])]))
        })
        .collect();
    let mut singular = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            singular.push(SingularPoint {
                center: [(2 * i + 1) as f64 / scale, (2 * j + 1) as f64 / scale],
                exponent: eps,
                breakpoints: vec![eps / scale, 1.0 / scale],
            });
        }
    }
    Ok(CheckerboardTarget { n, hex, pieces, singular })
}

impl CheckerboardTarget {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Macro centre and hexagon piece of element `k`.
    pub fn piece(&self, k: usize) -> (Point, Piece) {
        self.pieces[k]
    }

    /// Centres of antisymmetry (the macro-square centres).
    pub fn antisymmetry_centers(&self) -> Vec<Point> {
        self.singular.iter().map(|s| s.center).collect()
    }
}

impl TargetField for CheckerboardTarget {
    fn eval(&self, element: usize, x: Point) -> (f64, [f64; 2]) {
        let (c, piece) = self.pieces[element];
        let scale = 2.0 * self.n as f64;
        let (v, g) = self.hex.eval_piece(piece, [scale * (x[0] - c[0]), scale * (x[1] - c[1])]);
        // (1/N) u(2N(x - c)): gradient factor (1/N)(2N) = 2
        (v / self.n as f64, [2.0 * g[0], 2.0 * g[1]])
    }

    fn eval_near(&self, element: usize, center: Point, offset: [f64; 2]) -> (f64, [f64; 2]) {
        let (c, piece) = self.pieces[element];
        if c != center {
            return self.eval(element, [center[0] + offset[0], center[1] + offset[1]]);
        }
        let scale = 2.0 * self.n as f64;
        let (v, g) = self.hex.eval_piece(piece, [scale * offset[0], scale * offset[1]]);
        (v / self.n as f64, [2.0 * g[0], 2.0 * g[1]])
    }

    fn singular_points(&self) -> &[SingularPoint] {
        &self.singular
    }
}

/// Vertex star classes of the checkerboard mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarType {
    /// Macro-square centre.
    Center,
    /// Midpoint of a macro-square edge.
    EdgeMidpoint,
    /// Macro-square corner.
    Corner,
}

impl StarType {
    pub fn number(self) -> u8 {
        match self {
            StarType::Center => 1,
            StarType::EdgeMidpoint => 2,
            StarType::Corner => 3,
        }
    }
}

/// Class of checkerboard vertex `z`.
pub fn star_type(n: usize, z: usize) -> StarType {
    let m = 2 * n + 1;
    let (i, j) = (z % m, z / m);
    match (i % 2, j % 2) {
        (1, 1) => StarType::Center,
        (0, 0) => StarType::Corner,
        _ => StarType::EdgeMidpoint,
    }
}

/// Explicit comparison function for the star of interior vertex `z`, as a
/// nodal vector of the degree-1 space (zero outside the star). For every
/// white hexagon triangle of the star: if its macro centre is `z`, its other
/// two vertices get `-s/N`; otherwise its macro centre gets `s/N`, where
/// `s = 1` on the first-quadrant triangle and `-1` on the third-quadrant one.
/// Values on the domain boundary are then set to zero.
pub fn star_candidate(tri: &Triangulation, target: &CheckerboardTarget, z: usize) -> Vec<f64> {
    let n = target.n() as f64;
    let mut v = vec![0.0; tri.num_vertices()];
    let vertex_at = |p: Point| {
        (0..tri.num_vertices())
            .find(|&i| (tri.vertex(i)[0] - p[0]).abs() < 1e-12 && (tri.vertex(i)[1] - p[1]).abs() < 1e-12)
            .expect("macro centre is a mesh vertex")
    };
    for &k in tri.vertex_elements(z) {
        let (c, piece) = target.piece(k);
        let s = match piece {
            Piece::K1 => 1.0,
            Piece::K4 => -1.0,
            _ => continue,
        };
        let cid = vertex_at(c);
        if cid == z {
            for vid in tri.triangle(k) {
                if vid != z {
                    v[vid] = -s / n;
                }
            }
        } else {
            v[cid] = s / n;
        }
    }
    for (i, vi) in v.iter_mut().enumerate() {
        if tri.is_boundary_vertex(i) {
            *vi = 0.0;
        }
    }
    v
}
