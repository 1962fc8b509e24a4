//! Quadrature: Gauss-Legendre, conical-product triangle rules and graded
//! polar rules around singular points of a target.
//!
//! Around a singular point with exponent `lambda < 1/2` the gradient energy
//! density behaves like `r^(2 lambda - 1)`. Inside the singular core
//! `r < r0` the radial variable is substituted by `r = r0 t^p` with
//! `p = 1 / (2 lambda)`, which turns that density into a bounded one; the
//! `t` interval is then split geometrically towards both ends. Outside the
//! core the radial cells double in length until the element boundary.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SingularPoint, TargetField};
use crate::mesh::Triangulation;
use crate::Point;

pub const DEFAULT_SINGULAR_RTOL: f64 = 1e-8;
pub const RADIAL_ORDER: usize = 12;
pub const ANGULAR_ORDER: usize = 12;
pub const MAX_LEVELS: usize = 60;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Maps a `[0, 1]` rule onto `[a, b]`, appending to `out`.
fn push_interval(gl: &(Vec<f64>, Vec<f64>), a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    let len = b - a;
    for (t, w) in gl.0.iter().zip(&gl.1) {
        out.push((a + len * t, len * w));
    }
}

/// Conical-product Gauss rule on the reference triangle, exact for
/// polynomials of total degree `degree`. Weights are positive and sum to 1/2.
pub fn triangle_rule(degree: usize) -> Vec<(Point, f64)> {
    // collapsed square: x = s, y = t (1 - s), Jacobian (1 - s)
    let ns = (degree + 3).div_ceil(2);
    let nt = (degree + 2).div_ceil(2);
    let (sx, sw) = gauss_legendre(ns);
    let (tx, tw) = gauss_legendre(nt);
    let mut out = Vec::with_capacity(ns * nt);
    for (s, ws) in sx.iter().zip(&sw) {
        for (t, wt) in tx.iter().zip(&tw) {
            out.push(([*s, t * (1.0 - s)], ws * wt * (1.0 - s)));
        }
    }
    out
}

/// Rule for `int_0^r_max f(r) dr` graded towards a singular point at `r = 0`.
pub fn radial_rule(r_max: f64, singular: &SingularPoint, levels: usize, order: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(order);
    let mut out = Vec::new();
    let core = singular
        .breakpoints
        .first()
        .copied()
        .unwrap_or(r_max)
        .min(r_max);
    let p = if singular.exponent > 0.0 && singular.exponent < 0.5 {
        0.5 / singular.exponent
    } else {
        1.0
    };

    let mut cuts = vec![0.0];
    for k in (1..=levels + 1).rev() {
        cuts.push(0.5_f64.powi(k as i32));
    }
    for k in 2..=levels + 1 {
        cuts.push(1.0 - 0.5_f64.powi(k as i32));
    }
    cuts.push(1.0);
    let mut tcells = Vec::new();
    for w in cuts.windows(2) {
        push_interval(&gl, w[0], w[1], &mut tcells);
    }
    for (t, w) in tcells {
        out.push((core * t.powf(p), core * p * t.powf(p - 1.0) * w));
    }

    if r_max > core * (1.0 + 1e-14) {
        let mut nodes = vec![core];
        let mut r = 2.0 * core;
        while r < r_max {
            nodes.push(r);
            r *= 2.0;
        }
        nodes.extend(singular.breakpoints.iter().skip(1).copied().filter(|&b| b > core && b < r_max));
        nodes.push(r_max);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * r_max);
        for w in nodes.windows(2) {
            push_interval(&gl, w[0], w[1], &mut out);
        }
    }
    out
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

/// Polar rule on the sector `(c, p, q)` (counter-clockwise) centred at `c`.
fn polar_sector(
    c: Point,
    p: Point,
    q: Point,
    singular: &SingularPoint,
    levels: usize,
    out_offsets: &mut Vec<Point>,
    out_weights: &mut Vec<f64>,
) {
    let (dp, dq) = (sub(p, c), sub(q, c));
    let theta0 = dp[1].atan2(dp[0]);
    let sweep = cross(dp, dq).atan2(dp[0] * dq[0] + dp[1] * dq[1]);
    let pq = sub(q, p);
    let len = pq[0].hypot(pq[1]);
    let dist = cross(pq, sub(c, p)).abs() / len;
    // unit normal from c towards the line pq
    let t = ((c[0] - p[0]) * pq[0] + (c[1] - p[1]) * pq[1]) / (len * len);
    let foot = [p[0] + t * pq[0], p[1] + t * pq[1]];
    let normal = [(foot[0] - c[0]) / dist, (foot[1] - c[1]) / dist];

    // within each angular cell integrate in u = tan(theta - theta_n), where
    // theta_n is the direction of the normal; dtheta = du / (1 + u^2) and
    // R = dist sqrt(1 + u^2), so the area density is constant in u
    let theta_n = normal[1].atan2(normal[0]);
    let gl = gauss_legendre(ANGULAR_ORDER);
    let cells = (sweep / FRAC_PI_4 - 1e-12).ceil().max(1.0) as usize;
    let mut angles = Vec::new();
    for i in 0..cells {
        let a = theta0 + sweep * i as f64 / cells as f64 - theta_n;
        let b = theta0 + sweep * (i + 1) as f64 / cells as f64 - theta_n;
        let (ua, ub) = (wrap(a).tan(), wrap(b).tan());
        let mut us = Vec::new();
        push_interval(&gl, ua, ub, &mut us);
        for (u, wu) in us {
            angles.push((theta_n + u.atan(), wu / (1.0 + u * u)));
        }
    }
    for (theta, wt) in angles {
        let (s, co) = theta.sin_cos();
        let r_max = dist / (co * normal[0] + s * normal[1]);
        for (r, wr) in radial_rule(r_max, singular, levels, RADIAL_ORDER) {
            out_offsets.push([r * co, r * s]);
            out_weights.push(wt * wr * r);
        }
    }
}

/// Maps an angle into `(-pi, pi]`.
fn wrap(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Polar composite rule for a triangle whose closure contains
/// `singular.center`. Nodes are returned as offsets from the centre, which
/// keeps radii far below the rounding unit of the centre coordinates exact.
pub fn polar_triangle_rule(corners: [Point; 3], singular: &SingularPoint, levels: usize) -> (Vec<Point>, Vec<f64>) {
    let c = singular.center;
    let scale = sub(corners[1], corners[0])[0].hypot(sub(corners[1], corners[0])[1]);
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for i in 0..3 {
        let (p, q) = (corners[i], corners[(i + 1) % 3]);
        // skip edges that contain c: their sector is degenerate
        if cross(sub(q, p), sub(c, p)).abs() <= 1e-12 * scale * scale {
            continue;
        }
        polar_sector(c, p, q, singular, levels, &mut pts, &mut wts);
    }
    (pts, wts)
}

/// Points and weights for `int_F f ds` on the segment `p -> q`, graded towards
/// any singular point lying on it.
pub fn edge_rule(p: Point, q: Point, singular: &[SingularPoint], levels: usize) -> Vec<(Point, f64)> {
    let d = sub(q, p);
    let len = d[0].hypot(d[1]);
    let dir = [d[0] / len, d[1] / len];
    let on_edge = singular.iter().find_map(|sp| {
        let rel = sub(sp.center, p);
        if cross(d, rel).abs() > 1e-12 * len * len {
            return None;
        }
        let t = (rel[0] * d[0] + rel[1] * d[1]) / (len * len);
        (-1e-12..=1.0 + 1e-12).contains(&t).then_some((t.clamp(0.0, 1.0), sp))
    });
    let mut out = Vec::new();
    match on_edge {
        None => {
            let gl = gauss_legendre(RADIAL_ORDER);
            let mut ts = Vec::new();
            push_interval(&gl, 0.0, 0.5, &mut ts);
            push_interval(&gl, 0.5, 1.0, &mut ts);
            for (t, w) in ts {
                out.push(([p[0] + t * d[0], p[1] + t * d[1]], w * len));
            }
        }
        Some((t, sp)) => {
            let c = [p[0] + t * d[0], p[1] + t * d[1]];
            let back = t * len;
            let fwd = (1.0 - t) * len;
            if back > 1e-14 * len {
                for (r, w) in radial_rule(back, sp, levels, RADIAL_ORDER) {
                    out.push(([c[0] - r * dir[0], c[1] - r * dir[1]], w));
                }
            }
            if fwd > 1e-14 * len {
                for (r, w) in radial_rule(fwd, sp, levels, RADIAL_ORDER) {
                    out.push(([c[0] + r * dir[0], c[1] + r * dir[1]], w));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RuleKind {
    /// Conical-product Gauss rule exact up to `degree`.
    Triangle { degree: usize },
    /// Graded polar rule around `center`.
    Polar { center: Point, exponent: f64, levels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRule {
    pub kind: RuleKind,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// For polar rules, the exact offsets of the points from the centre.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<Point>,
}

/// One quadrature rule per mesh element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePlan {
    pub exactness: usize,
    pub rtol: f64,
    pub rules: Vec<ElementRule>,
}

fn map_reference(corners: [Point; 3], rule: &[(Point, f64)], area: f64) -> (Vec<Point>, Vec<f64>) {
    let [a, b, c] = corners;
    rule.iter()
        .map(|&(xi, w)| {
            let x = [
                a[0] + xi[0] * (b[0] - a[0]) + xi[1] * (c[0] - a[0]),
                a[1] + xi[0] * (b[1] - a[1]) + xi[1] * (c[1] - a[1]),
            ];
            (x, 2.0 * area * w)
        })
        .unzip()
}

fn singular_in_closure<'a>(tri: &Triangulation, k: usize, points: &'a [SingularPoint]) -> Option<&'a SingularPoint> {
    let h = tri.diameter(k);
    points.iter().find(|sp| {
        let c = sp.center;
        let [a, b, d] = tri.corners(k);
        let lo_x = a[0].min(b[0]).min(d[0]) - 1e-12 * h;
        let hi_x = a[0].max(b[0]).max(d[0]) + 1e-12 * h;
        let lo_y = a[1].min(b[1]).min(d[1]) - 1e-12 * h;
        let hi_y = a[1].max(b[1]).max(d[1]) + 1e-12 * h;
        c[0] >= lo_x && c[0] <= hi_x && c[1] >= lo_y && c[1] <= hi_y && tri.contains(k, c, 1e-12)
    })
}

fn probe<T: TargetField + ?Sized>(target: &T, k: usize, center: Point, offsets: &[Point], wts: &[f64]) -> f64 {
    offsets
        .iter()
        .zip(wts)
        .map(|(&d, &w)| {
            let (u, g) = target.eval_near(k, center, d);
            w * (u * u + g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// Builds one rule per element: conical-product rules of the requested
/// exactness away from singular points, adaptively graded polar rules on
/// elements touching one.
pub fn make_quadrature_plan<T: TargetField + ?Sized>(
    tri: &Triangulation,
    target: &T,
    exactness: usize,
    rtol: f64,
) -> Result<QuadraturePlan> {
    let reference = triangle_rule(exactness);
    let singular = target.singular_points();
    let rules: Vec<Result<ElementRule>> = (0..tri.num_elements())
        .into_par_iter()
        .map(|k| {
            let corners = tri.corners(k);
            let Some(sp) = singular_in_closure(tri, k, singular) else {
                let (points, weights) = map_reference(corners, &reference, tri.area(k));
                return Ok(ElementRule { kind: RuleKind::Triangle { degree: exactness }, points, weights, offsets: Vec::new() });
            };
            let (mut pts, mut wts) = polar_triangle_rule(corners, sp, 1);
            let mut prev = probe(target, k, sp.center, &pts, &wts);
            for levels in 2..=MAX_LEVELS {
                let (p2, w2) = polar_triangle_rule(corners, sp, levels);
                let next = probe(target, k, sp.center, &p2, &w2);
                pts = p2;
                wts = w2;
                let converged = (next - prev).abs() <= rtol * next.abs() || next.abs() < 1e-300;
                prev = next;
                if converged {
                    if pts.iter().any(|d| d[0] == 0.0 && d[1] == 0.0) {
                        return Err(Error::SingularPointOnQuadratureNode { x: sp.center[0], y: sp.center[1] });
                    }
                    let c = sp.center;
                    return Ok(ElementRule {
                        kind: RuleKind::Polar { center: c, exponent: sp.exponent, levels },
                        points: pts.iter().map(|d| [c[0] + d[0], c[1] + d[1]]).collect(),
                        weights: wts,
                        offsets: pts,
                    });
                }
            }
            Err(Error::QuadratureFailure {
                element: k,
                reason: format!("graded polar rule did not reach rtol {rtol:e} within {MAX_LEVELS} levels"),
            })
        })
        .collect();
    Ok(QuadraturePlan { exactness, rtol, rules: rules.into_iter().collect::<Result<_>>()? })
}

impl QuadraturePlan {
    pub fn num_elements(&self) -> usize {
        self.rules.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

/// `sum_{K in region} sum_q w_q f(K, x_q)`, accumulated in ascending element
/// and point order.
pub fn integrate<F>(plan: &QuadraturePlan, region: &[usize], f: F) -> Result<f64>
where
    F: Fn(usize, Point) -> f64,
{
    let mut ids = region.to_vec();
    ids.sort_unstable();
    let mut total = 0.0;
    for k in ids {
        let rule = plan
            .rules
            .get(k)
            .ok_or_else(|| Error::PlanMismatch(format!("element {k} has no rule")))?;
        total += rule.points.iter().zip(&rule.weights).map(|(&x, &w)| w * f(k, x)).sum::<f64>();
    }
    Ok(total)
}

/// A target evaluated once at every quadrature point of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: Point,
    pub w: f64,
    pub u: f64,
    pub grad: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SampledField {
    elements: Vec<Vec<Sample>>,
}

impl SampledField {
    pub fn new<T: TargetField + ?Sized>(tri: &Triangulation, target: &T, plan: &QuadraturePlan) -> Result<Self> {
        if plan.num_elements() != tri.num_elements() {
            return Err(Error::PlanMismatch(format!(
                "plan has {} rules, mesh has {} elements",
                plan.num_elements(),
                tri.num_elements()
            )));
        }
        let elements = plan
            .rules
            .par_iter()
            .enumerate()
            .map(|(k, rule)| {
                let center = match rule.kind {
                    RuleKind::Polar { center, .. } => Some(center),
                    RuleKind::Triangle { .. } => None,
                };
                rule.points
                    .iter()
                    .zip(&rule.weights)
                    .enumerate()
                    .map(|(q, (&x, &w))| {
                        let (u, grad) = match center {
                            Some(c) if !rule.offsets.is_empty() => target.eval_near(k, c, rule.offsets[q]),
                            _ => target.eval(k, x),
                        };
                        Sample { x, w, u, grad }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { elements })
    }

    /// Plan and samples in one go.
    pub fn build<T: TargetField + ?Sized>(
        tri: &Triangulation,
        target: &T,
        exactness: usize,
        rtol: f64,
    ) -> Result<Self> {
        let plan = make_quadrature_plan(tri, target, exactness, rtol)?;
        Self::new(tri, target, &plan)
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element(&self, k: usize) -> &[Sample] {
        &self.elements[k]
    }

    /// `int_K f(sample)` over the listed elements in ascending order.
    pub fn integrate<F: Fn(usize, &Sample) -> f64>(&self, region: &[usize], f: F) -> f64 {
        let mut ids = region.to_vec();
        ids.sort_unstable();
        ids.into_iter()
            .map(|k| self.elements[k].iter().map(|s| s.w * f(k, s)).sum::<f64>())
            .sum()
    }
}
