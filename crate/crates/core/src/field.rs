//! Target functions that get approximated.

use serde::{Deserialize, Serialize};

use crate::Point;

/// A point where the target's gradient blows up like `r^(exponent - 1)`.
///
/// `breakpoints` are ascending radii (measured from `center`) across which the
/// target switches formula; the first one bounds the singular core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub center: Point,
    pub exponent: f64,
    pub breakpoints: Vec<f64>,
}

/// A function with closed-form value and gradient.
///
/// `element` names the mesh element the point belongs to; analytic targets
/// ignore it, discrete ones use it to pick the local polynomial.
pub trait TargetField: Sync {
    fn eval(&self, element: usize, x: Point) -> (f64, [f64; 2]);

    fn singular_points(&self) -> &[SingularPoint] {
        &[]
    }

    /// Evaluates at `center + offset`. Targets whose formulas are written
    /// relative to a singular centre override this to avoid losing tiny
    /// offsets to rounding.
    fn eval_near(&self, element: usize, center: Point, offset: [f64; 2]) -> (f64, [f64; 2]) {
        self.eval(element, [center[0] + offset[0], center[1] + offset[1]])
    }
}

/// Wraps a closure `x -> (u, grad u)`.
pub struct FnField<F>(pub F);

impl<F> TargetField for FnField<F>
where
    F: Fn(Point) -> (f64, [f64; 2]) + Sync,
{
    fn eval(&self, _element: usize, x: Point) -> (f64, [f64; 2]) {
        (self.0)(x)
    }
}

/// Smooth targets used by the robustness experiments on `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothTarget {
    /// `sin(pi x) sin(pi y)`
    SinSin,
    /// `exp(x/2 + y)`
    Exp,
    /// `x^3 - 3 x y^2 + cos(pi y)`
    PolyCos,
}

impl SmoothTarget {
    pub const ALL: [SmoothTarget; 3] = [SmoothTarget::SinSin, SmoothTarget::Exp, SmoothTarget::PolyCos];

    pub fn name(self) -> &'static str {
        match self {
            SmoothTarget::SinSin => "sin-sin",
            SmoothTarget::Exp => "exp",
            SmoothTarget::PolyCos => "poly-cos",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn value_grad(self, x: Point) -> (f64, [f64; 2]) {
        use std::f64::consts::PI;
        let [x, y] = x;
        match self {
            SmoothTarget::SinSin => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                (sx * sy, [PI * cx * sy, PI * sx * cy])
            }
            SmoothTarget::Exp => {
                let e = (0.5 * x + y).exp();
                (e, [0.5 * e, e])
            }
            SmoothTarget::PolyCos => (
                x * x * x - 3.0 * x * y * y + (PI * y).cos(),
                [3.0 * x * x - 3.0 * y * y, -6.0 * x * y - PI * (PI * y).sin()],
            ),
        }
    }
}

impl TargetField for SmoothTarget {
    fn eval(&self, _element: usize, x: Point) -> (f64, [f64; 2]) {
        self.value_grad(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_gradients_match_differences() {
        let h = 1e-6;
        for t in SmoothTarget::ALL {
            for &p in &[[0.3, -0.2], [-0.7, 0.55], [0.1, 0.9]] {
                let (_, g) = t.value_grad(p);
                let dx = (t.value_grad([p[0] + h, p[1]]).0 - t.value_grad([p[0] - h, p[1]]).0) / (2.0 * h);
                let dy = (t.value_grad([p[0], p[1] + h]).0 - t.value_grad([p[0], p[1] - h]).0) / (2.0 * h);
                assert!((dx - g[0]).abs() < 1e-6 * (1.0 + g[0].abs()));
                assert!((dy - g[1]).abs() < 1e-6 * (1.0 + g[1].abs()));
            }
        }
    }
}
