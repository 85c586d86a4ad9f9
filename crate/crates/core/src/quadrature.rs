//! Polar product rules on the unit ball of `ℝ^m` and a small adaptive
//! Gauss–Legendre integrator for one-dimensional radial integrals.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::jacobi::GaussJacobi;
use gauss_quad::legendre::GaussLegendre;
use gauss_quad::FiniteAboveNegOneF64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("order >= 1"));
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.iter().map(|(x, w)| (mid + half * x, half * w)).collect()
}

/// Polar rule: Gauss–Legendre in the radius, trapezoid in the azimuth and
/// Gauss–Jacobi in the cosine of each polar angle for `m > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarRule {
    pub radial_order: usize,
    pub angular_count: usize,
}

impl Default for PolarRule {
    fn default() -> Self {
        Self {
            radial_order: 32,
            angular_count: 48,
        }
    }
}

/// Nodes of a rule on the unit ball: flat coordinates (`m` per node) and
/// weights that already include the `r^{m-1}` Jacobian.
#[derive(Debug, Clone)]
pub struct BallNodes {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub radii: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BallNodes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

impl PolarRule {
    pub fn new(radial_order: usize, angular_count: usize) -> Result<Self> {
        if radial_order < 1 || angular_count < 2 {
            return Err(Error::Invalid(format!(
                "polar rule needs radial order >= 1 and angular count >= 2, got {radial_order}/{angular_count}"
            )));
        }
        Ok(Self {
            radial_order,
            angular_count,
        })
    }

    /// The coarser companion rule used for quadrature error estimates.
    pub fn halved(&self) -> Self {
        Self {
            radial_order: (self.radial_order / 2).max(1),
            angular_count: (self.angular_count / 2).max(2),
        }
    }

    /// Nodes on the unit ball in `ℝ^m`. `phase` shifts the azimuthal nodes by
    /// that fraction of one angular step.
    pub fn ball(&self, m: usize, phase: f64) -> BallNodes {
        let radial = gauss_legendre(self.radial_order, 0.0, 1.0);
        let dirs = sphere_rule(m, self.angular_count, phase);
        let mut coords = Vec::with_capacity(radial.len() * dirs.len() * m);
        let mut radii = Vec::with_capacity(radial.len() * dirs.len());
        let mut weights = Vec::with_capacity(radial.len() * dirs.len());
        for &(r, wr) in &radial {
            let jac = wr * r.powi(m as i32 - 1);
            for (dir, wd) in &dirs {
                coords.extend(dir.iter().map(|c| r * c));
                radii.push(r);
                weights.push(jac * wd);
            }
        }
        BallNodes {
            dim: m,
            coords,
            radii,
            weights,
        }
    }
}

/// Direction rule on `S^{m-1}`; weights sum to the sphere area.
pub fn sphere_rule(m: usize, count: usize, phase: f64) -> Vec<(Vec<f64>, f64)> {
    match m {
        0 => Vec::new(),
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + phase) / count as f64;
                (vec![t.cos(), t.sin()], 2.0 * PI / count as f64)
            })
            .collect(),
        _ => {
            // t = cos θ carries the weight (1 − t²)^{(m-3)/2}
            let inner = sphere_rule(m - 1, count, phase);
            let exponent = FiniteAboveNegOneF64::new(0.5 * (m as f64 - 3.0)).expect("m >= 3");
            let degree = NonZeroUsize::new((count / 2).max(2)).expect("nonzero");
            let polar = GaussJacobi::new(degree, exponent, exponent);
            let mut out = Vec::with_capacity(degree.get() * inner.len());
            for (t, wt) in polar.iter() {
                let s = (1.0 - t * t).sqrt();
                for (dir, wd) in &inner {
                    let mut v = Vec::with_capacity(m);
                    v.push(*t);
                    v.extend(dir.iter().map(|d| s * d));
                    out.push((v, wt * wd));
                }
            }
            out
        }
    }
}

/// Adaptive Gauss–Legendre on `[a, b]` by bisection until the 15-point value
/// on an interval agrees with the sum over its halves to `tol`.
pub fn adaptive_integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(15, -1.0, 1.0);
    let apply = |lo: f64, hi: f64| {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    };
    fn recurse(apply: &impl Fn(f64, f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let (left, right) = (apply(lo, mid), apply(mid, hi));
        if depth >= 40 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(apply, lo, mid, left, 0.5 * tol, depth + 1) + recurse(apply, mid, hi, right, 0.5 * tol, depth + 1)
    }
    recurse(&apply, a, b, apply(a, b), tol, 0)
}
