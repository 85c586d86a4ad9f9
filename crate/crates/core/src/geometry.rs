//! Graph-chart boundary patches, surface points, tangent frames and the
//! quantitative non-flatness certificate.
//!
//! A patch is the graph `{(x', φ(x')) : |x'| < ρ}` over a disk in `ℝ^{n-1}`
//! with `φ(0) = 0`, `∇φ(0) = 0`. The domain lies above the graph, so the
//! outward normal is `(∇φ, −1)/q` with `q = √(1 + |∇φ|²)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, sym_spectral_norm, unit};

/// A user-supplied chart function with first and second derivatives.
pub trait ChartFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

#[derive(Clone)]
pub enum ChartKind {
    Flat,
    /// `φ(x') = ½ x'ᵀ A x'` with symmetric `A`.
    Paraboloid(DMatrix<f64>),
    /// Lower cap of a sphere of the given radius touching the origin.
    SphereCap(f64),
    Callable(Arc<dyn ChartFunction>),
}

impl fmt::Debug for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartKind::Flat => write!(f, "Flat"),
            ChartKind::Paraboloid(a) => write!(f, "Paraboloid({:?})", a.as_slice()),
            ChartKind::SphereCap(r) => write!(f, "SphereCap({r})"),
            ChartKind::Callable(_) => write!(f, "Callable"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryPatch {
    dim: usize,
    radius: f64,
    holder_exponent: f64,
    holder_constant: f64,
    kind: ChartKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    /// Chart coordinate `x' ∈ ℝ^{n-1}`.
    pub base: DVector<f64>,
    /// Embedded point `(x', φ(x')) ∈ ℝⁿ`.
    pub position: DVector<f64>,
    /// Outward unit normal.
    pub normal: DVector<f64>,
    /// Area factor `q(x') = √(1 + |∇φ(x')|²)`.
    pub area_factor: f64,
}

impl SurfacePoint {
    pub fn distance(&self, other: &SurfacePoint) -> f64 {
        (&self.position - &other.position).norm()
    }
}

impl BoundaryPatch {
    pub fn new(dim: usize, radius: f64, holder_exponent: f64, holder_constant: f64, kind: ChartKind) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("chart radius must be positive, got {radius}")));
        }
        if !(holder_exponent > 0.0 && holder_exponent < 1.0) {
            return Err(Error::Invalid(format!("Hölder exponent must lie in (0,1), got {holder_exponent}")));
        }
        if !(holder_constant > 0.0) {
            return Err(Error::Invalid(format!("Hölder constant must be positive, got {holder_constant}")));
        }
        match &kind {
            ChartKind::Paraboloid(a) => {
                if a.shape() != (dim - 1, dim - 1) {
                    return Err(Error::DimensionMismatch {
                        expected: dim - 1,
                        got: a.nrows(),
                    });
                }
                crate::linalg::symmetrize(a)?;
            }
            ChartKind::SphereCap(r) => {
                if !(*r > radius) {
                    return Err(Error::Invalid(format!(
                        "sphere radius {r} must exceed the chart radius {radius}"
                    )));
                }
            }
            _ => {}
        }
        let patch = Self {
            dim,
            radius,
            holder_exponent,
            holder_constant,
            kind,
        };
        let origin = vec![0.0; dim - 1];
        let (v, g) = (patch.phi(&origin), patch.grad(&origin));
        if v.abs() > 1e-12 || g.amax() > 1e-12 {
            return Err(Error::Invalid("chart must satisfy φ(0) = 0 and ∇φ(0) = 0".into()));
        }
        Ok(patch)
    }

    pub fn flat(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, radius, 0.5, 1.0, ChartKind::Flat)
    }

    /// `φ(x') = (a/2)|x'|²`.
    pub fn isotropic_paraboloid(dim: usize, radius: f64, curvature: f64) -> Result<Self> {
        let a = DMatrix::identity(dim - 1, dim - 1) * curvature;
        Self::new(dim, radius, 0.5, 1.0, ChartKind::Paraboloid(a))
    }

    pub fn sphere_cap(dim: usize, radius: f64, sphere_radius: f64) -> Result<Self> {
        Self::new(dim, radius, 0.5, 1.0, ChartKind::SphereCap(sphere_radius))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    pub fn holder_constant(&self) -> f64 {
        self.holder_constant
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ChartKind::Flat => 0.0,
            ChartKind::Paraboloid(a) => {
                let v = DVector::from_column_slice(x);
                0.5 * v.dot(&(a * &v))
            }
            ChartKind::SphereCap(r) => {
                let s2: f64 = x.iter().map(|c| c * c).sum();
                // r - sqrt(r² - s²) without cancellation
                s2 / (r + (r * r - s2).sqrt())
            }
            ChartKind::Callable(f) => f.value(x),
        }
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        match &self.kind {
            ChartKind::Flat => DVector::zeros(x.len()),
            ChartKind::Paraboloid(a) => a * DVector::from_column_slice(x),
            ChartKind::SphereCap(r) => {
                let s2: f64 = x.iter().map(|c| c * c).sum();
                DVector::from_column_slice(x) / (r * r - s2).sqrt()
            }
            ChartKind::Callable(f) => f.gradient(x),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = x.len();
        match &self.kind {
            ChartKind::Flat => DMatrix::zeros(m, m),
            ChartKind::Paraboloid(a) => a.clone(),
            ChartKind::SphereCap(r) => {
                let v = DVector::from_column_slice(x);
                let s = (r * r - v.norm_squared()).sqrt();
                DMatrix::identity(m, m) / s + (&v * v.transpose()) / (s * s * s)
            }
            ChartKind::Callable(f) => f.hessian(x),
        }
    }

    /// Embedded point, outward normal and area factor at chart coordinate `x'`.
    pub fn chart_eval(&self, x: &[f64]) -> Result<SurfacePoint> {
        if x.len() != self.dim - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.dim - 1,
                got: x.len(),
            });
        }
        let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm < self.radius) {
            return Err(Error::OutsideChart {
                norm,
                radius: self.radius,
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> SurfacePoint {
        let n = self.dim;
        let grad = self.grad(x);
        let q = (1.0 + grad.norm_squared()).sqrt();
        let mut position = DVector::zeros(n);
        position.rows_mut(0, n - 1).copy_from_slice(x);
        position[n - 1] = self.phi(x);
        let mut normal = DVector::zeros(n);
        normal.rows_mut(0, n - 1).copy_from(&(&grad / q));
        normal[n - 1] = -1.0 / q;
        SurfacePoint {
            base: DVector::from_column_slice(x),
            position,
            normal,
            area_factor: q,
        }
    }

    /// True when the closed disk of radius `r` about `center` lies inside the chart.
    pub fn contains_disk(&self, center: &[f64], r: f64) -> bool {
        let c = center.iter().map(|v| v * v).sum::<f64>().sqrt();
        c + r < self.radius
    }

    /// Orthonormal tangent basis at `p`: Gram–Schmidt on the chart tangents
    /// `(eᵢ, ∂ᵢφ)` in index order.
    pub fn tangent_frame(&self, p: &SurfacePoint) -> Vec<DVector<f64>> {
        let n = self.dim;
        let grad = self.grad(p.base.as_slice());
        let spanning: Vec<DVector<f64>> = (0..n - 1)
            .map(|i| {
                let mut v = unit(n, i);
                v[n - 1] = grad[i];
                v
            })
            .collect();
        gram_schmidt(&spanning)
    }

    /// Sampled Hölder check of `D²φ` on a deterministic grid.
    pub fn holder_check(&self, resolution: usize) -> HolderReport {
        let m = self.dim - 1;
        let mut per_axis = resolution.max(2);
        while (per_axis as f64).powi(m as i32) > 1e5 && per_axis > 2 {
            per_axis -= 1;
        }
        let step = 2.0 * self.radius / (per_axis as f64 - 1.0);
        let total = per_axis.pow(m as u32);
        let mut points = Vec::new();
        for idx in 0..total {
            let mut k = idx;
            let mut x = vec![0.0; m];
            for c in x.iter_mut() {
                *c = -self.radius + step * (k % per_axis) as f64;
                k /= per_axis;
            }
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() < self.radius * (1.0 - 1e-9) {
                points.push(x);
            }
        }
        let hessians: Vec<DMatrix<f64>> = points.iter().map(|x| self.hessian(x)).collect();
        // cap the pair count: every point against a strided reference subset
        let stride = (points.len() / 1500).max(1);
        let mut worst = 0.0f64;
        let mut pairs = 0usize;
        for (i, (xi, hi)) in points.iter().zip(&hessians).enumerate() {
            for j in (0..points.len()).step_by(stride) {
                if j == i || (stride == 1 && j < i) {
                    continue;
                }
                let dist = xi.iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let diff = sym_spectral_norm(&(hi - &hessians[j]));
                worst = worst.max(diff / dist.powf(self.holder_exponent));
                pairs += 1;
            }
        }
        HolderReport {
            satisfied: worst <= self.holder_constant,
            worst_ratio: worst,
            pairs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HolderReport {
    pub satisfied: bool,
    pub worst_ratio: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    A,
    B,
    Infeasible,
}

/// Three boundary points with quantitatively separated normals, expressed in
/// the canonical frame where `ν(P₁) = −eₙ` and `ν(P₂)` tilts toward `e_{n-1}`.
#[derive(Debug, Clone)]
pub struct NonFlatnessCertificate {
    pub points: [SurfacePoint; 3],
    pub c0: f64,
    pub k0: f64,
    pub gamma: [f64; 3],
    pub case: CaseTag,
    /// Orthogonal map taking ambient vectors to canonical coordinates.
    pub rotation: DMatrix<f64>,
    pub warnings: Vec<String>,
    pub reason: Option<String>,
}

/// Relative slack for the threshold comparisons, which are often attained
/// with equality (the largest feasible `C₀` makes `γ₁ = k₀`).
const CERT_TOL: f64 = 1e-12;

pub fn k0_from_c0(c0: f64) -> f64 {
    let s = 1.0 - c0;
    ((1.0 - s * s) / (s * s)).sqrt()
}

/// Threshold on `|γ₁ − γ₂|` for the second solvable case.
pub fn case_b_gap(c0: f64) -> f64 {
    let s = 1.0 - c0;
    (3.0 * (1.0 - s * s) / (16.0 * s * s)).sqrt()
}

/// Builds the certificate for three patch points. `c0_override` requests a
/// smaller `C₀` than the largest feasible one.
pub fn certify_nonflat(
    patch: &BoundaryPatch,
    points: [SurfacePoint; 3],
    c0_override: Option<f64>,
) -> NonFlatnessCertificate {
    let n = patch.dim();
    let nu: Vec<&DVector<f64>> = points.iter().map(|p| &p.normal).collect();
    let max_dot = nu[0].dot(nu[1]).max(nu[0].dot(nu[2])).max(nu[1].dot(nu[2]));
    let feasible_c0 = 1.0 - max_dot;
    let mut warnings = Vec::new();

    let mut infeasible = |reason: String, c0: f64| NonFlatnessCertificate {
        points: points.clone(),
        c0,
        k0: if c0 > 0.0 && c0 < 1.0 { k0_from_c0(c0) } else { 0.0 },
        gamma: [0.0; 3],
        case: CaseTag::Infeasible,
        rotation: DMatrix::identity(n, n),
        warnings: std::mem::take(&mut warnings),
        reason: Some(reason),
    };

    if !(feasible_c0 > 1e-12) {
        return infeasible(format!("normals are not separated (C0 = {feasible_c0:e})"), feasible_c0);
    }
    let c0 = match c0_override {
        Some(c) if c > feasible_c0 * (1.0 + CERT_TOL) => {
            return infeasible(
                format!("requested C0 = {c} exceeds the largest feasible value {feasible_c0}"),
                c,
            );
        }
        Some(c) if !(c > 0.0) => return infeasible(format!("requested C0 = {c} is not positive"), c),
        Some(c) => c.min(feasible_c0),
        None => feasible_c0,
    };
    let c12 = nu[0].dot(nu[1]);
    let c13 = nu[0].dot(nu[2]);
    if c12 <= 0.0 || c13 <= 0.0 {
        return infeasible("normals at P2/P3 are not in the half-space of ν(P1)".into(), c0);
    }

    let t2 = nu[1] - nu[0] * c12;
    let t2n = t2.norm();
    let row_nm1 = &t2 / t2n;
    let t3 = nu[2] - nu[0] * c13;
    let gamma1 = t2n / c12;
    let gamma2 = t3.dot(&row_nm1) / c13;
    let r3 = &t3 - &row_nm1 * t3.dot(&row_nm1);
    let gamma3 = r3.norm() / c13;
    let rotation = canonical_rotation(n, nu[0], &row_nm1, &r3);

    let k0 = k0_from_c0(c0);
    let gamma = [gamma1, gamma2, gamma3];
    if !(gamma1 > 0.0 && gamma1 < 0.5) {
        warnings.push(format!("gamma1 = {gamma1} outside (0, 1/2)"));
    }
    if !(0.0..=1.0).contains(&gamma2) {
        warnings.push(format!("gamma2 = {gamma2} outside [0, 1]"));
    }
    if !(0.0..=1.0).contains(&gamma3) {
        warnings.push(format!("gamma3 = {gamma3} outside [0, 1]"));
    }
    let ge = |a: f64, b: f64| a >= b * (1.0 - CERT_TOL) - 1e-15;
    let half = k0 / std::f64::consts::SQRT_2;
    let case = if !ge(gamma1, k0) {
        CaseTag::Infeasible
    } else if ge(gamma3, half) {
        CaseTag::A
    } else if ge(gamma2, half) && ge((gamma1 - gamma2).abs(), case_b_gap(c0)) {
        CaseTag::B
    } else {
        CaseTag::Infeasible
    };
    let reason = (case == CaseTag::Infeasible).then(|| "neither solvable case holds".to_string());
    NonFlatnessCertificate {
        points,
        c0,
        k0,
        gamma,
        case,
        rotation,
        warnings,
        reason,
    }
}

/// Rows of the ambient → canonical map: `eₙ ↦ −ν₁`, `e_{n-1} ↦` the unit
/// tilt direction of `ν₂`, `e_{n-2} ↦` the residual tilt of `ν₃`; the
/// remaining rows complete the basis by Gram–Schmidt on `e₁, e₂, …`.
fn canonical_rotation(
    n: usize,
    nu1: &DVector<f64>,
    tilt2: &DVector<f64>,
    residual3: &DVector<f64>,
) -> DMatrix<f64> {
    let mut fixed = vec![-nu1.clone(), tilt2.clone()];
    let has_third = residual3.norm() > 1e-14;
    if has_third {
        fixed.push(residual3 / residual3.norm());
    }
    let mut spanning = fixed.clone();
    spanning.extend((0..n).map(|i| unit(n, i)));
    let basis = gram_schmidt(&spanning);
    let free = &basis[fixed.len()..];
    let mut rotation = DMatrix::zeros(n, n);
    rotation.set_row(n - 1, &fixed[0].transpose());
    rotation.set_row(n - 2, &fixed[1].transpose());
    let top = if has_third {
        rotation.set_row(n - 3, &fixed[2].transpose());
        n - 3
    } else {
        n - 2
    };
    for (i, v) in free.iter().take(top).enumerate() {
        rotation.set_row(i, &v.transpose());
    }
    rotation
}

impl NonFlatnessCertificate {
    pub fn is_feasible(&self) -> bool {
        self.case != CaseTag::Infeasible
    }

    /// Orthonormal tangent frames at `P₁, P₂, P₃` in ambient coordinates,
    /// obtained from the canonical spanning sets
    /// `{e₁..e_{n-1}}`, `{e₁..e_{n-2}, (e_{n-1}+γ₁eₙ)/√(1+γ₁²)}` and
    /// `{e₁..e_{n-3}, e_{n-2}+γ₃eₙ, e_{n-1}+γ₂eₙ}`.
    pub fn ambient_frames(&self) -> [Vec<DVector<f64>>; 3] {
        let back = self.rotation.transpose();
        self.canonical_frames().map(|f| f.iter().map(|v| &back * v).collect())
    }

    pub fn canonical_frames(&self) -> [Vec<DVector<f64>>; 3] {
        frames_from_gamma(self.rotation.nrows(), self.gamma)
    }

    pub fn report(&self) -> CertificateReport {
        CertificateReport {
            c0: self.c0,
            k0: self.k0,
            gamma: self.gamma,
            case: self.case,
            points: self.points.iter().map(|p| p.base.iter().copied().collect()).collect(),
            normals: self.points.iter().map(|p| p.normal.iter().copied().collect()).collect(),
            rotation: self.rotation.row_iter().map(|r| r.iter().copied().collect()).collect(),
            warnings: self.warnings.clone(),
            reason: self.reason.clone(),
        }
    }
}

/// Canonical-frame tangent bases at `P₁, P₂, P₃` for slopes `γ`.
pub fn frames_from_gamma(n: usize, gamma: [f64; 3]) -> [Vec<DVector<f64>>; 3] {
    let [g1, g2, g3] = gamma;
    let e = |i: usize| unit(n, i);
    let f1: Vec<_> = (0..n - 1).map(e).collect();
    let mut s2: Vec<_> = (0..n - 2).map(e).collect();
    s2.push((e(n - 2) + e(n - 1) * g1) / (1.0 + g1 * g1).sqrt());
    let mut s3: Vec<_> = (0..n - 3).map(e).collect();
    s3.push(e(n - 3) + e(n - 1) * g3);
    s3.push(e(n - 2) + e(n - 1) * g2);
    [f1, gram_schmidt(&s2), gram_schmidt(&s3)]
}

/// Serializable view of a certificate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertificateReport {
    pub c0: f64,
    pub k0: f64,
    pub gamma: [f64; 3],
    pub case: CaseTag,
    pub points: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    pub rotation: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub reason: Option<String>,
}
