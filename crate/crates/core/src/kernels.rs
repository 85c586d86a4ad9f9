//! The anisotropic singular kernel `Γ_σ`, the constant-coefficient
//! Neumann-kernel model `N = 2Γ_σ + R` on the boundary patch, and the
//! four-point combination `K_σ`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conductivity::{metric_from_sigma, ConductivityTensor, MetricTensor};
use crate::error::{Error, Result};
use crate::geometry::SurfacePoint;
use crate::linalg::unit_ball_volume;
use crate::report::fmt_f64;

/// `C_n = 1/(n(n−2)ωₙ)` with `ωₙ` the volume of the unit ball.
pub fn dimensional_constant(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(1.0 / (n as f64 * (n as f64 - 2.0) * unit_ball_volume(n)))
}

/// `Γ(x, y) = C_n (g(x−y)·(x−y))^{(2−n)/2}`.
pub fn gamma(g: &MetricTensor, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = g.dim();
    for p in [x, y] {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
    }
    if x == y {
        return Err(Error::Singularity);
    }
    let gm = g.matrix();
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut form = 0.0;
    for i in 0..n {
        for j in 0..n {
            form += gm[(i, j)] * d[i] * d[j];
        }
    }
    Ok(dimensional_constant(n)? * form.powf(0.5 * (2.0 - n as f64)))
}

/// Anything that can be evaluated as a boundary kernel on the patch. Points
/// are passed as embedded positions (`n` entries) plus chart bases (`n − 1`).
pub trait BoundaryKernel: Sync {
    fn dim(&self) -> usize;

    /// Exponent `α` of the remainder, `None` when the kernel is exactly `2Γ`.
    fn remainder_exponent(&self) -> Option<f64> {
        None
    }

    fn eval_raw(&self, x: &[f64], x_base: &[f64], y: &[f64], y_base: &[f64]) -> f64;

    fn eval(&self, x: &SurfacePoint, y: &SurfacePoint) -> Result<f64> {
        if x.position == y.position {
            return Err(Error::Singularity);
        }
        Ok(self.eval_raw(
            x.position.as_slice(),
            x.base.as_slice(),
            y.position.as_slice(),
            y.base.as_slice(),
        ))
    }

    /// `K(x,y,w,z) = N(x,y) − N(x,w) − N(z,y) + N(z,w)`.
    fn four_point(&self, x: &SurfacePoint, y: &SurfacePoint, w: &SurfacePoint, z: &SurfacePoint) -> Result<f64> {
        // the cancelling configurations are exactly zero
        if x.position == z.position || y.position == w.position {
            return Ok(0.0);
        }
        Ok(self.eval(x, y)? - self.eval(x, w)? - self.eval(z, y)? + self.eval(z, w)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelMode {
    Exact,
    Perturbed { amplitude: f64, exponent: f64, seed: u64 },
}

/// Smooth symmetric field bounded by one:
/// `s(x', y') = Σ aⱼ cos(kⱼ·(x'+y') + φⱼ) cos(mⱼ·(x'−y'))` with `Σ|aⱼ| = 1`.
#[derive(Debug, Clone, PartialEq)]
struct RemainderField {
    amplitude: f64,
    exponent: f64,
    terms: Vec<(f64, Vec<f64>, f64, Vec<f64>)>,
}

const REMAINDER_TERMS: usize = 4;

impl RemainderField {
    fn new(m: usize, amplitude: f64, exponent: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms: Vec<_> = (0..REMAINDER_TERMS)
            .map(|_| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let k: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let freq: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
                (a, k, phase, freq)
            })
            .collect();
        let total: f64 = terms.iter().map(|t| t.0.abs()).sum();
        for t in &mut terms {
            t.0 /= total;
        }
        Self {
            amplitude,
            exponent,
            terms,
        }
    }

    fn shape(&self, xb: &[f64], yb: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, k, phase, freq)| {
                let mut sum_arg = *phase;
                let mut diff_arg = 0.0;
                for i in 0..xb.len() {
                    sum_arg += k[i] * (xb[i] + yb[i]);
                    diff_arg += freq[i] * (xb[i] - yb[i]);
                }
                a * sum_arg.cos() * diff_arg.cos()
            })
            .sum()
    }
}

/// Constant-σ kernel model `N = 2Γ_σ + R`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    sigma: ConductivityTensor,
    metric: MetricTensor,
    mode: KernelMode,
    dim: usize,
    c_n: f64,
    g: Vec<f64>,
    remainder: Option<RemainderField>,
}

impl KernelModel {
    pub fn new(sigma: ConductivityTensor, mode: KernelMode) -> Result<Self> {
        let dim = sigma.dim();
        let metric = metric_from_sigma(&sigma);
        let remainder = match mode {
            KernelMode::Exact => None,
            KernelMode::Perturbed {
                amplitude,
                exponent,
                seed,
            } => {
                if !(amplitude >= 0.0) {
                    return Err(Error::Invalid(format!("remainder amplitude must be >= 0, got {amplitude}")));
                }
                if !(exponent > 0.0 && exponent < 1.0) {
                    return Err(Error::Invalid(format!("remainder exponent must lie in (0,1), got {exponent}")));
                }
                Some(RemainderField::new(dim - 1, amplitude, exponent, seed))
            }
        };
        Ok(Self {
            g: metric.matrix().iter().copied().collect(),
            c_n: dimensional_constant(dim)?,
            sigma,
            metric,
            mode,
            dim,
            remainder,
        })
    }

    pub fn exact(sigma: ConductivityTensor) -> Result<Self> {
        Self::new(sigma, KernelMode::Exact)
    }

    pub fn sigma(&self) -> &ConductivityTensor {
        &self.sigma
    }

    pub fn metric(&self) -> &MetricTensor {
        &self.metric
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn c_n(&self) -> f64 {
        self.c_n
    }

    /// `2Γ_σ(x, y)` on raw positions.
    #[inline]
    pub fn singular_part(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim;
        let mut form = 0.0;
        for i in 0..n {
            let di = x[i] - y[i];
            let row = &self.g[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * (x[j] - y[j]);
            }
            form += di * acc;
        }
        let p = if n == 3 { 1.0 / form.sqrt() } else { form.powf(0.5 * (2.0 - n as f64)) };
        2.0 * self.c_n * p
    }

    /// Remainder `R(x, y)`; zero in exact mode.
    pub fn remainder(&self, x: &[f64], x_base: &[f64], y: &[f64], y_base: &[f64]) -> f64 {
        match &self.remainder {
            None => 0.0,
            Some(field) => {
                let r = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                field.amplitude * r.powf(2.0 - self.dim as f64 + field.exponent) * field.shape(x_base, y_base)
            }
        }
    }

    /// Writes `(x', y', N)` rows for the given point pairs.
    pub fn write_table<W: Write>(&self, pairs: &[(SurfacePoint, SurfacePoint)], mut out: W) -> Result<()> {
        let m = self.dim - 1;
        let mut header: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
        header.extend((0..m).map(|i| format!("y{i}")));
        header.push("n_value".into());
        writeln!(out, "{}", header.join(","))?;
        for (x, y) in pairs {
            let v = self.eval(x, y)?;
            let row: Vec<String> = x.base.iter().chain(y.base.iter()).chain(std::iter::once(&v)).map(|c| fmt_f64(*c)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

impl BoundaryKernel for KernelModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn remainder_exponent(&self) -> Option<f64> {
        self.remainder.as_ref().map(|r| r.exponent)
    }

    #[inline]
    fn eval_raw(&self, x: &[f64], x_base: &[f64], y: &[f64], y_base: &[f64]) -> f64 {
        self.singular_part(x, y) + self.remainder(x, x_base, y, y_base)
    }
}

/// `N₁ − N₂` evaluated term by term. The remainders do not depend on σ, so
/// they cancel exactly when both models share the same mode.
#[derive(Debug, Clone, Copy)]
pub struct KernelDifference<'a> {
    pub first: &'a KernelModel,
    pub second: &'a KernelModel,
    shared_remainder: bool,
}

impl<'a> KernelDifference<'a> {
    pub fn new(first: &'a KernelModel, second: &'a KernelModel) -> Result<Self> {
        if first.dim != second.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                got: second.dim,
            });
        }
        Ok(Self {
            first,
            second,
            shared_remainder: first.mode == second.mode,
        })
    }
}

impl BoundaryKernel for KernelDifference<'_> {
    fn dim(&self) -> usize {
        self.first.dim
    }

    fn remainder_exponent(&self) -> Option<f64> {
        if self.shared_remainder {
            return None;
        }
        self.first.remainder_exponent().or(self.second.remainder_exponent())
    }

    #[inline]
    fn eval_raw(&self, x: &[f64], x_base: &[f64], y: &[f64], y_base: &[f64]) -> f64 {
        let singular = self.first.singular_part(x, y) - self.second.singular_part(x, y);
        if self.shared_remainder {
            return singular;
        }
        singular + (self.first.remainder(x, x_base, y, y_base) - self.second.remainder(x, x_base, y, y_base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryPatch;
    use std::f64::consts::PI;

    #[test]
    fn dimensional_constants() {
        assert!((dimensional_constant(3).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!((dimensional_constant(4).unwrap() - 1.0 / (4.0 * PI * PI)).abs() < 1e-16);
        assert!((dimensional_constant(5).unwrap() - 1.0 / (8.0 * PI * PI)).abs() < 1e-16);
        assert!(matches!(dimensional_constant(2), Err(Error::UnsupportedDimension(2))));
    }

    #[test]
    fn gamma_examples() {
        let g = MetricTensor::identity(3).unwrap();
        let c3 = 1.0 / (4.0 * PI);
        assert!((gamma(&g, &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap() - c3).abs() < 1e-16);
        assert!((gamma(&g, &[0.0, 2.0, 0.0], &[0.0, 0.0, 0.0]).unwrap() - 1.0 / (8.0 * PI)).abs() < 1e-16);
        let g = MetricTensor::from_diagonal(&[1.0, 4.0, 4.0]).unwrap();
        assert!((gamma(&g, &[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0]).unwrap() - 1.0 / (8.0 * PI)).abs() < 1e-16);
        assert!(matches!(gamma(&g, &[0.0; 3], &[0.0; 3]), Err(Error::Singularity)));
    }

    #[test]
    fn exact_mode_is_twice_gamma() {
        let model = KernelModel::exact(ConductivityTensor::identity(3).unwrap()).unwrap();
        let flat = BoundaryPatch::flat(3, 2.0).unwrap();
        let x = flat.chart_eval(&[1.0, 0.0]).unwrap();
        let y = flat.chart_eval(&[0.0, 0.0]).unwrap();
        assert!((model.eval(&x, &y).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-16);
        assert!(matches!(model.eval(&y, &y), Err(Error::Singularity)));
    }

    #[test]
    fn zero_amplitude_matches_exact() {
        let sigma = ConductivityTensor::from_diagonal(&[2.0, 1.0, 0.5]).unwrap();
        let exact = KernelModel::exact(sigma.clone()).unwrap();
        let pert = KernelModel::new(
            sigma,
            KernelMode::Perturbed {
                amplitude: 0.0,
                exponent: 0.5,
                seed: 3,
            },
        )
        .unwrap();
        let par = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0).unwrap();
        for (a, b) in [([0.1, 0.2], [0.3, -0.1]), ([0.0, 0.0], [0.5, 0.5])] {
            let (x, y) = (par.chart_eval(&a).unwrap(), par.chart_eval(&b).unwrap());
            assert_eq!(exact.eval(&x, &y).unwrap(), pert.eval(&x, &y).unwrap());
        }
    }

    #[test]
    fn perturbed_remainder_bound_at_small_distance() {
        let model = KernelModel::new(
            ConductivityTensor::identity(3).unwrap(),
            KernelMode::Perturbed {
                amplitude: 0.1,
                exponent: 0.5,
                seed: 11,
            },
        )
        .unwrap();
        let flat = BoundaryPatch::flat(3, 1.0).unwrap();
        let y = flat.chart_eval(&[0.2, 0.1]).unwrap();
        let x = flat.chart_eval(&[0.21, 0.1]).unwrap();
        let r = model.eval(&x, &y).unwrap() - model.singular_part(x.position.as_slice(), y.position.as_slice());
        assert!(r.abs() <= 0.1 * 0.01f64.powf(-0.5) * (1.0 + 1e-12));
    }

    #[test]
    fn four_point_cancellations() {
        let model = KernelModel::exact(ConductivityTensor::from_diagonal(&[3.0, 1.0, 2.0]).unwrap()).unwrap();
        let par = BoundaryPatch::isotropic_paraboloid(3, 1.0, 0.8).unwrap();
        let p = |a: f64, b: f64| par.chart_eval(&[a, b]).unwrap();
        let (x, y, w, z) = (p(0.05, 0.0), p(0.0, 0.0), p(-0.3, 0.3), p(0.3, 0.4));
        assert_eq!(model.four_point(&x, &y, &w, &x).unwrap(), 0.0);
        assert_eq!(model.four_point(&x, &y, &y, &z).unwrap(), 0.0);
        let k = model.four_point(&x, &y, &w, &z).unwrap();
        let swapped = model.four_point(&z, &y, &w, &x).unwrap();
        assert!((k + swapped).abs() < 1e-14 * k.abs());
    }

    #[test]
    fn kernel_table_csv() {
        let model = KernelModel::exact(ConductivityTensor::identity(3).unwrap()).unwrap();
        let flat = BoundaryPatch::flat(3, 2.0).unwrap();
        let pairs = vec![(flat.chart_eval(&[1.0, 0.0]).unwrap(), flat.chart_eval(&[0.0, 0.0]).unwrap())];
        let mut buf = Vec::new();
        model.write_table(&pairs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,y0,y1,n_value");
        let last: f64 = lines.next().unwrap().rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(last, 1.0 / (2.0 * PI));
    }
}
