//! Perturbation sweeps and the empirical check of the Hölder bound
//! `‖σ₁ − σ₂‖ ≤ C E^{1−β} ε^β`, `β = 1/(n−1)`.

use std::io::Write;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conductivity::{tensor_distance, ConductivityTensor};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryPatch, NonFlatnessCertificate};
use crate::kernels::{BoundaryKernel, KernelDifference, KernelMode, KernelModel};
use crate::linalg::sym_spectral_norm;
use crate::ndmap::{nd_difference_proxy, ProbeDictionary};
use crate::quadrature::PolarRule;
use crate::reconstruct::{reconstruct, ScheduleSpec};
use crate::report::write_csv;

/// Upper end of the admissible `h` range.
pub const H_CAP: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HOptimum {
    pub h: f64,
    pub bound: f64,
    pub unconstrained_h: f64,
    pub clipped: bool,
}

/// Minimizes `f(h) = ε h^{2−n} + E h` over `(0, 1/16]`.
pub fn h_optimize(eps: f64, e: f64, n: usize) -> Result<HOptimum> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if !(eps > 0.0 && e > 0.0) {
        return Err(Error::Invalid(format!("eps and E must be positive, got {eps}, {e}")));
    }
    let nf = n as f64;
    let hu = ((nf - 2.0) * eps / e).powf(1.0 / (nf - 1.0));
    let clipped = hu > H_CAP;
    let h = hu.min(H_CAP);
    Ok(HOptimum {
        h,
        bound: eps * h.powf(2.0 - nf) + e * h,
        unconstrained_h: hu,
        clipped,
    })
}

/// `E^{1−β} ε^β`.
pub fn holder_term(e: f64, eps: f64, beta: f64) -> f64 {
    e.powf(1.0 - beta) * eps.powf(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub t: f64,
    /// `‖σ₁ − σ₂‖`.
    pub e: f64,
    pub epsilon: f64,
    /// Distance between the two recovered conductivities at `P₁`.
    pub delta: f64,
    /// `max |x−y|^{n−2} |K₁ − K₂|` over the dictionary.
    pub k_level: f64,
    /// `ε` lies within ten times the pairing quadrature floor.
    pub near_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub dim: usize,
    pub beta: f64,
    pub records: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

/// Everything a sweep needs besides `σ₁`, `Δ` and the grid.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub patch: &'a BoundaryPatch,
    pub certificate: &'a NonFlatnessCertificate,
    pub mode: KernelMode,
    pub dictionary: &'a ProbeDictionary,
    pub pairing_rule: PolarRule,
    pub schedule: ScheduleSpec,
}

/// Log-spaced grid of `count` values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Runs the pipeline on `σ₁` and on `σ₁ + tΔ` for each `t`.
pub fn perturb_sweep(
    sigma1: &ConductivityTensor,
    direction: &DMatrix<f64>,
    t_grid: &[f64],
    setup: &SweepSetup<'_>,
) -> Result<StabilityRun> {
    let n = sigma1.dim();
    if direction.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: direction.nrows(),
        });
    }
    let norm = sym_spectral_norm(direction);
    if !(norm > 0.0) {
        return Err(Error::Invalid("perturbation direction must be nonzero".into()));
    }
    let delta_dir = direction / norm;
    let beta = 1.0 / (n as f64 - 1.0);
    let m1 = KernelModel::new(sigma1.clone(), setup.mode)?;
    let mut reference = None;
    let mut records = Vec::with_capacity(t_grid.len());
    let mut warnings = Vec::new();
    for &t in t_grid {
        if t == 0.0 {
            records.push(SweepRecord {
                t,
                e: 0.0,
                epsilon: 0.0,
                delta: 0.0,
                k_level: 0.0,
                near_floor: false,
            });
            continue;
        }
        let sigma2 = match ConductivityTensor::new(sigma1.matrix() + &delta_dir * t) {
            Ok(s) => s,
            Err(e) => {
                let msg = format!("grid truncated at t = {t}: {e}");
                warn!("{msg}");
                warnings.push(msg);
                break;
            }
        };
        let m2 = KernelModel::new(sigma2.clone(), setup.mode)?;
        let e = tensor_distance(sigma1, &sigma2)?;
        let proxy = nd_difference_proxy(&m1, &m2, setup.patch, setup.dictionary, &setup.pairing_rule)?;
        if reference.is_none() {
            reference = Some(reconstruct(&m1, setup.patch, setup.certificate, &setup.schedule)?.0);
        }
        let first = reference.as_ref().expect("reference reconstruction");
        let (second, _) = reconstruct(&m2, setup.patch, setup.certificate, &setup.schedule)?;
        let delta = tensor_distance(&first.sigma, &second.sigma)?;
        let k_level = k_level(&m1, &m2, setup.patch, setup.dictionary)?;
        let near_floor = proxy.epsilon <= 10.0 * proxy.error_floor;
        if near_floor {
            warnings.push(format!("t = {t}: eps = {:e} is within 10x of the quadrature floor", proxy.epsilon));
        }
        info!("t = {t:e}: E = {e:e}, eps = {:e}, delta = {delta:e}", proxy.epsilon);
        records.push(SweepRecord {
            t,
            e,
            epsilon: proxy.epsilon,
            delta,
            k_level,
            near_floor,
        });
    }
    Ok(StabilityRun {
        dim: n,
        beta,
        records,
        warnings,
    })
}

/// `max |x−y|^{n−2} |(K₁ − K₂)(x,y,w,z)|` over the distinct dictionary quadruples.
pub fn k_level(m1: &KernelModel, m2: &KernelModel, patch: &BoundaryPatch, dictionary: &ProbeDictionary) -> Result<f64> {
    let diff = KernelDifference::new(m1, m2)?;
    let n = patch.dim();
    let mut best = 0.0f64;
    let mut last: Option<[&Vec<f64>; 4]> = None;
    for q in &dictionary.entries {
        let key = [&q.x, &q.y, &q.w, &q.z];
        if last == Some(key) {
            continue;
        }
        last = Some(key);
        let x = patch.chart_eval(&q.x)?;
        let y = patch.chart_eval(&q.y)?;
        let w = patch.chart_eval(&q.w)?;
        let z = patch.chart_eval(&q.z)?;
        let k = diff.four_point(&x, &y, &w, &z)?;
        best = best.max(x.distance(&y).powi(n as i32 - 2) * k.abs());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderFit {
    pub beta: f64,
    /// Least-squares slope of `log δ` against `log ε`.
    pub beta_fit: f64,
    /// `max δ / (E^{1−β} ε^β)`.
    pub c_fit: f64,
    /// Largest ratio over the ratio at the largest `ε`.
    pub growth: f64,
    pub bound_holds: bool,
    pub records_used: usize,
}

/// Slack on `β_fit ≥ β` and the permitted growth of the ratio toward small `ε`.
pub const BETA_SLACK: f64 = 0.05;
pub const GROWTH_LIMIT: f64 = 10.0;

pub fn holder_fit(run: &StabilityRun) -> Result<HolderFit> {
    let used: Vec<&SweepRecord> = run.records.iter().filter(|r| r.epsilon > 0.0 && r.delta > 0.0).collect();
    if used.len() < 4 {
        return Err(Error::DegenerateGrid(format!(
            "need at least 4 records with positive eps and delta, got {}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.delta.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-24) {
        return Err(Error::DegenerateGrid("all eps values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta_fit = sxy / sxx;
    let beta = run.beta;
    let ratios: Vec<f64> = used.iter().map(|r| r.delta / holder_term(r.e, r.epsilon, beta)).collect();
    let c_fit = ratios.iter().copied().fold(0.0, f64::max);
    let top = used
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.epsilon.total_cmp(&b.1.epsilon))
        .map(|(i, _)| i)
        .expect("nonempty");
    let growth = c_fit / ratios[top];
    let bound_holds = c_fit.is_finite() && beta_fit >= beta - BETA_SLACK && growth < GROWTH_LIMIT;
    Ok(HolderFit {
        beta,
        beta_fit,
        c_fit,
        growth,
        bound_holds,
        records_used: used.len(),
    })
}

/// Sweep rows `(t, E, ε, δ, bound, k_level, near_floor)` with
/// `bound = C_fit E^{1−β} ε^β`.
pub fn write_sweep_csv<W: Write>(out: W, run: &StabilityRun, fit: Option<&HolderFit>) -> Result<()> {
    let c = fit.map_or(1.0, |f| f.c_fit);
    write_csv(
        out,
        &["t", "E", "eps", "delta", "bound", "k_level", "near_floor"],
        run.records.iter().map(|r| {
            vec![
                r.t,
                r.e,
                r.epsilon,
                r.delta,
                c * holder_term(r.e, r.epsilon, run.beta),
                r.k_level,
                if r.near_floor { 1.0 } else { 0.0 },
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> StabilityRun {
        let eps = log_grid(1e-6, 1e-2, 8);
        StabilityRun {
            dim: 3,
            beta: 0.5,
            records: eps
                .iter()
                .map(|&x| SweepRecord {
                    t: x,
                    e: 1.0,
                    epsilon: x,
                    delta: f(x),
                    k_level: 0.0,
                    near_floor: false,
                })
                .collect(),
            warnings: vec![],
        }
    }

    #[test]
    fn h_optimize_examples() {
        let a = h_optimize(1.0, 1.0, 3).unwrap();
        assert!(a.clipped && a.h == 1.0 / 16.0);
        assert!((a.bound - (16.0 + 1.0 / 16.0)).abs() < 1e-12);
        let b = h_optimize(1e-6, 1.0, 3).unwrap();
        assert!((b.h - 1e-3).abs() < 1e-15 && (b.bound - 2e-3).abs() < 1e-15);
        let (eps, e) = (3e-7, 0.2);
        let lhs = h_optimize(eps, e, 4).unwrap().bound;
        let rhs = e * h_optimize(eps / e, 1.0, 4).unwrap().bound;
        assert!((lhs - rhs).abs() < 1e-14 * lhs);
        assert!(h_optimize(0.0, 1.0, 3).is_err() && h_optimize(1.0, -1.0, 3).is_err());
    }

    #[test]
    fn fit_examples() {
        let f = holder_fit(&synthetic(|x| x.sqrt())).unwrap();
        assert!((f.beta_fit - 0.5).abs() < 1e-12 && (f.c_fit - 1.0).abs() < 1e-12 && f.bound_holds);
        let f = holder_fit(&synthetic(|x| x)).unwrap();
        assert!((f.beta_fit - 1.0).abs() < 1e-12 && f.bound_holds);
        let f = holder_fit(&synthetic(|x| x.powf(0.2))).unwrap();
        assert!(!f.bound_holds && f.growth > 10.0);
    }

    #[test]
    fn degenerate_grids() {
        let mut run = synthetic(|x| x);
        for r in &mut run.records {
            r.epsilon = 1e-3;
        }
        assert!(matches!(holder_fit(&run), Err(Error::DegenerateGrid(_))));
        run.records.truncate(3);
        assert!(matches!(holder_fit(&run), Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e-1, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[7] - 1e-1).abs() < 1e-15);
    }
}
