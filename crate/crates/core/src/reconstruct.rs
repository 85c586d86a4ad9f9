//! Recovery of tangential metrics from scaled four-point kernel limits and
//! of the full metric from three non-flat tangent planes.

use std::io::Write;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conductivity::{sigma_from_metric, tensor_distance, ConductivityTensor, MetricTensor};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryPatch, CaseTag, NonFlatnessCertificate, SurfacePoint};
use crate::kernels::{dimensional_constant, BoundaryKernel};
use crate::linalg::{gram_schmidt, sym_eigen, unit};
use crate::ndmap::check_separations;
use crate::report::write_csv;

/// Geometric schedule `r_k = r₀ 2^{-k}` and the separation scale it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub d: f64,
    /// `r₀ / d`.
    pub r0_fraction: f64,
    /// Finest level `K`; the schedule has `K + 1` radii.
    pub levels: usize,
    /// Chart distance of the auxiliary points `w, z` as a fraction of `d`.
    pub far_fraction: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            d: 0.6,
            r0_fraction: 1.0 / 8.0,
            levels: 8,
            far_fraction: 1.0 / 3.0,
        }
    }
}

impl ScheduleSpec {
    pub fn radii(&self) -> Vec<f64> {
        let r0 = self.d * self.r0_fraction;
        (0..=self.levels).map(|k| r0 * 0.5f64.powi(k as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::Invalid("schedule needs at least one refinement level".into()));
        }
        if !(self.d > 0.0 && self.r0_fraction > 0.0 && self.far_fraction > 0.0) {
            return Err(Error::Invalid("schedule scales must be positive".into()));
        }
        Ok(())
    }
}

/// Exponents of the expansion `s(r) = s* + Σ b_j r^{p_j}`: integers for an
/// exact kernel, integers merged with `α + k` when a remainder is present.
pub fn expansion_exponents(alpha: Option<f64>, count: usize) -> Vec<f64> {
    let mut out: Vec<f64> = match alpha {
        None => (1..=count).map(|k| k as f64).collect(),
        Some(a) => {
            let mut v: Vec<f64> = (0..count).flat_map(|k| [k as f64 + a, k as f64 + 1.0]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
            v
        }
    };
    out.truncate(count);
    out
}

/// Limit at `r = 0` of samples `s_k` at radii `r_k` by solving for the known
/// exponents; the error estimate drops the largest radius and one exponent.
pub fn extrapolate(r: &[f64], s: &[f64], exponents: &[f64]) -> Result<(f64, f64)> {
    let limit = |r: &[f64], s: &[f64]| -> Result<f64> {
        let k = r.len();
        let p = &exponents[..k - 1];
        let a = DMatrix::from_fn(k, k, |i, j| if j == 0 { 1.0 } else { r[i].powf(p[j - 1]) });
        let sol = a
            .lu()
            .solve(&DVector::from_column_slice(s))
            .ok_or_else(|| Error::ExtrapolationUnreliable("singular extrapolation system".into()))?;
        Ok(sol[0])
    };
    if r.len() != s.len() || r.len() < 2 || exponents.len() + 1 < r.len() {
        return Err(Error::Invalid("extrapolation needs matching samples and enough exponents".into()));
    }
    let full = limit(r, s)?;
    let coarse = limit(&r[1..], &s[1..])?;
    Ok((full, (full - coarse).abs()))
}

/// Checks that successive increments shrink, ignoring round-off sized ones.
fn check_monotone(s: &[f64]) -> Result<()> {
    let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = 1e-11 * scale;
    let diffs: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    for (k, pair) in diffs.windows(2).enumerate() {
        if pair[1].abs() > noise && pair[1].abs() > 1.5 * pair[0].abs() {
            return Err(Error::ExtrapolationUnreliable(format!(
                "increments grow at k = {}: |s_{} - s_{}| = {:e} > |s_{} - s_{}| = {:e}; samples {s:?}",
                k + 1,
                k + 2,
                k + 1,
                pair[1].abs(),
                k + 1,
                k,
                pair[0].abs()
            )));
        }
    }
    Ok(())
}

/// One extrapolated quadratic-form value with its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FormEstimate {
    pub value: f64,
    pub error: f64,
    pub radii: Vec<f64>,
    pub samples: Vec<f64>,
}

/// Auxiliary points `y' ± c u` with `u ⊥ ξ'` in the chart.
fn far_pair(y: &[f64], xi: &[f64], dist: f64) -> (Vec<f64>, Vec<f64>) {
    let m = y.len();
    let xi_v = DVector::from_column_slice(xi);
    let mut spanning = vec![xi_v];
    spanning.extend((0..m).map(|i| unit(m, i)));
    let basis = gram_schmidt(&spanning);
    let u = &basis[1];
    let w = (0..m).map(|i| y[i] + dist * u[i]).collect();
    let z = (0..m).map(|i| y[i] - dist * u[i]).collect();
    (w, z)
}

/// `g(y)v·v` for a unit tangent `v` at `y` from `s_k = r_k^{n-2} K(x_k, y, w, z)`
/// with `x_k` the chart point over `y' + r_k v'`.
pub fn tangential_form<K: BoundaryKernel + ?Sized>(
    kernel: &K,
    patch: &BoundaryPatch,
    y: &SurfacePoint,
    v: &DVector<f64>,
    schedule: &ScheduleSpec,
) -> Result<FormEstimate> {
    schedule.validate()?;
    let n = patch.dim();
    let m = n - 1;
    if (v.norm() - 1.0).abs() > 1e-12 || v.dot(&y.normal).abs() > 1e-10 {
        return Err(Error::Precondition("direction must be a unit tangent vector at y".into()));
    }
    let xi: Vec<f64> = v.rows(0, m).iter().copied().collect();
    let (w_base, z_base) = far_pair(y.base.as_slice(), &xi, schedule.d * schedule.far_fraction);
    let w = patch.chart_eval(&w_base)?;
    let z = patch.chart_eval(&z_base)?;
    let radii = schedule.radii();
    let mut samples = Vec::with_capacity(radii.len());
    for &r in &radii {
        let xb: Vec<f64> = y.base.iter().zip(&xi).map(|(a, b)| a + r * b).collect();
        let x = patch.chart_eval(&xb)?;
        check_separations(patch, schedule.d, &x, y, &w, &z)?;
        samples.push(r.powi(n as i32 - 2) * kernel.four_point(&x, y, &w, &z)?);
    }
    check_monotone(&samples)?;
    let exponents = expansion_exponents(kernel.remainder_exponent(), radii.len() - 1);
    let (limit, err) = extrapolate(&radii, &samples, &exponents)?;
    let c = 2.0 * dimensional_constant(n)?;
    if !(limit > 0.0) {
        return Err(Error::ExtrapolationUnreliable(format!("non-positive limit {limit}")));
    }
    let p = 2.0 / (2.0 - n as f64);
    let value = (limit / c).powf(p);
    // d(value)/value = p · d(limit)/limit
    let error = (p * err / limit).abs() * value;
    debug!("tangential form at {:?}: {value} (err {error:e})", y.base.as_slice());
    Ok(FormEstimate {
        value,
        error,
        radii,
        samples,
    })
}

/// Tangential metric `{⟨g vᵢ, vⱼ⟩}` at one point.
#[derive(Debug, Clone)]
pub struct TangentialSample {
    pub point: SurfacePoint,
    pub frame: Vec<DVector<f64>>,
    pub matrix: DMatrix<f64>,
    pub errors: DMatrix<f64>,
    pub warnings: Vec<String>,
    /// Extrapolation traces, diagonal directions first, then `(i, j)` pairs.
    pub traces: Vec<((usize, usize), FormEstimate)>,
}

/// Entries along `vᵢ` and off-diagonals by polarization along `(vᵢ + vⱼ)/√2`.
pub fn tangential_matrix<K: BoundaryKernel + ?Sized>(
    kernel: &K,
    patch: &BoundaryPatch,
    point: &SurfacePoint,
    frame: &[DVector<f64>],
    schedule: &ScheduleSpec,
) -> Result<TangentialSample> {
    let k = frame.len();
    let mut matrix = DMatrix::zeros(k, k);
    let mut errors = DMatrix::zeros(k, k);
    let mut traces = Vec::new();
    for i in 0..k {
        let est = tangential_form(kernel, patch, point, &frame[i], schedule)?;
        matrix[(i, i)] = est.value;
        errors[(i, i)] = est.error;
        traces.push(((i, i), est));
    }
    for i in 0..k {
        for j in i + 1..k {
            let dir = (&frame[i] + &frame[j]) / std::f64::consts::SQRT_2;
            let est = tangential_form(kernel, patch, point, &dir, schedule)?;
            let off = est.value - 0.5 * (matrix[(i, i)] + matrix[(j, j)]);
            matrix[(i, j)] = off;
            matrix[(j, i)] = off;
            let e = est.error + 0.5 * (errors[(i, i)] + errors[(j, j)]);
            errors[(i, j)] = e;
            errors[(j, i)] = e;
            traces.push(((i, j), est));
        }
    }
    let mut warnings = Vec::new();
    let (ev, _) = sym_eigen(&matrix);
    if ev[0] <= 0.0 {
        let msg = format!("tangential matrix at {:?} is not positive definite", point.base.as_slice());
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(TangentialSample {
        point: point.clone(),
        frame: frame.to_vec(),
        matrix,
        errors,
        warnings,
        traces,
    })
}

/// `Tg` in `(k, i, j)` order.
pub fn assemble_t(g: &DMatrix<f64>, frames: &[Vec<DVector<f64>>; 3]) -> DVector<f64> {
    let mut out = Vec::new();
    for frame in frames {
        for vi in frame {
            let gv = g * vi;
            for vj in frame {
                out.push(gv.dot(vj));
            }
        }
    }
    DVector::from_vec(out)
}

/// Frobenius-orthonormal basis of `Sym_n`: `E_ii`, then `(E_ij + E_ji)/√2`.
pub fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        let mut e = DMatrix::zeros(n, n);
        e[(i, i)] = 1.0;
        out.push(e);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = s;
            e[(j, i)] = s;
            out.push(e);
        }
    }
    out
}

/// Matrix of `T` on the basis of [`sym_basis`].
pub fn t_matrix(frames: &[Vec<DVector<f64>>; 3]) -> DMatrix<f64> {
    let n = frames[0][0].len();
    let basis = sym_basis(n);
    let cols: Vec<DVector<f64>> = basis.iter().map(|b| assemble_t(b, frames)).collect();
    DMatrix::from_columns(&cols)
}

/// `1/s_min` of the `T` map.
pub fn t_injectivity_constant(frames: &[Vec<DVector<f64>>; 3]) -> Result<f64> {
    let svd = t_matrix(frames).svd(false, false);
    let s_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(s_min >= 1e-12) {
        return Err(Error::DegenerateFrames(s_min));
    }
    Ok(1.0 / s_min)
}

/// Reported outcome of a recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionResult {
    pub metric: MetricTensor,
    pub sigma: ConductivityTensor,
    pub case: CaseTag,
    /// Residual of the equation left out of the 2×2 solve.
    pub residual: f64,
    /// Largest extrapolation error estimate per certificate point.
    pub tangential_errors: [f64; 3],
    pub t_constant: f64,
    pub warnings: Vec<String>,
}

/// `⟨g p, q⟩` for tangent vectors `p, q` from a sample in frame `f`.
fn sample_form(sample: &DMatrix<f64>, frame: &[DVector<f64>], p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let cp = DVector::from_iterator(frame.len(), frame.iter().map(|f| f.dot(p)));
    let cq = DVector::from_iterator(frame.len(), frame.iter().map(|f| f.dot(q)));
    cp.dot(&(sample * cq))
}

/// Solves `𝒜G = F` in the given case for `G = (g_{n-1,n}, g_{n,n})`.
/// Returns `G` and the residual of the unused row.
pub fn solve_normal_block(gamma: [f64; 3], f: [f64; 3], case: CaseTag) -> Result<([f64; 2], f64)> {
    let [g1, g2, g3] = gamma;
    let (a, b, unused): ([f64; 4], [f64; 2], ([f64; 2], f64)) = match case {
        CaseTag::A => ([2.0, g1, 0.0, g3 * g3], [f[0], f[1]], ([2.0 * g2, g2 * g2], f[2])),
        CaseTag::B => ([2.0, g1, 2.0 * g2, g2 * g2], [f[0], f[2]], ([0.0, g3 * g3], f[1])),
        CaseTag::Infeasible => return Err(Error::Infeasible("no solvable case".into())),
    };
    let det = a[0] * a[3] - a[1] * a[2];
    if det.abs() < 1e-12 {
        return Err(Error::SingularCase(det));
    }
    let x0 = (b[0] * a[3] - a[1] * b[1]) / det;
    let x1 = (a[0] * b[1] - a[2] * b[0]) / det;
    let residual = unused.0[0] * x0 + unused.0[1] * x1 - unused.1;
    Ok(([x0, x1], residual))
}

/// Full metric from the three samples, taken on the certificate's tangent planes.
pub fn recover_full_metric(samples: &[TangentialSample; 3], cert: &NonFlatnessCertificate) -> Result<ReconstructionResult> {
    recover_with_case(samples, cert, cert.case)
}

/// As [`recover_full_metric`] with an explicit case.
pub fn recover_with_case(
    samples: &[TangentialSample; 3],
    cert: &NonFlatnessCertificate,
    case: CaseTag,
) -> Result<ReconstructionResult> {
    if case == CaseTag::Infeasible {
        return Err(Error::Infeasible(cert.reason.clone().unwrap_or_else(|| "infeasible certificate".into())));
    }
    let n = cert.rotation.nrows();
    let q = &cert.rotation;
    let [g1, g2, g3] = cert.gamma;
    let e = |i: usize| unit(n, i);
    // samples expressed in canonical coordinates
    let canon: Vec<(DMatrix<f64>, Vec<DVector<f64>>)> = samples
        .iter()
        .map(|s| (s.matrix.clone(), s.frame.iter().map(|v| q * v).collect()))
        .collect();
    let form = |k: usize, p: &DVector<f64>, r: &DVector<f64>| sample_form(&canon[k].0, &canon[k].1, p, r);

    let mut gc = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            gc[(i, j)] = form(0, &e(i), &e(j));
        }
    }
    let root = (1.0 + g1 * g1).sqrt();
    let u2 = (e(n - 2) + e(n - 1) * g1) / root;
    if g1.abs() < 1e-12 {
        return Err(Error::SingularCase(g1));
    }
    for i in 0..n - 2 {
        let v = (root * form(1, &e(i), &u2) - gc[(n - 2, i)]) / g1;
        gc[(i, n - 1)] = v;
        gc[(n - 1, i)] = v;
    }
    let f1 = ((1.0 + g1 * g1) * form(1, &u2, &u2) - gc[(n - 2, n - 2)]) / g1;
    let a3 = e(n - 3) + e(n - 1) * g3;
    let f2 = form(2, &a3, &a3) - gc[(n - 3, n - 3)] - 2.0 * g3 * gc[(n - 3, n - 1)];
    let b3 = e(n - 2) + e(n - 1) * g2;
    let f3 = form(2, &b3, &b3) - gc[(n - 2, n - 2)];
    let ([gnm1n, gnn], residual) = solve_normal_block(cert.gamma, [f1, f2, f3], case)?;
    gc[(n - 2, n - 1)] = gnm1n;
    gc[(n - 1, n - 2)] = gnm1n;
    gc[(n - 1, n - 1)] = gnn;

    let g = q.transpose() * gc * q;
    let g = (&g + g.transpose()) * 0.5;
    let metric = MetricTensor::new(g)?;
    let sigma = sigma_from_metric(&metric);
    let mut warnings: Vec<String> = cert.warnings.clone();
    for s in samples {
        warnings.extend(s.warnings.iter().cloned());
    }
    let tangential_errors = [0, 1, 2].map(|k| samples[k].errors.amax());
    let t_constant = t_injectivity_constant(&cert.ambient_frames()).unwrap_or(f64::INFINITY);
    Ok(ReconstructionResult {
        metric,
        sigma,
        case,
        residual,
        tangential_errors,
        t_constant,
        warnings,
    })
}

/// Samples at the three certificate points followed by the full recovery.
pub fn reconstruct<K: BoundaryKernel + ?Sized>(
    kernel: &K,
    patch: &BoundaryPatch,
    cert: &NonFlatnessCertificate,
    schedule: &ScheduleSpec,
) -> Result<(ReconstructionResult, [TangentialSample; 3])> {
    if !cert.is_feasible() {
        return Err(Error::Infeasible(cert.reason.clone().unwrap_or_default()));
    }
    let frames = cert.ambient_frames();
    let sample = |k: usize| tangential_matrix(kernel, patch, &cert.points[k], &frames[k], schedule);
    let samples = [sample(0)?, sample(1)?, sample(2)?];
    let result = recover_full_metric(&samples, cert)?;
    Ok((result, samples))
}

pub fn reconstruction_error(result: &ReconstructionResult, sigma_true: &ConductivityTensor) -> Result<f64> {
    tensor_distance(&result.sigma, sigma_true)
}

/// Extrapolation traces `(point, i, j, k, r_k, s_k)`.
pub fn write_traces_csv<W: Write>(out: W, samples: &[TangentialSample]) -> Result<()> {
    let mut rows = Vec::new();
    for (p, s) in samples.iter().enumerate() {
        for ((i, j), est) in &s.traces {
            for (k, (r, v)) in est.radii.iter().zip(&est.samples).enumerate() {
                rows.push(vec![p as f64, *i as f64, *j as f64, k as f64, *r, *v]);
            }
        }
    }
    write_csv(out, &["point", "i", "j", "k", "r", "s"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{certify_nonflat, frames_from_gamma};
    use crate::kernels::KernelModel;

    fn paraboloid_cert() -> (BoundaryPatch, NonFlatnessCertificate) {
        let par = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0).unwrap();
        let pts = [[0.0, 0.0], [0.0, 0.4], [0.4, 0.0]].map(|c| par.chart_eval(&c).unwrap());
        let cert = certify_nonflat(&par, pts, None);
        (par, cert)
    }

    #[test]
    fn extrapolation_recovers_polynomial_limit() {
        let r: Vec<f64> = (0..6).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let s: Vec<f64> = r.iter().map(|x| 3.0 - 2.0 * x + 5.0 * x * x - x.powi(4)).collect();
        let (lim, err) = extrapolate(&r, &s, &expansion_exponents(None, 5)).unwrap();
        assert!((lim - 3.0).abs() < 1e-13 && err < 1e-12);
        let s: Vec<f64> = r.iter().map(|x| 1.0 + 0.3 * x.sqrt() + x).collect();
        let (lim, _) = extrapolate(&r, &s, &expansion_exponents(Some(0.5), 5)).unwrap();
        assert!((lim - 1.0).abs() < 1e-13);
    }

    #[test]
    fn merged_exponents() {
        assert_eq!(expansion_exponents(Some(0.5), 5), vec![0.5, 1.0, 1.5, 2.0, 2.5]);
        assert_eq!(expansion_exponents(None, 3), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn growing_increments_are_rejected() {
        assert!(matches!(
            check_monotone(&[1.0, 1.1, 1.0, 1.5]),
            Err(Error::ExtrapolationUnreliable(_))
        ));
        assert!(check_monotone(&[1.0, 0.5, 0.25, 0.125]).is_ok());
    }

    #[test]
    fn identity_form_on_flat_patch() {
        let flat = BoundaryPatch::flat(3, 1.0).unwrap();
        let model = KernelModel::exact(ConductivityTensor::identity(3).unwrap()).unwrap();
        let y = flat.chart_eval(&[0.0, 0.0]).unwrap();
        for t in [0.0, 0.7, 2.0] {
            let v = DVector::from_vec(vec![f64::cos(t), f64::sin(t), 0.0]);
            let est = tangential_form(&model, &flat, &y, &v, &ScheduleSpec::default()).unwrap();
            assert!((est.value - 1.0).abs() < 1e-6, "{}", est.value);
        }
    }

    #[test]
    fn anisotropic_form_values() {
        let flat = BoundaryPatch::flat(3, 1.0).unwrap();
        let model = KernelModel::exact(ConductivityTensor::from_diagonal(&[4.0, 1.0, 1.0]).unwrap()).unwrap();
        let y = flat.chart_eval(&[0.1, 0.0]).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let s = ScheduleSpec::default();
        assert!((tangential_form(&model, &flat, &y, &e1, &s).unwrap().value - 1.0).abs() < 1e-6);
        assert!((tangential_form(&model, &flat, &y, &e2, &s).unwrap().value - 4.0).abs() < 4e-6);
    }

    #[test]
    fn polarization_arithmetic() {
        // forms 2, 1 on the axes and 2.0 on the diagonal give off-diagonal 0.5
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let d = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let q = d.dot(&(&g * &d));
        assert!((q - 2.0).abs() < 1e-15);
        assert!((q - (2.0 + 1.0) / 2.0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bypass_solve_is_exact() {
        let gamma = [1.0, 0.0, std::f64::consts::FRAC_1_SQRT_2];
        let g = [0.3, -0.2];
        let f1 = 2.0 * g[0] + gamma[0] * g[1];
        let f2 = gamma[2] * gamma[2] * g[1];
        assert!((f1 - 0.4).abs() < 1e-15 && (f2 + 0.1).abs() < 1e-15);
        let (sol, _) = solve_normal_block(gamma, [f1, f2, 0.0], CaseTag::A).unwrap();
        assert!((sol[0] - 0.3).abs() < 1e-14 && (sol[1] + 0.2).abs() < 1e-14);
        assert!(matches!(
            solve_normal_block([0.4, 0.0, 0.0], [0.0; 3], CaseTag::A),
            Err(Error::SingularCase(_))
        ));
    }

    #[test]
    fn t_map_blocks() {
        let (par, cert) = paraboloid_cert();
        let frames = cert.ambient_frames();
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 4.0]));
        let t = assemble_t(&g, &frames);
        assert_eq!(t.len(), 12);
        assert!((t[0] - 1.0).abs() < 1e-15 && (t[3] - 4.0).abs() < 1e-15 && t[1].abs() < 1e-15);
        for k in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    let direct = frames[k][i].dot(&(&g * &frames[k][j]));
                    assert!((t[4 * k + 2 * i + j] - direct).abs() < 1e-14);
                }
            }
        }
        let ti = assemble_t(&DMatrix::identity(3, 3), &frames);
        for k in 0..3 {
            assert!((ti[4 * k] - 1.0).abs() < 1e-14 && ti[4 * k + 1].abs() < 1e-14);
        }
        assert!(assemble_t(&DMatrix::zeros(3, 3), &frames).iter().all(|v| *v == 0.0));
        let _ = par;
    }

    #[test]
    fn t_injectivity() {
        let flat = BoundaryPatch::flat(3, 1.0).unwrap();
        let frames = [[0.0, 0.0], [0.0, 0.4], [0.4, 0.0]].map(|c| flat.tangent_frame(&flat.chart_eval(&c).unwrap()));
        assert!(matches!(t_injectivity_constant(&frames), Err(Error::DegenerateFrames(_))));
        // SVD oracle from an explicit eigen-decomposition of TᵀT
        let (_, cert) = paraboloid_cert();
        let c_t = t_injectivity_constant(&cert.ambient_frames()).unwrap();
        let t = t_matrix(&cert.ambient_frames());
        let (ev, _) = sym_eigen(&(t.transpose() * &t));
        assert!((c_t - 1.0 / ev[0].sqrt()).abs() < 1e-10 * c_t);
        let mut prev = 0.0;
        for g in [0.4, 0.2, 0.1] {
            let c = t_injectivity_constant(&frames_from_gamma(3, [g, 0.0, g])).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn identity_recovery_on_paraboloid() {
        let (par, cert) = paraboloid_cert();
        let model = KernelModel::exact(ConductivityTensor::identity(3).unwrap()).unwrap();
        let (res, _) = reconstruct(&model, &par, &cert, &ScheduleSpec::default()).unwrap();
        let err = reconstruction_error(&res, &ConductivityTensor::identity(3).unwrap()).unwrap();
        assert!(err < 1e-8, "{err}");
        assert!(res.residual.abs() < 1e-7);
        assert_eq!(res.case, CaseTag::A);
    }

    #[test]
    fn rotated_anisotropic_recovery() {
        let (par, cert) = paraboloid_cert();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let sigma = ConductivityTensor::from_diagonal(&[4.0, 1.0, 1.0]).unwrap().rotated(&r).unwrap();
        let model = KernelModel::exact(sigma.clone()).unwrap();
        let (res, _) = reconstruct(&model, &par, &cert, &ScheduleSpec::default()).unwrap();
        assert!(reconstruction_error(&res, &sigma).unwrap() < 1e-6);
        let back = sigma_from_metric(&res.metric);
        assert!((back.matrix() - res.sigma.matrix()).amax() < 1e-15);
    }

    #[test]
    fn error_matches_power_iteration() {
        let (par, cert) = paraboloid_cert();
        let truth = ConductivityTensor::from_diagonal(&[1.5, 1.0, 0.8]).unwrap();
        let model = KernelModel::new(
            truth.clone(),
            crate::kernels::KernelMode::Perturbed {
                amplitude: 0.05,
                exponent: 0.5,
                seed: 7,
            },
        )
        .unwrap();
        let (res, _) = reconstruct(&model, &par, &cert, &ScheduleSpec::default()).unwrap();
        let err = reconstruction_error(&res, &truth).unwrap();
        let diff = res.sigma.matrix() - truth.matrix();
        let mut v = DVector::from_vec(vec![1.0, 0.7, -0.3]);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = &diff * &v;
            lambda = w.norm();
            v = w / lambda;
        }
        assert!(err > 0.0);
        assert!((err - lambda).abs() < 1e-9 * err.max(1e-12), "{err} vs {lambda}");
    }

    #[test]
    fn traces_csv() {
        let (par, cert) = paraboloid_cert();
        let model = KernelModel::exact(ConductivityTensor::identity(3).unwrap()).unwrap();
        let (_, samples) = reconstruct(&model, &par, &cert, &ScheduleSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // 3 points × 3 directions × 7 radii
        assert_eq!(text.lines().count(), 1 + 3 * 3 * 9);
    }
}
