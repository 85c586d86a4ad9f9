//! Pairings of mollifier probes against boundary kernels and the probe
//! dictionary proxy `ε` for the distance between two N-D maps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPatch, SurfacePoint};
use crate::kernels::{BoundaryKernel, KernelDifference, KernelModel};
use crate::mollifier::{MollifierNodes, ProbeFunctional};
use crate::quadrature::PolarRule;
use crate::report::write_csv;

/// Largest admissible ratio `h = τ/|x − y|` (exclusive).
pub const H_MAX: f64 = 1.0 / 16.0;

/// Checks the separations `|x−y| ≤ d/4`, `|x−w|, |x−z|, |w−z| ≥ d/4` and
/// `d < (1+M)ρ`.
pub fn check_separations(
    patch: &BoundaryPatch,
    d: f64,
    x: &SurfacePoint,
    y: &SurfacePoint,
    w: &SurfacePoint,
    z: &SurfacePoint,
) -> Result<()> {
    let q = d / 4.0;
    let mut violated = Vec::new();
    let limit = (1.0 + patch.holder_constant()) * patch.radius();
    if !(d > 0.0 && d < limit) {
        violated.push(format!("0 < d < (1+M)rho fails: d = {d}, (1+M)rho = {limit}"));
    }
    let xy = x.distance(y);
    if xy > q {
        violated.push(format!("|x-y| = {xy} > d/4 = {q}"));
    }
    for (name, v) in [("|x-w|", x.distance(w)), ("|x-z|", x.distance(z)), ("|w-z|", w.distance(z))] {
        if v < q {
            violated.push(format!("{name} = {v} < d/4 = {q}"));
        }
    }
    if violated.is_empty() {
        Ok(())
    } else {
        Err(Error::Precondition(violated.join("; ")))
    }
}

/// One probe quadruple in chart coordinates together with its width ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeQuadruple {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub value: f64,
    /// `|value(rule) − value(rule halved)|`.
    pub error: f64,
    pub tau: f64,
    pub h: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

/// `Σᵢ Σⱼ aᵢ bⱼ N(ξᵢ, ηⱼ)`.
pub fn kernel_interaction<K: BoundaryKernel + ?Sized>(kernel: &K, a: &MollifierNodes, b: &MollifierNodes) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let (xi, xb) = (a.position(i), a.base(i));
        let mut row = 0.0;
        for j in 0..b.len() {
            row += b.weights[j] * kernel.eval_raw(xi, xb, b.position(j), b.base(j));
        }
        total += a.weights[i] * row;
    }
    total
}

/// `⟨ψ₁, N ψ₂⟩` for `ψ₁ = δ_x − δ_z`, `ψ₂ = δ_y − δ_w`.
pub fn pair_probes<K: BoundaryKernel + ?Sized>(kernel: &K, psi1: &ProbeFunctional, psi2: &ProbeFunctional) -> f64 {
    let (Some(z), Some(w)) = (&psi1.minus, &psi2.minus) else {
        return 0.0;
    };
    let x = &psi1.plus;
    let y = &psi2.plus;
    kernel_interaction(kernel, x, y) - kernel_interaction(kernel, x, w) - kernel_interaction(kernel, z, y)
        + kernel_interaction(kernel, z, w)
}

struct Prepared {
    tau: f64,
    psi1: ProbeFunctional,
    psi2: ProbeFunctional,
    coarse1: ProbeFunctional,
    coarse2: ProbeFunctional,
}

fn prepare(patch: &BoundaryPatch, d: f64, quad: &ProbeQuadruple, rule: &PolarRule) -> Result<Prepared> {
    if !(quad.h > 0.0 && quad.h < H_MAX) {
        return Err(Error::Precondition(format!("h = {} must lie in (0, 1/16)", quad.h)));
    }
    let [x, y, w, z] = [&quad.x, &quad.y, &quad.w, &quad.z].map(|c| patch.chart_eval(c));
    let (x, y, w, z) = (x?, y?, w?, z?);
    check_separations(patch, d, &x, &y, &w, &z)?;
    let tau = quad.h * x.distance(&y);
    let coarse = rule.halved();
    Ok(Prepared {
        tau,
        psi1: ProbeFunctional::new(patch, &quad.x, &quad.z, tau, rule)?,
        psi2: ProbeFunctional::new(patch, &quad.y, &quad.w, tau, rule)?,
        coarse1: ProbeFunctional::new(patch, &quad.x, &quad.z, tau, &coarse)?,
        coarse2: ProbeFunctional::new(patch, &quad.y, &quad.w, tau, &coarse)?,
    })
}

/// Double surface quadrature of the kernel against the two probe differences.
pub fn probe_pairing<K: BoundaryKernel + ?Sized>(
    kernel: &K,
    patch: &BoundaryPatch,
    d: f64,
    quad: &ProbeQuadruple,
    rule: &PolarRule,
) -> Result<PairingResult> {
    let p = prepare(patch, d, quad, rule)?;
    let value = pair_probes(kernel, &p.psi1, &p.psi2);
    let coarse = pair_probes(kernel, &p.coarse1, &p.coarse2);
    if !value.is_finite() {
        return Err(Error::Quadrature("probe pairing is not finite".into()));
    }
    Ok(PairingResult {
        value,
        error: (value - coarse).abs(),
        tau: p.tau,
        h: quad.h,
        x: quad.x.clone(),
        y: quad.y.clone(),
        w: quad.w.clone(),
        z: quad.z.clone(),
    })
}

/// Settings of the default dictionary generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionarySpec {
    /// Separation scale `d`.
    pub d: f64,
    /// Chart radius of the near satellites as a fraction of `d`.
    pub near_fraction: f64,
    /// Chart radius of the far satellites as a fraction of `d`.
    pub far_fraction: f64,
    pub directions: usize,
    pub h_values: Vec<f64>,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            d: 0.6,
            near_fraction: 1.0 / 8.0,
            far_fraction: 1.0 / 3.0,
            directions: 4,
            h_values: vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDictionary {
    pub d: f64,
    pub entries: Vec<ProbeQuadruple>,
}

/// Unit directions in `ℝ^m`: `count` angles in the first coordinate plane,
/// then `±e_k` for the remaining axes.
pub fn satellite_directions(m: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..count {
        let t = std::f64::consts::TAU * a as f64 / count as f64;
        let mut v = vec![0.0; m];
        v[0] = t.cos();
        if m > 1 {
            v[1] = t.sin();
        }
        out.push(v);
    }
    for k in 2..m {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; m];
            v[k] = s;
            out.push(v);
        }
    }
    out
}

impl ProbeDictionary {
    /// Quadruples with `y` a center, `x` a near satellite of `y` and `w ≠ z`
    /// far satellites, kept when all separations hold and every support of
    /// the largest width fits in the chart.
    pub fn generate(patch: &BoundaryPatch, centers: &[Vec<f64>], spec: &DictionarySpec) -> Result<Self> {
        let m = patch.dim() - 1;
        let dirs = satellite_directions(m, spec.directions);
        let h_max = spec.h_values.iter().copied().fold(0.0, f64::max);
        let mut entries = Vec::new();
        let offset = |c: &[f64], u: &[f64], r: f64| -> Vec<f64> { c.iter().zip(u).map(|(a, b)| a + r * b).collect() };
        for c in centers {
            let near: Vec<Vec<f64>> = dirs.iter().map(|u| offset(c, u, spec.d * spec.near_fraction)).collect();
            let far: Vec<Vec<f64>> = dirs.iter().map(|u| offset(c, u, spec.d * spec.far_fraction)).collect();
            let Ok(py) = patch.chart_eval(c) else { continue };
            for x in &near {
                let Ok(px) = patch.chart_eval(x) else { continue };
                let tau = h_max * px.distance(&py);
                if !patch.contains_disk(x, tau) || !patch.contains_disk(c, tau) {
                    continue;
                }
                for (iw, w) in far.iter().enumerate() {
                    for (iz, z) in far.iter().enumerate() {
                        if iw == iz || !patch.contains_disk(w, tau) || !patch.contains_disk(z, tau) {
                            continue;
                        }
                        let (Ok(pw), Ok(pz)) = (patch.chart_eval(w), patch.chart_eval(z)) else {
                            continue;
                        };
                        if check_separations(patch, spec.d, &px, &py, &pw, &pz).is_err() {
                            continue;
                        }
                        for &h in &spec.h_values {
                            entries.push(ProbeQuadruple {
                                x: x.clone(),
                                y: c.clone(),
                                w: w.clone(),
                                z: z.clone(),
                                h,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self { d: spec.d, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One dictionary element of the `ε` computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyRecord {
    pub pairing: PairingResult,
    pub norm1: f64,
    pub norm2: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyResult {
    pub epsilon: f64,
    pub argmax: usize,
    /// Largest pairing quadrature error over the dictionary.
    pub error_floor: f64,
    pub records: Vec<ProxyRecord>,
}

/// `ε = max |⟨ψ₁,(N₁−N₂)ψ₂⟩| / (‖ψ₁‖‖ψ₂‖)` over the dictionary, reduced in
/// dictionary order.
pub fn nd_difference_proxy(
    first: &KernelModel,
    second: &KernelModel,
    patch: &BoundaryPatch,
    dictionary: &ProbeDictionary,
    rule: &PolarRule,
) -> Result<ProxyResult> {
    if dictionary.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let diff = KernelDifference::new(first, second)?;
    let records: Vec<ProxyRecord> = dictionary
        .entries
        .par_iter()
        .map(|quad| -> Result<ProxyRecord> {
            let p = prepare(patch, dictionary.d, quad, rule)?;
            let value = pair_probes(&diff, &p.psi1, &p.psi2);
            let coarse = pair_probes(&diff, &p.coarse1, &p.coarse2);
            let norm1 = p.psi1.norm()?;
            let norm2 = p.psi2.norm()?;
            let ratio = if norm1 > 0.0 && norm2 > 0.0 {
                value.abs() / (norm1 * norm2)
            } else {
                0.0
            };
            Ok(ProxyRecord {
                pairing: PairingResult {
                    value,
                    error: (value - coarse).abs(),
                    tau: p.tau,
                    h: quad.h,
                    x: quad.x.clone(),
                    y: quad.y.clone(),
                    w: quad.w.clone(),
                    z: quad.z.clone(),
                },
                norm1,
                norm2,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    let mut argmax = 0;
    for (i, r) in records.iter().enumerate() {
        if r.ratio > records[argmax].ratio {
            argmax = i;
        }
    }
    let error_floor = records
        .iter()
        .map(|r| r.pairing.error / (r.norm1 * r.norm2).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(ProxyResult {
        epsilon: records[argmax].ratio,
        argmax,
        error_floor,
        records,
    })
}

/// Pairing rows `(x', y', w', z', τ, value, err)`.
pub fn write_pairings_csv<W: Write>(out: W, pairings: &[PairingResult]) -> Result<()> {
    let m = pairings.first().map_or(0, |p| p.x.len());
    let mut header: Vec<String> = Vec::new();
    for name in ["x", "y", "w", "z"] {
        header.extend((0..m).map(|i| format!("{name}{i}")));
    }
    header.extend(["tau", "value", "err"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        out,
        &header,
        pairings.iter().map(|p| {
            let mut row: Vec<f64> = [&p.x, &p.y, &p.w, &p.z].into_iter().flatten().copied().collect();
            row.extend([p.tau, p.value, p.error]);
            row
        }),
    )
}

/// Convenience: the four-point kernel at chart coordinates.
pub fn four_point_at<K: BoundaryKernel + ?Sized>(kernel: &K, patch: &BoundaryPatch, quad: &ProbeQuadruple) -> Result<f64> {
    let x = patch.chart_eval(&quad.x)?;
    let y = patch.chart_eval(&quad.y)?;
    let w = patch.chart_eval(&quad.w)?;
    let z = patch.chart_eval(&quad.z)?;
    kernel.four_point(&x, &y, &w, &z)
}
