//! JSON experiment configuration shared by every subcommand.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conductivity::ConductivityTensor;
use crate::error::{Error, Result};
use crate::geometry::{certify_nonflat, BoundaryPatch, ChartKind, NonFlatnessCertificate};
use crate::kernels::{KernelMode, KernelModel};
use crate::ndmap::{DictionarySpec, ProbeDictionary};
use crate::quadrature::PolarRule;
use crate::reconstruct::ScheduleSpec;
use crate::stability::log_grid;

pub const CONFIG_VERSION: u32 = 1;

fn default_holder_exponent() -> f64 {
    0.5
}

fn default_holder_constant() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatchSpec {
    Flat {
        dim: usize,
        radius: f64,
        #[serde(default = "default_holder_exponent")]
        holder_exponent: f64,
        #[serde(default = "default_holder_constant")]
        holder_constant: f64,
    },
    /// `φ(x') = ½ x'ᵀ A x'`, given either as `curvature` (A = a·I) or a full `hessian`.
    Paraboloid {
        dim: usize,
        radius: f64,
        #[serde(default)]
        curvature: Option<f64>,
        #[serde(default)]
        hessian: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_holder_exponent")]
        holder_exponent: f64,
        #[serde(default = "default_holder_constant")]
        holder_constant: f64,
    },
    SphereCap {
        dim: usize,
        radius: f64,
        sphere_radius: f64,
        #[serde(default = "default_holder_exponent")]
        holder_exponent: f64,
        #[serde(default = "default_holder_constant")]
        holder_constant: f64,
    },
}

impl PatchSpec {
    pub fn dim(&self) -> usize {
        match self {
            PatchSpec::Flat { dim, .. } | PatchSpec::Paraboloid { dim, .. } | PatchSpec::SphereCap { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<BoundaryPatch> {
        match self {
            PatchSpec::Flat {
                dim,
                radius,
                holder_exponent,
                holder_constant,
            } => BoundaryPatch::new(*dim, *radius, *holder_exponent, *holder_constant, ChartKind::Flat),
            PatchSpec::Paraboloid {
                dim,
                radius,
                curvature,
                hessian,
                holder_exponent,
                holder_constant,
            } => {
                if *dim < 3 {
                    return Err(Error::UnsupportedDimension(*dim));
                }
                let m = dim - 1;
                let a = match (curvature, hessian) {
                    (Some(c), None) => DMatrix::identity(m, m) * *c,
                    (None, Some(rows)) => {
                        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                            return Err(Error::DimensionMismatch {
                                expected: m,
                                got: rows.len(),
                            });
                        }
                        DMatrix::from_fn(m, m, |i, j| rows[i][j])
                    }
                    _ => {
                        return Err(Error::Config(
                            "patch: paraboloid needs exactly one of `curvature` or `hessian`".into(),
                        ))
                    }
                };
                BoundaryPatch::new(*dim, *radius, *holder_exponent, *holder_constant, ChartKind::Paraboloid(a))
            }
            PatchSpec::SphereCap {
                dim,
                radius,
                sphere_radius,
                holder_exponent,
                holder_constant,
            } => BoundaryPatch::new(
                *dim,
                *radius,
                *holder_exponent,
                *holder_constant,
                ChartKind::SphereCap(*sphere_radius),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Rule for mollifier masses.
    pub mollifier: PolarRule,
    /// Rule for the probe pairings behind the proxy `ε`.
    pub pairing: PolarRule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            mollifier: PolarRule::default(),
            pairing: PolarRule {
                radial_order: 12,
                angular_count: 16,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Symmetric direction `Δ`, rescaled to unit spectral norm.
    pub direction: Vec<Vec<f64>>,
    #[serde(default)]
    pub t_values: Option<Vec<f64>>,
    #[serde(default)]
    pub t_log_range: Option<LogRange>,
}

impl PerturbationSpec {
    pub fn direction_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        if self.direction.len() != n || self.direction.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("perturbation.direction: expected a {n}x{n} matrix")));
        }
        let d = DMatrix::from_fn(n, n, |i, j| self.direction[i][j]);
        crate::linalg::symmetrize(&d).map_err(|e| Error::Config(format!("perturbation.direction: {e}")))
    }

    pub fn t_grid(&self) -> Result<Vec<f64>> {
        match (&self.t_values, &self.t_log_range) {
            (Some(t), None) => Ok(t.clone()),
            (None, Some(r)) => Ok(log_grid(r.min, r.max, r.count)),
            _ => Err(Error::Config(
                "perturbation: give exactly one of `t_values` or `t_log_range`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MollCheckSpec {
    /// Chart coordinate of the mollifier center, origin when absent.
    pub center: Option<Vec<f64>>,
    /// Widths `τ`; five log-spaced values in `[1e-3, 1e-1]·ρ` when absent.
    pub tau_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub mass: f64,
    pub slope: f64,
    /// Upper bound on the recovery error; `recover` always exits 0 when absent.
    pub recover: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass: 1e-6,
            slope: 0.05,
            recover: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub patch: PatchSpec,
    pub sigma: ConductivityTensor,
    /// Reference for the recovery error, `sigma` when absent.
    #[serde(default)]
    pub sigma_true: Option<ConductivityTensor>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    /// Chart coordinates of `P₁, P₂, P₃`.
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelMode,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    /// Dictionary centers, the three certificate points when absent.
    #[serde(default)]
    pub dictionary_centers: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub moll_check: MollCheckSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_kernel() -> KernelMode {
    KernelMode::Exact
}

fn cfg_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::report::to_json(self)
    }

    /// Checks everything that does not need the pipeline to run.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(cfg_err("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version)));
        }
        let patch = self.patch.build().map_err(|e| cfg_err("patch", e))?;
        let n = patch.dim();
        let m = n - 1;
        let check_dim = |field: &str, s: &ConductivityTensor| {
            if s.dim() != n {
                Err(cfg_err(field, format!("expected a {n}x{n} tensor, got {0}x{0}", s.dim())))
            } else {
                Ok(())
            }
        };
        check_dim("sigma", &self.sigma)?;
        if let Some(s) = &self.sigma_true {
            check_dim("sigma_true", s)?;
        }
        if self.points.len() != 3 {
            return Err(cfg_err("points", format!("expected 3 points, got {}", self.points.len())));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != m {
                return Err(cfg_err(&format!("points[{i}]"), format!("expected {m} coordinates")));
            }
            patch.chart_eval(p).map_err(|e| cfg_err(&format!("points[{i}]"), e))?;
        }
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0 && c0 < 1.0) {
                return Err(cfg_err("c0", "must lie in (0, 1)"));
            }
        }
        KernelModel::new(self.sigma.clone(), self.kernel).map_err(|e| cfg_err("kernel", e))?;
        for (field, rule) in [("quadrature.mollifier", self.quadrature.mollifier), ("quadrature.pairing", self.quadrature.pairing)] {
            PolarRule::new(rule.radial_order, rule.angular_count).map_err(|e| cfg_err(field, e))?;
        }
        self.schedule.validate().map_err(|e| cfg_err("schedule", e))?;
        let ds = &self.dictionary;
        if !(ds.d > 0.0 && ds.near_fraction > 0.0 && ds.far_fraction > 0.0 && ds.directions > 0) {
            return Err(cfg_err("dictionary", "scales and direction count must be positive"));
        }
        if ds.h_values.is_empty() || ds.h_values.iter().any(|&h| !(h > 0.0 && h <= crate::ndmap::H_MAX)) {
            return Err(cfg_err("dictionary.h_values", "need values in (0, 1/16]"));
        }
        if let Some(centers) = &self.dictionary_centers {
            if centers.iter().any(|c| c.len() != m) {
                return Err(cfg_err("dictionary_centers", format!("expected {m} coordinates each")));
            }
        }
        if let Some(p) = &self.perturbation {
            p.direction_matrix(n)?;
            let grid = p.t_grid()?;
            if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(cfg_err("perturbation", "t values must be finite and nonnegative"));
            }
            if let Some(r) = p.t_log_range {
                if !(r.min > 0.0 && r.max >= r.min && r.count > 0) {
                    return Err(cfg_err("perturbation.t_log_range", "need 0 < min <= max and count > 0"));
                }
            }
        }
        let center = self.moll_center();
        if center.len() != m {
            return Err(cfg_err("moll_check.center", format!("expected {m} coordinates")));
        }
        if self.tau_values().len() < 2 {
            return Err(cfg_err("moll_check.tau_values", "need at least two widths to fit a slope"));
        }
        for tau in self.tau_values() {
            if !(tau > 0.0) || !patch.contains_disk(&center, tau) {
                return Err(cfg_err(
                    "moll_check.tau_values",
                    format!("support of width {tau} around {center:?} leaves the chart"),
                ));
            }
        }
        let t = self.tolerances;
        if !(t.mass > 0.0 && t.slope > 0.0 && t.recover.map_or(true, |r| r > 0.0)) {
            return Err(cfg_err("tolerances", "must be positive"));
        }
        Ok(())
    }

    pub fn patch(&self) -> Result<BoundaryPatch> {
        self.patch.build()
    }

    pub fn certificate(&self, patch: &BoundaryPatch) -> Result<NonFlatnessCertificate> {
        let p = |i: usize| patch.chart_eval(&self.points[i]);
        Ok(certify_nonflat(patch, [p(0)?, p(1)?, p(2)?], self.c0))
    }

    pub fn model(&self, sigma: &ConductivityTensor) -> Result<KernelModel> {
        KernelModel::new(sigma.clone(), self.kernel)
    }

    pub fn dictionary(&self, patch: &BoundaryPatch) -> Result<ProbeDictionary> {
        let centers = self.dictionary_centers.clone().unwrap_or_else(|| self.points.clone());
        let dict = ProbeDictionary::generate(patch, &centers, &self.dictionary)?;
        if dict.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        Ok(dict)
    }

    pub fn moll_center(&self) -> Vec<f64> {
        self.moll_check
            .center
            .clone()
            .unwrap_or_else(|| vec![0.0; self.patch.dim().saturating_sub(1)])
    }

    pub fn tau_values(&self) -> Vec<f64> {
        let rho = match &self.patch {
            PatchSpec::Flat { radius, .. } | PatchSpec::Paraboloid { radius, .. } | PatchSpec::SphereCap { radius, .. } => {
                *radius
            }
        };
        self.moll_check
            .tau_values
            .clone()
            .unwrap_or_else(|| log_grid(1e-3 * rho, 1e-1 * rho, 5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "patch": {"kind": "paraboloid", "dim": 3, "radius": 1.0, "curvature": 1.0},
        "sigma": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "points": [[0.0, 0.0], [0.0, 0.4], [0.4, 0.0]]
    }"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.kernel, KernelMode::Exact);
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("\"version\": 1,", "\"version\": 1, \"sigmaa\": 3,");
        let msg = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("sigmaa") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn bad_values_are_rejected_with_field() {
        let text = MINIMAL.replace("[0.4, 0.0]]", "[0.4, 0.0, 1.0]]");
        let msg = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("points[2]"), "{msg}");
        let text = MINIMAL.replace("\"points\"", "\"moll_check\": {\"tau_values\": [0.5, 0.25]}, \"points\"");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.tau_values(), vec![0.5, 0.25]);
        let text = MINIMAL.replace("\"points\"", "\"moll_check\": {\"tau_values\": [1.5]}, \"points\"");
        let msg = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("tau_values"), "{msg}");
        let text = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
