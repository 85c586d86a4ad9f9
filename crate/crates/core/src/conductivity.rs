//! Conductivity and metric tensors and the exact transforms between them.
//!
//! For `n > 2` the metric `g = (det σ)^{1/(n-2)} σ^{-1}` carries the same
//! information as σ, with inverse `σ = (det g)^{1/2} g^{-1}`. Both tensors
//! are stored together with their eigen-decomposition, which doubles as the
//! positive-definiteness check and the inversion route.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{spectral_apply, sym_eigen, sym_spectral_norm, symmetrize};

/// Validated symmetric positive-definite matrix with cached spectrum.
#[derive(Debug, Clone, PartialEq)]
struct SpdMatrix {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpdMatrix {
    fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n < 3 {
            return Err(Error::UnsupportedDimension(n));
        }
        let entries = symmetrize(&entries)?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite tensor entry".into()));
        }
        let (eigenvalues, eigenvectors) = sym_eigen(&entries);
        if eigenvalues[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(eigenvalues[0]));
        }
        Ok(Self {
            entries,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Builds the matrix `V diag(values) Vᵀ` from a known spectrum, skipping
    /// a second eigen-decomposition.
    fn from_spectrum(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let eigenvalues = DVector::from_iterator(values.len(), order.iter().map(|&i| values[i]));
        let eigenvectors = vectors.select_columns(&order);
        let entries = spectral_apply(&eigenvalues, &eigenvectors, |l| l);
        let entries = (&entries + entries.transpose()) * 0.5;
        Self {
            entries,
            eigenvalues,
            eigenvectors,
        }
    }

    fn det(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    fn inverse(&self) -> DMatrix<f64> {
        spectral_apply(&self.eigenvalues, &self.eigenvectors, |l| 1.0 / l)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
}

/// Constant conductivity σ near the boundary patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityTensor(SpdMatrix);

/// Riemannian metric `g` associated with a conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor(SpdMatrix);

macro_rules! tensor_common {
    ($ty:ident) => {
        impl $ty {
            /// Validates symmetry (to `1e-14`) and positive definiteness.
            pub fn new(entries: DMatrix<f64>) -> Result<Self> {
                SpdMatrix::new(entries).map(Self)
            }

            pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
                Self::new(from_rows(rows)?)
            }

            pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
                Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
            }

            pub fn identity(n: usize) -> Result<Self> {
                Self::new(DMatrix::identity(n, n))
            }

            pub fn dim(&self) -> usize {
                self.0.entries.nrows()
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.0.entries
            }

            /// Eigenvalues in ascending order.
            pub fn eigenvalues(&self) -> &DVector<f64> {
                &self.0.eigenvalues
            }

            pub fn det(&self) -> f64 {
                self.0.det()
            }

            pub fn inverse(&self) -> DMatrix<f64> {
                self.0.inverse()
            }

            pub fn rows(&self) -> Vec<Vec<f64>> {
                self.0.rows()
            }

            /// Conjugates by an orthogonal matrix: `R A Rᵀ`.
            pub fn rotated(&self, r: &DMatrix<f64>) -> Result<Self> {
                Self::new(r * &self.0.entries * r.transpose())
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                self.rows().serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let rows = Vec::<Vec<f64>>::deserialize(d)?;
                Self::from_rows(&rows).map_err(serde::de::Error::custom)
            }
        }
    };
}

tensor_common!(ConductivityTensor);
tensor_common!(MetricTensor);

impl ConductivityTensor {
    /// Ellipticity constant `λ = max(λ_max, 1/λ_min)`.
    pub fn ellipticity(&self) -> f64 {
        let ev = &self.0.eigenvalues;
        ev[ev.len() - 1].max(1.0 / ev[0])
    }
}

/// `g = (det σ)^{1/(n-2)} σ^{-1}`.
pub fn metric_from_sigma(sigma: &ConductivityTensor) -> MetricTensor {
    let n = sigma.dim();
    let s = &sigma.0;
    let factor = s.det().powf(1.0 / (n as f64 - 2.0));
    MetricTensor(SpdMatrix::from_spectrum(s.eigenvalues.map(|l| factor / l), s.eigenvectors.clone()))
}

/// `σ = (det g)^{1/2} g^{-1}`.
pub fn sigma_from_metric(g: &MetricTensor) -> ConductivityTensor {
    let m = &g.0;
    let factor = m.det().sqrt();
    ConductivityTensor(SpdMatrix::from_spectrum(m.eigenvalues.map(|l| factor / l), m.eigenvectors.clone()))
}

/// Ellipticity constant of a raw symmetric matrix. Fails with the offending
/// eigenvalue when the matrix is not positive definite.
pub fn ellipticity_bound(sigma: &DMatrix<f64>) -> Result<f64> {
    let sym = symmetrize(sigma)?;
    let (values, _) = sym_eigen(&sym);
    if values[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(values[0]));
    }
    Ok(values[values.len() - 1].max(1.0 / values[0]))
}

/// Spectral norm of `σ₁ − σ₂`.
pub fn tensor_distance(a: &ConductivityTensor, b: &ConductivityTensor) -> Result<f64> {
    matrix_distance(a.matrix(), b.matrix())
}

pub fn matrix_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    Ok(sym_spectral_norm(&(a - b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert!((a - b).amax() <= tol, "{a} vs {b}");
    }

    #[test]
    fn identity_maps_to_identity() {
        for n in 3..6 {
            let s = ConductivityTensor::identity(n).unwrap();
            let g = metric_from_sigma(&s);
            assert_mat_close(g.matrix(), &DMatrix::identity(n, n), 1e-15);
            assert_mat_close(sigma_from_metric(&g).matrix(), &DMatrix::identity(n, n), 1e-15);
        }
    }

    #[test]
    fn diagonal_examples() {
        let s = ConductivityTensor::from_diagonal(&[4.0, 1.0, 1.0]).unwrap();
        let g = metric_from_sigma(&s);
        assert_mat_close(g.matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 4.0])), 1e-14);

        let s4 = ConductivityTensor::from_diagonal(&[4.0, 1.0, 1.0, 1.0]).unwrap();
        let g4 = metric_from_sigma(&s4);
        assert_mat_close(
            g4.matrix(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 2.0, 2.0])),
            1e-14,
        );

        let g = MetricTensor::from_diagonal(&[1.0, 4.0, 4.0]).unwrap();
        assert_mat_close(
            sigma_from_metric(&g).matrix(),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 1.0])),
            1e-14,
        );
    }

    #[test]
    fn ellipticity_examples() {
        assert_eq!(ellipticity_bound(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = |v: Vec<f64>| DMatrix::from_diagonal(&DVector::from_vec(v));
        assert!((ellipticity_bound(&d(vec![4.0, 1.0, 1.0])).unwrap() - 4.0).abs() < 1e-14);
        assert!((ellipticity_bound(&d(vec![4.0, 0.1, 1.0])).unwrap() - 10.0).abs() < 1e-12);
        match ellipticity_bound(&d(vec![1.0, -0.5, 1.0])) {
            Err(Error::NotPositiveDefinite(v)) => assert!((v + 0.5).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distance_examples() {
        let i = ConductivityTensor::identity(3).unwrap();
        assert_eq!(tensor_distance(&i, &i).unwrap(), 0.0);
        let d2 = ConductivityTensor::from_diagonal(&[2.0, 1.0, 1.0]).unwrap();
        assert!((tensor_distance(&d2, &i).unwrap() - 1.0).abs() < 1e-15);
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.1;
        m[(1, 0)] = 0.1;
        let p = ConductivityTensor::new(m).unwrap();
        assert!((tensor_distance(&i, &p).unwrap() - 0.1).abs() < 1e-15);
        let i4 = ConductivityTensor::identity(4).unwrap();
        assert!(matches!(tensor_distance(&i, &i4), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ConductivityTensor::identity(2),
            Err(Error::UnsupportedDimension(2))
        ));
        assert!(matches!(
            ConductivityTensor::from_diagonal(&[1.0, 0.0, 1.0]),
            Err(Error::NotPositiveDefinite(_))
        ));
        let rows = vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(matches!(ConductivityTensor::from_rows(&rows), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn json_is_row_major() {
        let s = ConductivityTensor::from_diagonal(&[4.0, 1.0, 2.0]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "[[4.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,2.0]]");
        let back: ConductivityTensor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
