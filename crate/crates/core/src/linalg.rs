//! Small dense helpers shared by the tensor, geometry and reconstruction code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute symmetry tolerance on unit-scaled entries.
pub const SYMMETRY_TOL: f64 = 1e-14;

/// Checks symmetry relative to the largest entry and returns `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax() / scale;
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
///
/// Cyclic Jacobi rotations: slow for large matrices but accurate to a few ulps
/// in the reconstruction `V Λ Vᵀ`, which the tensor round trips rely on.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off == 0.0 {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[(p, p)], m[(q, q)]);
                if apq.abs() <= f64::EPSILON * 1e-3 * (app.abs() * aqq.abs()).sqrt() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    (values, v.select_columns(&order))
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    if a.nrows() == 2 {
        let (p, q, r) = (a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]);
        let mean = 0.5 * (p + r);
        let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        return (mean + rad).abs().max((mean - rad).abs());
    }
    sym_eigen(a).0.amax()
}

/// Reassembles `V diag(f(λ)) Vᵀ`.
pub fn spectral_apply(values: &DVector<f64>, vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = f(values[j]);
        scaled.column_mut(j).scale_mut(s);
    }
    let out = scaled * vectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Modified Gram–Schmidt in the given order; vectors that collapse below
/// `1e-12` relative to their input norm are skipped.
pub fn gram_schmidt(vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for b in &basis {
            let c = w.dot(b);
            w.axpy(-c, b, 1.0);
        }
        // second pass keeps orthogonality at round-off level
        for b in &basis {
            let c = w.dot(b);
            w.axpy(-c, b, 1.0);
        }
        let norm = w.norm();
        if norm > 1e-12 * scale {
            basis.push(w / norm);
        }
    }
    basis
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// Surface area of the unit sphere `S^{m-1}` in `ℝ^m`.
pub fn unit_sphere_area(m: usize) -> f64 {
    use std::f64::consts::PI;
    match m {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 2.0) * unit_sphere_area(m - 2),
    }
}

/// Volume of the unit ball in `ℝ^m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    unit_sphere_area(m) / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(5) - 8.0 * PI * PI / 15.0).abs() < 1e-14);
    }

    #[test]
    fn gram_schmidt_is_orthonormal() {
        let vs = vec![
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            DVector::from_vec(vec![2.0, 1.0, 1.0]),
        ];
        let b = gram_schmidt(&vs);
        assert_eq!(b.len(), 2);
        assert!((b[0].dot(&b[1])).abs() < 1e-15);
        assert!((b[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(symmetrize(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn spectral_norm_2x2_matches_eigen() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, -1.2, 0.7]);
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        assert!((sym_spectral_norm(&a) - eig.eigenvalues.amax()).abs() < 1e-14);
    }

    #[test]
    fn jacobi_reconstructs_to_roundoff() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.25, 0.0, -2.0, 0.25, 1e-3, 0.1, 0.5, 0.0, 0.1, 7.0],
        );
        let (l, v) = sym_eigen(&a);
        assert!(l.iter().zip(l.iter().skip(1)).all(|(x, y)| x <= y));
        let back = spectral_apply(&l, &v, |x| x);
        assert!((back - &a).amax() < 1e-14 * a.amax());
        assert!((v.transpose() * &v - DMatrix::identity(4, 4)).amax() < 1e-15);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(sym_eigen(&diag).0.as_slice(), &[1.0, 2.0, 3.0]);
    }
}
