#![allow(dead_code)]

use calderon_boundary::conductivity::ConductivityTensor;
use calderon_boundary::geometry::{certify_nonflat, BoundaryPatch, NonFlatnessCertificate};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian-like matrix.
pub fn random_rotation(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

/// SPD matrix with eigenvalues log-uniform in `[1/lambda, lambda]`.
pub fn random_spd(rng: &mut impl Rng, n: usize, lambda: f64) -> DMatrix<f64> {
    let q = random_rotation(rng, n);
    let l = lambda.ln();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-l..l).exp()));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

pub fn random_sigma(rng: &mut impl Rng, n: usize, lambda: f64) -> ConductivityTensor {
    ConductivityTensor::new(random_spd(rng, n, lambda)).unwrap()
}

pub fn paraboloid() -> BoundaryPatch {
    BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0).unwrap()
}

pub fn certificate(patch: &BoundaryPatch, pts: [&[f64]; 3]) -> NonFlatnessCertificate {
    let p = pts.map(|x| patch.chart_eval(x).unwrap());
    certify_nonflat(patch, p, None)
}

/// The reference certificate: `γ = (0.4, 0, 0.4)`, case A.
pub fn paraboloid_certificate() -> (BoundaryPatch, NonFlatnessCertificate) {
    let patch = paraboloid();
    let cert = certificate(&patch, [&[0.0, 0.0], &[0.0, 0.4], &[0.4, 0.0]]);
    (patch, cert)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Minimum of `f` over a log-spaced grid of `count` points on `[lo, hi]`,
/// refined once by another `count`-point grid on the bracketing cell.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, count: usize) -> f64 {
    let grid = |a: f64, b: f64| -> Vec<f64> {
        (0..count)
            .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (count - 1) as f64).exp())
            .collect()
    };
    let coarse = grid(lo, hi);
    let (i, _) = coarse
        .iter()
        .map(|&h| f(h))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let a = coarse[i.saturating_sub(1)];
    let b = coarse[(i + 1).min(count - 1)];
    grid(a, b).into_iter().map(&f).fold(f64::INFINITY, f64::min)
}
