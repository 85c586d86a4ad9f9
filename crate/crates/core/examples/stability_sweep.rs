//! Perturbation sweep `σ₂ = σ₁ + tΔ` and the fitted Hölder exponent.

use calderon_boundary::conductivity::ConductivityTensor;
use calderon_boundary::geometry::{certify_nonflat, BoundaryPatch};
use calderon_boundary::kernels::KernelMode;
use calderon_boundary::ndmap::ProbeDictionary;
use calderon_boundary::quadrature::PolarRule;
use calderon_boundary::stability::{h_optimize, holder_fit, log_grid, perturb_sweep, SweepSetup};
use nalgebra::DMatrix;

fn main() -> calderon_boundary::error::Result<()> {
    let patch = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0)?;
    let pts = [[0.0, 0.0], [0.0, 0.4], [0.4, 0.0]].map(|p| patch.chart_eval(&p));
    let [a, b, c] = pts;
    let cert = certify_nonflat(&patch, [a?, b?, c?], None);
    let sigma = ConductivityTensor::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.5, -0.2], vec![0.1, -0.2, 1.0]])?;
    let delta = DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.0, 0.2, -0.4, 0.3, 0.0, 0.3, 0.5]);
    let dictionary = ProbeDictionary::generate(&patch, &[vec![0.0, 0.0]], &Default::default())?;
    let setup = SweepSetup {
        patch: &patch,
        certificate: &cert,
        mode: KernelMode::Exact,
        dictionary: &dictionary,
        pairing_rule: PolarRule::new(12, 16)?,
        schedule: Default::default(),
    };
    let run = perturb_sweep(&sigma, &delta, &log_grid(1e-3, 1e-1, 8), &setup)?;
    println!("{:>10} {:>12} {:>12} {:>12} {:>10}", "t", "E", "eps", "delta", "h*");
    for r in &run.records {
        let h = h_optimize(r.epsilon, r.e, 3)?.h;
        println!("{:>10.3e} {:>12.4e} {:>12.4e} {:>12.4e} {h:>10.4}", r.t, r.e, r.epsilon, r.delta);
    }
    let fit = holder_fit(&run)?;
    println!("beta = {}, beta_fit = {:.4}, C_fit = {:.3}, bound holds: {}", fit.beta, fit.beta_fit, fit.c_fit, fit.bound_holds);
    Ok(())
}
