//! Tabulates the exact and perturbed kernels on a handful of point pairs.

use calderon_boundary::conductivity::ConductivityTensor;
use calderon_boundary::geometry::BoundaryPatch;
use calderon_boundary::kernels::{KernelMode, KernelModel};

fn main() -> calderon_boundary::error::Result<()> {
    let patch = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0)?;
    let sigma = ConductivityTensor::from_diagonal(&[2.0, 1.0, 0.5])?;
    let y = patch.chart_eval(&[0.0, 0.0])?;
    let mut pairs = Vec::new();
    for r in [0.4, 0.2, 0.1, 0.05] {
        pairs.push((patch.chart_eval(&[r, 0.0])?, y.clone()));
        pairs.push((patch.chart_eval(&[0.0, r])?, y.clone()));
    }
    let modes = [
        KernelMode::Exact,
        KernelMode::Perturbed { amplitude: 0.05, exponent: 0.5, seed: 1 },
    ];
    for mode in modes {
        println!("# {mode:?}");
        KernelModel::new(sigma.clone(), mode)?.write_table(&pairs, std::io::stdout().lock())?;
    }
    Ok(())
}
