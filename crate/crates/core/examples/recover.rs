//! Recovers a rotated anisotropic conductivity from exact and perturbed kernels.

use calderon_boundary::conductivity::ConductivityTensor;
use calderon_boundary::geometry::{certify_nonflat, BoundaryPatch};
use calderon_boundary::kernels::{KernelMode, KernelModel};
use calderon_boundary::reconstruct::{reconstruct, reconstruction_error, ScheduleSpec};
use nalgebra::{Matrix3, Rotation3, Vector3};

fn main() -> calderon_boundary::error::Result<()> {
    let patch = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0)?;
    let pts = [[0.0, 0.0], [0.0, 0.4], [0.4, 0.0]].map(|p| patch.chart_eval(&p));
    let [a, b, c] = pts;
    let cert = certify_nonflat(&patch, [a?, b?, c?], None);

    let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.3) * Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7);
    let s = rot.matrix() * Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 0.5)) * rot.matrix().transpose();
    let sigma = ConductivityTensor::new(nalgebra::DMatrix::from_iterator(3, 3, s.iter().copied()))?;

    let modes = [
        KernelMode::Exact,
        KernelMode::Perturbed { amplitude: 0.01, exponent: 0.5, seed: 3 },
        KernelMode::Perturbed { amplitude: 0.1, exponent: 0.5, seed: 3 },
    ];
    for mode in modes {
        let model = KernelModel::new(sigma.clone(), mode)?;
        let (res, _) = reconstruct(&model, &patch, &cert, &ScheduleSpec::default())?;
        let err = reconstruction_error(&res, &sigma)?;
        println!("{mode:?}\n  case {:?}  error {err:.3e}  residual {:.2e}  C_T {:.3}", res.case, res.residual, res.t_constant);
    }
    Ok(())
}
