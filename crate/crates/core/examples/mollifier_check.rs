//! Mollifier masses on curved patches and the `τ^{2−n}` proxy scaling.

use calderon_boundary::geometry::BoundaryPatch;
use calderon_boundary::mollifier::{bump_normalizer, hminushalf_sq_proxy, mollifier_mass, MollifierSpec};
use calderon_boundary::quadrature::PolarRule;

fn main() -> calderon_boundary::error::Result<()> {
    let rule = PolarRule::default();
    println!("C_3 = {:.12}", bump_normalizer(3)?);
    let patch = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0)?;
    println!("{:>10} {:>22} {:>14}", "tau", "mass - 1", "proxy");
    for tau in [1e-3, 1e-2, 1e-1] {
        let spec = MollifierSpec::new(&patch, &[0.2, -0.1], tau)?;
        let mass = mollifier_mass(&patch, &spec, &rule)?;
        println!("{tau:>10.0e} {:>22.3e} {:>14.6e}", mass - 1.0, hminushalf_sq_proxy(tau, 3)?);
    }
    Ok(())
}
