//! Non-flatness certificates on a few patches.

use calderon_boundary::geometry::{certify_nonflat, BoundaryPatch};

fn main() -> calderon_boundary::error::Result<()> {
    let patches = [
        ("paraboloid", BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0)?),
        ("sphere cap", BoundaryPatch::sphere_cap(3, 1.0, 2.0)?),
        ("flat", BoundaryPatch::flat(3, 1.0)?),
    ];
    for (name, patch) in &patches {
        let pts = [[0.0, 0.0], [0.0, 0.4], [0.4, 0.0]].map(|p| patch.chart_eval(&p));
        let [a, b, c] = pts;
        let cert = certify_nonflat(patch, [a?, b?, c?], None);
        let r = cert.report();
        println!("{name:>10}: case {:?}  C0 = {:.6}  k0 = {:.6}  gamma = {:?}", r.case, r.c0, r.k0, r.gamma);
        if let Some(reason) = r.reason {
            println!("{:>10}  {reason}", "");
        }
    }
    Ok(())
}
