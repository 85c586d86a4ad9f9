//! Probe pairings of the kernel difference and the resulting `ε` proxy.

use calderon_boundary::conductivity::ConductivityTensor;
use calderon_boundary::geometry::BoundaryPatch;
use calderon_boundary::kernels::{KernelDifference, KernelModel};
use calderon_boundary::ndmap::{nd_difference_proxy, probe_pairing, DictionarySpec, ProbeDictionary};
use calderon_boundary::quadrature::PolarRule;

fn main() -> calderon_boundary::error::Result<()> {
    let patch = BoundaryPatch::isotropic_paraboloid(3, 1.0, 1.0)?;
    let s1 = ConductivityTensor::from_diagonal(&[1.0, 1.0, 1.0])?;
    let s2 = ConductivityTensor::from_diagonal(&[1.02, 1.0, 0.99])?;
    let (m1, m2) = (KernelModel::exact(s1)?, KernelModel::exact(s2)?);
    let rule = PolarRule::new(12, 16)?;

    let dict = ProbeDictionary::generate(&patch, &[vec![0.0, 0.0]], &DictionarySpec::default())?;
    println!("dictionary: {} quadruples", dict.len());
    let diff = KernelDifference::new(&m1, &m2)?;
    for q in dict.entries.iter().take(3) {
        let p = probe_pairing(&diff, &patch, dict.d, q, &rule)?;
        println!("h = {:.5}  <(N1-N2) psi, psi> = {:+.6e}  (+/- {:.1e})", q.h, p.value, p.error);
    }
    let proxy = nd_difference_proxy(&m1, &m2, &patch, &dict, &rule)?;
    println!("eps = {:.6e} at entry {}, quadrature floor {:.1e}", proxy.epsilon, proxy.argmax, proxy.error_floor);
    Ok(())
}
