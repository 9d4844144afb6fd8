//! Randomized operator, transform, monotonicity and noise suites.
use scbf::invariants::{monotonicity_suite, noise_suite, operator_suite, parseval_suite, MonotoneCase};
use scbf::{NoiseSpec, SpectralBasis};

fn main() -> scbf::Result<()> {
    let basis = SpectralBasis::build(2, 8, 4.5)?;
    let mut suites = operator_suite(&basis, 500, 1);
    suites.push(parseval_suite(&basis, 500, 1)?);
    suites.extend(monotonicity_suite(&basis, MonotoneCase::Supercritical, 500, 1)?);
    suites.extend(monotonicity_suite(&basis, MonotoneCase::LocalL4, 500, 1)?);
    let b3 = SpectralBasis::build(3, 4, 2.5)?;
    suites.extend(monotonicity_suite(&b3, MonotoneCase::Critical, 200, 1)?);
    let noise = NoiseSpec::multiplicative_trace(0.01, 1.0, 0.5).build(&basis)?.expect("noise is on");
    suites.extend(noise_suite(&noise, 500, 1)?);
    for s in &suites {
        println!("{:<40} {:>5} cases  {} violations  worst {:.2e}", s.name, s.cases, s.violations, s.worst_ratio);
    }
    Ok(())
}
