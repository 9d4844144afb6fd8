//! Finite-difference semigroup gradient with common random numbers against the bound.
use scbf::verify::{default_displacement, gradient_bound_check, run_ensemble, ObservableF};
use scbf::{HarnackConstants, NoiseSpec, PhysParams, Regime, RngKey, SimConfig, SpectralBasis, VelocityField};

fn main() -> scbf::Result<()> {
    let params = PhysParams::new(1.0, 1.0, 5.0)?;
    let basis = SpectralBasis::build(2, 8, 4.5)?;
    let cfg = SimConfig {
        params,
        basis: basis.spec(),
        noise: NoiseSpec::additive_trace(0.01),
        dt: 1e-3,
        horizon: 1.0,
        initial: Default::default(),
        seed: 4,
        paths: 100,
        samples: 2,
        advection: true,
        guard: Default::default(),
    };
    let mut rng = RngKey::new(cfg.seed, u64::MAX).aux(0);
    let y = VelocityField::random(&basis, &mut rng, 0.3);
    let dirs = [VelocityField::random(&basis, &mut rng, 1.0)];
    let noise = cfg.noise.build(&basis)?.expect("noise is on");
    let consts = HarnackConstants::compute(Regime::AdditiveSupercritical, 2, &params, &noise)?;
    let base = run_ensemble(&cfg, &y, &[0.5, 1.0], 0)?;
    let f = ObservableF::bounded_lipschitz(&y, 1.0, 1.0)?;
    for r in gradient_bound_check(&cfg, &base, &f, &dirs, default_displacement(&y), &consts)? {
        println!("t={}: |FD| {:.4e} vs bound {:.4} (std of f {:.3e}){}", r.t, r.max_abs(), r.bound, r.std, if r.noise_floor { ", at noise floor" } else { "" });
    }
    Ok(())
}
