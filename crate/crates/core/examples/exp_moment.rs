//! Exponential moment of the running energy functional on two sample grids.
use scbf::verify::{exp_moment_check, run_ensemble};
use scbf::{HarnackConstants, NoiseSpec, PhysParams, Regime, RngKey, SimConfig, SpectralBasis, VelocityField};

fn main() -> scbf::Result<()> {
    let params = PhysParams::new(1.0, 1.0, 5.0)?;
    let basis = SpectralBasis::build(2, 8, 4.5)?;
    let cfg = SimConfig {
        params,
        basis: basis.spec(),
        noise: NoiseSpec::additive_trace(0.01),
        dt: 1e-3,
        horizon: 2.0,
        initial: Default::default(),
        seed: 8,
        paths: 100,
        samples: 2,
        advection: true,
        guard: Default::default(),
    };
    let x = VelocityField::random(&basis, &mut RngKey::new(cfg.seed, u64::MAX).aux(0), 0.2);
    let noise = cfg.noise.build(&basis)?.expect("noise is on");
    let consts = HarnackConstants::compute(Regime::AdditiveSupercritical, 2, &params, &noise)?;
    let ens = run_ensemble(&cfg, &x, &[2.0], 5)?;
    let rep = exp_moment_check(&ens, consts.k, &consts, &[100])?;
    for g in &rep.grids {
        println!("grid every {} steps: E exp(kS) = {:.4} ± {:.4}", g.grid_every, g.estimate.mean, g.estimate.se);
    }
    println!("k = {:.2}, bound {:.4}: {}", rep.k, rep.bound, if rep.pass { "PASS" } else { "FAIL" });
    Ok(())
}
