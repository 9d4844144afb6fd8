//! Long-time averages and the two-start uniqueness proxy.
use scbf::verify::uniqueness_proxy;
use scbf::{NoiseSpec, PhysParams, RngKey, SimConfig, SpectralBasis, VelocityField};

fn main() -> scbf::Result<()> {
    let basis = SpectralBasis::build(2, 8, 4.5)?;
    let cfg = SimConfig {
        params: PhysParams::new(1.0, 1.0, 5.0)?,
        basis: basis.spec(),
        noise: NoiseSpec::additive_trace(0.01),
        dt: 1e-3,
        horizon: 20.0,
        initial: Default::default(),
        seed: 6,
        paths: 8,
        samples: 1,
        advection: true,
        guard: Default::default(),
    };
    let far = VelocityField::random(&basis, &mut RngKey::new(cfg.seed, u64::MAX).aux(0), 1.0);
    let (a, b, u) = uniqueness_proxy(&cfg, &VelocityField::zeros(&basis), &far, 20.0, 5.0)?;
    println!("from 0:   nu(|u|^2) = {:.5} ± {:.5}, residual {:+.2e} ± {:.1e}", a.nu_h.mean, a.nu_h.se, a.residual.mean, a.residual.se);
    println!("from far: nu(|u|^2) = {:.5} ± {:.5}", b.nu_h.mean, b.nu_h.se);
    println!("z = {:.2}; gaps V {:.2e}, L {:.2e}", u.z, a.gap_v, a.gap_lr1);
    Ok(())
}
