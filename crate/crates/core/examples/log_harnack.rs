//! Asymptotic log-Harnack margins for exp-Lipschitz test functions.
use scbf::verify::{displaced, log_harnack_margin, run_ensemble, ObservableF};
use scbf::{HarnackConstants, NoiseSpec, PhysParams, Regime, RngKey, SimConfig, SpectralBasis, VelocityField};

fn main() -> scbf::Result<()> {
    let params = PhysParams::new(1.0, 1.0, 2.0)?;
    let basis = SpectralBasis::build(2, 8, 4.5)?;
    let cfg = SimConfig {
        params,
        basis: basis.spec(),
        noise: NoiseSpec::additive_trace(0.01),
        dt: 1e-3,
        horizon: 2.0,
        initial: Default::default(),
        seed: 2,
        paths: 100,
        samples: 2,
        advection: true,
        guard: Default::default(),
    };
    let mut rng = RngKey::new(cfg.seed, u64::MAX).aux(0);
    let x = VelocityField::random(&basis, &mut rng, 0.2);
    let y = displaced(&x, 0.1, &mut rng);
    let noise = cfg.noise.build(&basis)?.expect("noise is on");
    let consts = HarnackConstants::compute(Regime::Additive2dSubcritical, 2, &params, &noise)?;
    let times = [0.5, 1.0, 2.0];
    // same seed on both sides: common random numbers
    let ex = run_ensemble(&cfg, &x, &times, 0)?;
    let ey = run_ensemble(&cfg, &y, &times, 0)?;
    let f = ObservableF::exp_lipschitz(&VelocityField::zeros(&basis), 1.0)?;
    for &t in &times {
        let m = log_harnack_margin(&ex, &ey, t, &f, &consts)?;
        println!(
            "t={t}: P log f(y) = {:.5}, log P f(x) = {:.5}, penalty {:.3}, remainder {:.3e}, margin {:.3}",
            m.lhs.mean, m.log_pf_x.mean, m.penalty, m.remainder, m.margin
        );
    }
    Ok(())
}
