//! Plain ensemble with the running energy ledger.
use scbf::integrator::{simulate, InitialCondition};
use scbf::{BasisSpec, NoiseSpec, PhysParams, SimConfig};

fn main() -> scbf::Result<()> {
    let cfg = SimConfig {
        params: PhysParams::new(1.0, 1.0, 5.0)?,
        basis: BasisSpec { dim: 2, resolution: 16, eigen_cut: 4.5 },
        noise: NoiseSpec::additive_trace(0.01),
        dt: 1e-3,
        horizon: 1.0,
        initial: InitialCondition::Random { norm: 1.0, label: 0 },
        seed: 1,
        paths: 4,
        samples: 5,
        advection: true,
        guard: Default::default(),
    };
    let basis = cfg.build_basis()?;
    let x = cfg.initial.build(&basis, cfg.seed)?;
    for path in 0..cfg.paths as u64 {
        let tr = simulate(&cfg, &x, path)?;
        println!("path {path}");
        for s in &tr.samples {
            println!(
                "  t={:.2}  |u|^2={:.6}  residual={:+.3e}  div={:.1e}",
                s.t,
                s.state.norm_h_sq(),
                s.ledger.residual(x.norm_h_sq(), &cfg.params),
                s.state.divergence_defect()
            );
        }
    }
    Ok(())
}
