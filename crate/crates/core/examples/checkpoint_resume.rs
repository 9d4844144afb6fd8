//! Save mid-run, reload, continue: the result matches the uninterrupted run bit for bit.
use scbf::checkpoint::{Checkpoint, Cursor};
use scbf::{NoiseSpec, PhysParams, RngKey, SimConfig, SpectralBasis, VelocityField};

fn main() -> scbf::Result<()> {
    let basis = SpectralBasis::build(2, 8, 4.5)?;
    let cfg = SimConfig {
        params: PhysParams::new(1.0, 1.0, 5.0)?,
        basis: basis.spec(),
        noise: NoiseSpec::additive_trace(0.01),
        dt: 1e-3,
        horizon: 0.2,
        initial: Default::default(),
        seed: 17,
        paths: 1,
        samples: 1,
        advection: true,
        guard: Default::default(),
    };
    let x = VelocityField::random(&basis, &mut RngKey::new(cfg.seed, u64::MAX).aux(0), 0.5);
    let key = RngKey::new(cfg.seed, 0);
    let mut st = cfg.stepper(&basis)?;
    let (full, _) = st.run(&x, &key, 200, 200, |_, _, _| Ok(()))?;
    let (half, ledger) = st.run(&x, &key, 120, 120, |_, _, _| Ok(()))?;
    let path = std::env::temp_dir().join("scbf-checkpoint-example.json");
    Checkpoint::new(&half, Cursor { seed: cfg.seed, trajectory: 0, step: 120 }, 0.12)
        .with_ledger(&ledger)
        .save(&path)?;
    let cp = Checkpoint::load(&path)?;
    let key = RngKey::new(cp.cursor.seed, cp.cursor.trajectory);
    let ledger = cp.ledger.clone().unwrap_or_default();
    let (resumed, _) = st.run_from(&cp.state_on(&basis)?, ledger, &key, cp.cursor.step, 200, 200, |_, _, _| Ok(()))?;
    println!("bit-identical after resume: {}", resumed.coeffs() == full.coeffs());
    std::fs::remove_file(&path).ok();
    Ok(())
}
