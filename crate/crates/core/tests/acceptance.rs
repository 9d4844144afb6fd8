//! Desk-scale acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! All Monte Carlo work runs at n = 2, N = 8 (eigenvalue cut 4.5, so λ_{N₀} = 4), dt = 1e−3.
//! Ensembles are shared between criteria where the settings coincide.

use std::sync::Arc;
use std::time::Instant;

use scbf::basis::BasisSpec;
use scbf::checkpoint::{Checkpoint, Cursor};
use scbf::config::parse_config;
use scbf::coupling::{
    contraction_rate, entropy_check, girsanov_consistency, run_coupled, CoupledEnsemble,
    MeasureMode, Observable,
};
use scbf::experiment::run_experiment;
use scbf::integrator::{EnergyLedger, GuardPolicy, InitialCondition};
use scbf::invariants::{monotonicity_suite, operator_suite, MonotoneCase, SuiteResult};
use scbf::records::emit_records;
use scbf::verify::{
    default_displacement, displaced, exp_moment_check, gradient_reports, log_harnack_margin,
    refinement_study, remainder_envelope_ok, run_ensemble, uniqueness_proxy,
    Ensemble, ObservableF,
};
use scbf::{
    HarnackConstants, NoiseSpec, PhysParams, Regime, RngKey, SimConfig, SpectralBasis,
    VelocityField,
};

// pinned tolerances and sizes
const SEED: u64 = 20_241_019;
const DT: f64 = 1e-3;
const TRACE: f64 = 0.01;
const DIST: f64 = 0.1;
const X_NORM: f64 = 0.2;
const SUITE_CASES: usize = 10_000;
const Z_MAX: f64 = 3.0;
const RATE_FACTOR: f64 = 0.9;
const MIN_ORDER: f64 = 0.9;
const ESS_FRACTION: f64 = 0.1;
const GIRSANOV_DIST: f64 = 0.02;
const HARNACK_TIMES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const HARNACK_SCALES: [f64; 3] = [0.5, 1.0, 2.0];
const COUPLING_TIMES: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
const ERGODIC_HORIZON: f64 = 50.0;
const ERGODIC_BURN_IN: f64 = 5.0;

fn basis_spec() -> BasisSpec {
    BasisSpec {
        dim: 2,
        resolution: 8,
        eigen_cut: 4.5,
    }
}

fn config(beta: f64, r: f64, noise: NoiseSpec, horizon: f64, paths: usize) -> SimConfig {
    SimConfig {
        params: PhysParams::new(1.0, beta, r).unwrap(),
        basis: basis_spec(),
        noise,
        dt: DT,
        horizon,
        initial: InitialCondition::Zero,
        seed: SEED,
        paths,
        samples: 10,
        advection: true,
        guard: GuardPolicy::Warn,
    }
}

#[derive(Clone, Copy)]
struct Setting {
    name: &'static str,
    regime: Regime,
    beta: f64,
    r: f64,
    multiplicative: bool,
}

const SUPERCRITICAL: Setting = Setting {
    name: "r=5 additive",
    regime: Regime::AdditiveSupercritical,
    beta: 1.0,
    r: 5.0,
    multiplicative: false,
};
const SUBCRITICAL: Setting = Setting {
    name: "n=2 r=2 additive",
    regime: Regime::Additive2dSubcritical,
    beta: 1.0,
    r: 2.0,
    multiplicative: false,
};
const CRITICAL: Setting = Setting {
    name: "n=2 r=3 beta=2",
    regime: Regime::Critical,
    beta: 2.0,
    r: 3.0,
    multiplicative: false,
};
const MULTIPLICATIVE: Setting = Setting {
    name: "r=5 multiplicative q0=1 q1=0.5",
    regime: Regime::Multiplicative,
    beta: 1.0,
    r: 5.0,
    multiplicative: true,
};

impl Setting {
    fn noise(&self) -> NoiseSpec {
        if self.multiplicative {
            NoiseSpec::multiplicative_trace(TRACE, 1.0, 0.5)
        } else {
            NoiseSpec::additive_trace(TRACE)
        }
    }

    fn config(&self, horizon: f64, paths: usize) -> SimConfig {
        config(self.beta, self.r, self.noise(), horizon, paths)
    }

    fn constants(&self, basis: &Arc<SpectralBasis>) -> HarnackConstants {
        let noise = self.noise().build(basis).unwrap().unwrap();
        HarnackConstants::compute(self.regime, 2, &PhysParams::new(1.0, self.beta, self.r).unwrap(), &noise)
            .unwrap()
    }
}

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, pass: bool, detail: String, started: Instant) {
        let line = format!(
            "criterion {n:>2}: {} — {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push((n, pass, line));
    }
}

fn suites_line(s: &[SuiteResult]) -> (bool, String) {
    let pass = s.iter().all(|s| s.pass());
    let cases: usize = s.iter().map(|s| s.cases).sum();
    let bad: usize = s.iter().map(|s| s.violations).sum();
    let worst = s.iter().map(|s| s.worst_ratio).fold(0.0, f64::max);
    (pass, format!("{} suites, {cases} cases, {bad} violations, worst err/tol {worst:.2e}", s.len()))
}

fn starts(basis: &Arc<SpectralBasis>) -> (VelocityField, VelocityField) {
    let mut rng = RngKey::new(SEED, u64::MAX).aux(7);
    let x = VelocityField::random(basis, &mut rng, X_NORM);
    let y = displaced(&x, DIST, &mut rng);
    (x, y)
}

fn restrict(ens: &Ensemble, times: &[f64]) -> Ensemble {
    let idx: Vec<usize> = times.iter().map(|t| ens.state_index(*t).unwrap()).collect();
    let mut out = ens.clone();
    out.times = times.to_vec();
    for p in &mut out.paths {
        p.states = idx.iter().map(|&i| p.states[i].clone()).collect();
        p.ledgers = idx.iter().map(|&i| p.ledgers[i].clone()).collect();
    }
    out
}

fn main() {
    let total = Instant::now();
    let basis = SpectralBasis::from_spec(basis_spec()).unwrap();
    let (x, y) = starts(&basis);
    let mut rep = Report { lines: Vec::new() };

    // 1. operator identities
    let t0 = Instant::now();
    let b3 = SpectralBasis::build(3, 4, 2.5).unwrap();
    let mut s = operator_suite(&basis, SUITE_CASES, SEED);
    s.extend(operator_suite(&b3, SUITE_CASES, SEED));
    let (pass, detail) = suites_line(&s);
    rep.record(1, pass, format!("operator identities (n=2 N=8, n=3 N=4): {detail}"), t0);

    // 2. monotonicity
    let t0 = Instant::now();
    let mut s = monotonicity_suite(&basis, MonotoneCase::Supercritical, SUITE_CASES, SEED).unwrap();
    s.extend(monotonicity_suite(&b3, MonotoneCase::Critical, SUITE_CASES, SEED).unwrap());
    s.extend(monotonicity_suite(&basis, MonotoneCase::LocalL4, SUITE_CASES, SEED).unwrap());
    let (pass, detail) = suites_line(&s);
    rep.record(2, pass, format!("monotonicity: {detail}"), t0);

    // 3. energy identity
    let t0 = Instant::now();
    let cfg = SUPERCRITICAL.config(1.0, 200);
    let zero = VelocityField::zeros(&basis);
    let ens = run_ensemble(&cfg, &zero, &[1.0], 0).unwrap();
    let res = scbf::Estimate::of(ens.residuals(1.0, &cfg).unwrap());
    let mean_ok = res.mean.abs() <= Z_MAX * res.se;
    let mut det = config(1.0, 5.0, NoiseSpec::off(), 1.0, 1);
    det.dt = 1e-2;
    let big = {
        let mut rng = RngKey::new(SEED, u64::MAX).aux(8);
        VelocityField::random(&basis, &mut rng, 1.0)
    };
    let study = refinement_study(&det, &big, 3).unwrap();
    rep.record(
        3,
        mean_ok && study.pass(MIN_ORDER),
        format!(
            "mean residual {:.3e} ± {:.2e} (M=200, T=1); noise-free |residual| {:?} at dt {:?}, orders {:?} (need ≥ {MIN_ORDER})",
            res.mean,
            res.se,
            study.residuals.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
            study.dts,
            study.orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()
        ),
        t0,
    );

    // 4. exponential moment; the same ensemble is the r=5 x-side of criterion 8
    let t0 = Instant::now();
    let c_sup = SUPERCRITICAL.constants(&basis);
    let mut times4 = HARNACK_TIMES.to_vec();
    times4.push(5.0);
    let ens_x = run_ensemble(&SUPERCRITICAL.config(5.0, 1000), &x, &times4, 5).unwrap();
    let m = exp_moment_check(&ens_x, c_sup.k, &c_sup, &[100]).unwrap();
    let fine = m.grids.last().unwrap();
    let coarse = &m.grids[0];
    rep.record(
        4,
        m.pass,
        format!(
            "k={:.1}: E exp(kS_T) = {:.4} ± {:.4} (grid {} steps), {:.4} ± {:.4} (grid {} steps) vs bound {:.4}; necessary-condition check only",
            m.k,
            fine.estimate.mean,
            fine.estimate.se,
            fine.grid_every,
            coarse.estimate.mean,
            coarse.estimate.se,
            coarse.grid_every,
            m.bound
        ),
        t0,
    );

    // 5. coupling contraction (tilted measure simulated directly)
    let t0 = Instant::now();
    let dist = x.sub(&y).norm_h();
    let mut coupled: Vec<(Setting, CoupledEnsemble)> = Vec::new();
    let mut pass5 = true;
    let mut detail5 = Vec::new();
    for s in [SUPERCRITICAL, SUBCRITICAL, CRITICAL] {
        let cfg = s.config(2.0, 500);
        let ens = run_coupled(&cfg, &x, &y, &COUPLING_TIMES, MeasureMode::Tilted).unwrap();
        let c = s.constants(&basis);
        let r = contraction_rate(&ens, &c, dist, y.norm_h(), RATE_FACTOR).unwrap();
        let fit = r.fit.unwrap();
        pass5 &= r.pass();
        detail5.push(format!(
            "{}: rate {:.2} ± {:.2} vs {RATE_FACTOR}·{:.3}, bound ok at {}/{} times",
            s.name,
            fit.rate,
            fit.ci_half_width(),
            r.theory_rate,
            r.bound_ok.iter().filter(|b| **b).count(),
            r.bound_ok.len()
        ));
        coupled.push((s, ens));
    }
    rep.record(5, pass5, detail5.join("; "), t0);

    // 6. measure change: plain runs from y against Φ-weighted coupled runs (independent seed)
    let t0 = Instant::now();
    let ens_y = run_ensemble(&SUPERCRITICAL.config(4.0, 1000), &y, &HARNACK_TIMES, 0).unwrap();
    let x6 = {
        let mut rng = RngKey::new(SEED, u64::MAX).aux(9);
        displaced(&y, GIRSANOV_DIST, &mut rng)
    };
    let mut cfg6 = SUPERCRITICAL.config(1.0, 1000);
    cfg6.seed = SEED + 1;
    let weighted = run_coupled(&cfg6, &x6, &y, &[0.5, 1.0], MeasureMode::Weighted).unwrap();
    let f6 = ObservableF::exp_lipschitz(&zero, 1.0).unwrap();
    let energy = |u: &VelocityField| u.norm_h_sq();
    let expf = |u: &VelocityField| f6.value(u);
    let obs: [Observable<'_>; 2] = [("|u|^2", &energy), ("exp-lipschitz c=1", &expf)];
    let g = girsanov_consistency(&ens_y, &weighted, &obs, ESS_FRACTION).unwrap();
    let pass6 = g.iter().all(|r| r.pass(Z_MAX));
    let detail6: Vec<String> = g
        .iter()
        .map(|r| {
            format!(
                "t={}: E[Phi]={:.4}±{:.4} (z {:.2}), ESS {:.0}, z = [{}]",
                r.t,
                r.mean_phi.mean,
                r.mean_phi.se,
                r.z_phi,
                r.ess,
                r.rows.iter().map(|x| format!("{:.2}", x.z)).collect::<Vec<_>>().join(", ")
            )
        })
        .collect();
    rep.record(6, pass6, format!("|x-y|={GIRSANOV_DIST}, M=1000; {}", detail6.join("; ")), t0);

    // 7. relative entropy on the criterion-5 runs plus a multiplicative run
    let t0 = Instant::now();
    let mult = run_coupled(&MULTIPLICATIVE.config(2.0, 500), &x, &y, &COUPLING_TIMES, MeasureMode::Tilted).unwrap();
    coupled.push((MULTIPLICATIVE, mult));
    let mut pass7 = true;
    let mut detail7 = Vec::new();
    for (s, ens) in &coupled {
        let c = s.constants(&basis);
        let e = entropy_check(ens, &c, dist, y.norm_h()).unwrap();
        pass7 &= e.iter().all(|r| r.pass());
        let last = e.last().unwrap();
        let worst_z = e
            .iter()
            .map(|r| r.difference.mean.abs() / r.difference.se.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        detail7.push(format!(
            "{}: E[Phi log Phi] = {:.4} / {:.4} at t=2 (max paired |z| {:.2}), bound {:.3}",
            s.name, last.via_log_phi.mean, last.via_control.mean, worst_z, last.bound
        ));
    }
    rep.record(7, pass7, detail7.join("; "), t0);

    // 8. asymptotic log-Harnack
    let t0 = Instant::now();
    let centers = [zero.clone(), x.clone(), {
        let mut rng = RngKey::new(SEED, u64::MAX).aux(10);
        VelocityField::random(&basis, &mut rng, 0.5)
    }];
    let mut pass8 = true;
    let mut detail8 = Vec::new();
    for s in [SUBCRITICAL, SUPERCRITICAL, MULTIPLICATIVE] {
        let (ex, ey) = if s.regime == Regime::AdditiveSupercritical {
            (restrict(&ens_x, &HARNACK_TIMES), ens_y.clone())
        } else {
            let cfg = s.config(4.0, 1000);
            (
                run_ensemble(&cfg, &x, &HARNACK_TIMES, 0).unwrap(),
                run_ensemble(&cfg, &y, &HARNACK_TIMES, 0).unwrap(),
            )
        };
        let c = s.constants(&basis);
        let mut min_margin = f64::INFINITY;
        let mut n_pass = 0;
        let mut n = 0;
        for (&scale, center) in HARNACK_SCALES.iter().zip(&centers) {
            let f = ObservableF::exp_lipschitz(center, scale).unwrap();
            let margins: Vec<_> = HARNACK_TIMES
                .iter()
                .map(|&t| log_harnack_margin(&ex, &ey, t, &f, &c).unwrap())
                .collect();
            for m in &margins {
                n += 1;
                n_pass += m.pass as usize;
                min_margin = min_margin.min(m.margin);
            }
            let env = remainder_envelope_ok(&margins);
            pass8 &= env && margins.iter().all(|m| m.pass);
        }
        detail8.push(format!(
            "{}: {n_pass}/{n} margins pass (min {:.3}, Θ = {:.3})",
            s.name,
            min_margin,
            c.penalty(dist, y.norm_h())
        ));
    }
    rep.record(8, pass8, detail8.join("; "), t0);

    // 9. gradient estimate, finite differences with common random numbers
    let t0 = Instant::now();
    let base = restrict(&ens_y, &[1.0, 2.0]);
    let cfg9 = SUPERCRITICAL.config(2.0, 400);
    let h = default_displacement(&y);
    let dirs: Vec<VelocityField> = {
        let mut rng = RngKey::new(SEED, u64::MAX).aux(11);
        (0..2).map(|_| VelocityField::random(&basis, &mut rng, 1.0)).collect()
    };
    let pairs: Vec<(Ensemble, Ensemble)> = dirs
        .iter()
        .map(|d| {
            let n = d.norm_h();
            let mut p = y.clone();
            p.axpy(h / n, d);
            let mut q = y.clone();
            q.axpy(-h / n, d);
            (
                run_ensemble(&cfg9, &p, &base.times, 0).unwrap(),
                run_ensemble(&cfg9, &q, &base.times, 0).unwrap(),
            )
        })
        .collect();
    let mut pass9 = true;
    let mut detail9 = Vec::new();
    for (f, label) in [
        (ObservableF::bounded_lipschitz(&y, 1.0, 1.0).unwrap(), "min(|u-y|, 1)"),
        (ObservableF::bounded_lipschitz(&zero, 2.0, 0.5).unwrap(), "min(2|u|, 0.5)"),
    ] {
        for r in gradient_reports(&base, &pairs, &f, h, &c_sup).unwrap() {
            pass9 &= r.pass;
            detail9.push(format!(
                "{label} t={}: max|FD| {:.4} vs bound {:.3}{}",
                r.t,
                r.max_abs(),
                r.bound,
                if r.noise_floor { " (noise floor)" } else { "" }
            ));
        }
    }
    rep.record(9, pass9, format!("h={h:.2e}; {}", detail9.join("; ")), t0);

    // 10. ergodicity
    let t0 = Instant::now();
    let cfg10 = SUPERCRITICAL.config(ERGODIC_HORIZON, 20);
    let far = {
        let mut rng = RngKey::new(SEED, u64::MAX).aux(12);
        VelocityField::random(&basis, &mut rng, 1.0)
    };
    let (a0, _, u) = uniqueness_proxy(&cfg10, &zero, &far, ERGODIC_HORIZON, ERGODIC_BURN_IN).unwrap();
    rep.record(
        10,
        a0.residual_ok(0.0) && u.pass,
        format!(
            "n={ERGODIC_HORIZON}, burn-in {ERGODIC_BURN_IN}, M=20: residual {:.3e} ± {:.2e}; nu(|u|^2) {:.5} vs {:.5} (z {:.2}); single-functional gaps V {:.2e}, L {:.2e} (recorded only)",
            a0.residual.mean,
            a0.residual.se,
            u.from_x.mean,
            u.from_y.mean,
            u.z,
            a0.gap_v,
            a0.gap_lr1
        ),
        t0,
    );

    // 11. determinism and checkpoint resume
    let t0 = Instant::now();
    let doc = "command = \"couple\"\nT = 0.5\npaths = 8\ntimes = [0.125, 0.25, 0.375, 0.5]\nmode = \"tilted\"\nseed = 3\n[initial]\nkind = \"random\"\nnorm = 0.2\n";
    let spec = parse_config(doc).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let f1 = emit_records(&run_experiment(&spec).unwrap(), d1.path(), &spec.doc.formats).unwrap();
    let f2 = emit_records(&run_experiment(&spec).unwrap(), d2.path(), &spec.doc.formats).unwrap();
    let identical = f1.len() == f2.len()
        && f1.iter().zip(&f2).all(|(a, b)| std::fs::read(a).unwrap() == std::fs::read(b).unwrap());
    let cfg11 = SUPERCRITICAL.config(0.2, 1);
    let key = RngKey::new(SEED, 0);
    let mut st = cfg11.stepper(&basis).unwrap();
    let (u_full, l_full) = st.run(&x, &key, 200, 200, |_, _, _| Ok(())).unwrap();
    let (u_half, l_half) = st.run(&x, &key, 80, 80, |_, _, _| Ok(())).unwrap();
    let cp_dir = tempfile::tempdir().unwrap();
    let path = cp_dir.path().join("cp.json");
    Checkpoint::new(&u_half, Cursor { seed: SEED, trajectory: 0, step: 80 }, 0.08)
        .with_ledger(&l_half)
        .save(&path)
        .unwrap();
    let cp = Checkpoint::load(&path).unwrap();
    let ledger: EnergyLedger = cp.ledger.clone().unwrap();
    let (u_res, l_res) = st
        .run_from(&cp.state_on(&basis).unwrap(), ledger, &RngKey::new(cp.cursor.seed, cp.cursor.trajectory), cp.cursor.step, 200, 200, |_, _, _| Ok(()))
        .unwrap();
    let resumed = u_res.coeffs() == u_full.coeffs() && l_res == l_full;
    rep.record(
        11,
        identical && resumed,
        format!(
            "{} output files byte-identical: {identical}; checkpoint resume bit-identical: {resumed}",
            f1.len()
        ),
        t0,
    );

    let failed: Vec<usize> = rep.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!(
        "acceptance: {}/{} criteria pass in {:.1}s",
        rep.lines.len() - failed.len(),
        rep.lines.len(),
        total.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
