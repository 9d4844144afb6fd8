//! Randomized identity and inequality suites for the operators and the noise model. Each
//! suite draws `cases` random inputs from a seeded stream and counts violations.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::error::Result;
use crate::field::{Norm, VelocityField};
use crate::noise::NoiseModel;
use crate::operators::{
    apply_a, apply_b_with, apply_c_with, damping_monotonicity, monotonicity_report, PhysParams,
};
use crate::rng::RngKey;
use crate::transform::Workspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest `error / tolerance` seen (≤ 1 means every case passed).
    pub worst_ratio: f64,
}

impl SuiteResult {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

struct Tally {
    name: String,
    cases: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &str) -> Self {
        Tally {
            name: name.into(),
            cases: 0,
            violations: 0,
            worst: 0.0,
        }
    }

    /// Records `err ≤ tol`.
    fn check(&mut self, err: f64, tol: f64) {
        self.cases += 1;
        let ratio = if tol > 0.0 { err / tol } else if err > 0.0 { f64::INFINITY } else { 0.0 };
        if !(ratio <= 1.0) {
            self.violations += 1;
        }
        if ratio.is_nan() || ratio > self.worst {
            self.worst = ratio;
        }
    }

    fn done(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            cases: self.cases,
            violations: self.violations,
            worst_ratio: self.worst,
        }
    }
}

/// Random field whose H-norm is log-uniform on `[1e−2, 1e2]`.
fn field<R: Rng>(basis: &Arc<SpectralBasis>, rng: &mut R) -> VelocityField {
    let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
    VelocityField::random(basis, rng, scale)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    RngKey::new(seed, u64::MAX - 1).aux(label)
}

/// `b(u,v,v) = 0`, `b(u,v,w) = −b(u,w,v)`, `⟨Au,u⟩ = ‖u‖²_V`, Poincaré, and
/// `⟨C(u),u⟩ = ‖u‖^{r+1}_{L^{r+1}}`.
pub fn operator_suite(basis: &Arc<SpectralBasis>, cases: usize, seed: u64) -> Vec<SuiteResult> {
    let mut rng = stream(seed, 1);
    let mut ws = Workspace::new(basis);
    let lam1 = basis.lambda_1();
    let mut cancel = Tally::new("b(u,v,v) = 0");
    let mut anti = Tally::new("b(u,v,w) = -b(u,w,v)");
    let mut stokes = Tally::new("<Au,u> = |u|_V^2");
    let mut poincare = Tally::new("|u|_V^2 >= lambda_1 |u|_H^2");
    let mut damping = Tally::new("<C(u),u> = |u|_{L^{r+1}}^{r+1}");
    for _ in 0..cases {
        let (u, v, w) = (field(basis, &mut rng), field(basis, &mut rng), field(basis, &mut rng));
        let buv = apply_b_with(&u, &v, &mut ws);
        let buw = apply_b_with(&u, &w, &mut ws);
        cancel.check(buv.inner(&v).abs(), 1e-10 * u.norm_v() * v.norm_v() * v.norm_h());
        let (a, b) = (buv.inner(&w), buw.inner(&v));
        anti.check((a + b).abs(), 1e-10 * u.norm_v() * v.norm_v() * w.norm_v());

        let au = apply_a(&u).inner(&u);
        let v2 = u.norm_v_sq();
        stokes.check((au - v2).abs(), 1e-12 * v2);
        poincare.check((lam1 * u.norm_h_sq() - v2).max(0.0), 1e-12 * v2);

        let r = rng.gen_range(1.0..7.0);
        let cu = apply_c_with(&u, r, &mut ws).expect("r ≥ 1").inner(&u);
        let lr = u.lp_norm_with(r + 1.0, &mut ws).expect("p ≥ 1").powf(r + 1.0);
        damping.check((cu - lr).abs(), 1e-8 * lr);
    }
    [cancel, anti, stokes, poincare, damping].into_iter().map(Tally::done).collect()
}

/// Which monotonicity family to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotoneCase {
    /// `r = 5`, random `μ, β`.
    Supercritical,
    /// `r = 3`, random `μ, β` with `2βμ ≥ 1`.
    Critical,
    /// `n = 2`, `r = 2`, random `μ, β`.
    LocalL4,
}

/// `⟨G(u) − G(v), u − v⟩ + η‖u − v‖² ≥ 0` for the family's `η`, plus the damping lower bound
/// `⟨C(u) − C(v), u − v⟩ ≥ 2^{1−r}‖u − v‖^{r+1}_{L^{r+1}}`.
pub fn monotonicity_suite(
    basis: &Arc<SpectralBasis>,
    case: MonotoneCase,
    cases: usize,
    seed: u64,
) -> Result<Vec<SuiteResult>> {
    let mut rng = stream(seed, 2 + case as u64);
    let label = match case {
        MonotoneCase::Supercritical => "r = 5",
        MonotoneCase::Critical => "r = 3, 2βμ ≥ 1",
        MonotoneCase::LocalL4 => "n = 2, r = 2, L4 ball",
    };
    let mut mono = Tally::new(&format!("G + eta I monotone ({label})"));
    let mut lower = Tally::new(&format!("damping lower bound ({label})"));
    for _ in 0..cases {
        let mu = log_uniform(&mut rng, 0.1, 10.0);
        let (beta, r) = match case {
            MonotoneCase::Supercritical => (log_uniform(&mut rng, 0.1, 10.0), 5.0),
            MonotoneCase::Critical => ((1.0 / (2.0 * mu)) * log_uniform(&mut rng, 1.0, 10.0), 3.0),
            MonotoneCase::LocalL4 => (log_uniform(&mut rng, 0.1, 10.0), 2.0),
        };
        let p = PhysParams::new(mu, beta, r)?;
        // keep |u|^{r+1} within range of the tolerance scale
        let su = log_uniform(&mut rng, 1e-2, 3.0);
        let u = VelocityField::random(basis, &mut rng, su);
        let sv = log_uniform(&mut rng, 1e-2, 3.0);
        let v = VelocityField::random(basis, &mut rng, sv);
        let rep = monotonicity_report(&u, &v, &p)?;
        let dm = damping_monotonicity(&u, &v, r)?;
        let scale = rep.scale
            + rep.pairing.abs()
            + rep.eta * u.sub(&v).norm_h_sq()
            + beta * dm.pairing.abs();
        mono.check((-rep.residual).max(0.0), 1e-9 * scale);
        lower.check(
            (dm.power_bound - dm.pairing).max(0.0),
            1e-9 * (dm.pairing.abs() + dm.power_bound).max(f64::MIN_POSITIVE),
        );
    }
    Ok(vec![mono.done(), lower.done()])
}

/// `σ` kills the high modes, `σ^{-1}σ = I` on the forced block, and `Tr(σσ*) = Σσ_j²`.
pub fn noise_suite(noise: &NoiseModel, cases: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let basis = noise.basis().clone();
    let mut rng = stream(seed, 9);
    let mut support = Tally::new("sigma(u) w supported on forced modes");
    let mut inverse = Tally::new("sigma^-1 sigma = I on forced modes");
    let mut trace = Tally::new("Tr = sum sigma_j^2 (unit-vector sum)");
    for _ in 0..cases {
        let u = field(&basis, &mut rng);
        let w = field(&basis, &mut rng);
        let sw = noise.apply(&w, Some(&u))?;
        support.check(sw.high_norm(), 0.0);
        let back = noise.inverse_on_low(&sw, Some(&u))?;
        let (low, _) = w.split_low_high();
        inverse.check(back.sub(&low).norm_h(), 1e-12 * low.norm_h().max(f64::MIN_POSITIVE));
    }
    // Σ_j ‖σ e_j‖² over the real forced basis
    let n = noise.sigma().len();
    let z = VelocityField::zeros(&basis);
    let g = noise.gain(Some(&z))?;
    let mut sum = 0.0;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let f = VelocityField::from_low_dofs(&basis, &e)?;
        sum += noise.apply(&f, Some(&z))?.norm_h_sq() / (g * g);
    }
    trace.check((sum - noise.trace()).abs(), 1e-12 * noise.trace());
    Ok(vec![support.done(), inverse.done(), trace.done()])
}

/// Cheap self-check used by the proptest command: `‖u‖_{L²}` on the grid equals `‖u‖_H`.
pub fn parseval_suite(basis: &Arc<SpectralBasis>, cases: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = stream(seed, 10);
    let mut t = Tally::new("grid L2 norm = spectral H norm");
    for _ in 0..cases {
        let u = field(basis, &mut rng);
        let l2 = u.norm(Norm::Lp(2.0))?;
        t.check((l2 - u.norm_h()).abs(), 1e-12 * u.norm_h());
    }
    Ok(t.done())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let b2 = SpectralBasis::build(2, 8, 4.5).unwrap();
        assert!(operator_suite(&b2, 50, 1).iter().all(|s| s.pass() && s.cases == 50));
        let b3 = SpectralBasis::build(3, 4, 2.5).unwrap();
        assert!(monotonicity_suite(&b3, MonotoneCase::Critical, 20, 1)
            .unwrap()
            .iter()
            .all(|s| s.pass()));
        for case in [MonotoneCase::Supercritical, MonotoneCase::LocalL4] {
            assert!(monotonicity_suite(&b2, case, 50, 1).unwrap().iter().all(|s| s.pass()));
        }
        let noise = NoiseModel::multiplicative(&b2, vec![0.1; b2.n_low_slots()], 1.0, 0.5).unwrap();
        assert!(noise_suite(&noise, 20, 1).unwrap().iter().all(|s| s.pass()));
        assert!(parseval_suite(&b2, 20, 1).unwrap().pass());
    }

    #[test]
    fn tally_counts_violations() {
        let mut t = Tally::new("x");
        t.check(0.5, 1.0);
        t.check(2.0, 1.0);
        t.check(0.0, 0.0);
        let r = t.done();
        assert_eq!((r.cases, r.violations), (3, 1));
        assert_eq!(r.worst_ratio, 2.0);
    }
}
