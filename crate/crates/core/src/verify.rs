//! Monte Carlo estimators for the semigroup `P_t f(x) = E f(u(t, x))`: log-Harnack margins,
//! gradient bounds, exponential moments and Krylov–Bogoliubov time averages.
//!
//! Ensembles started from different points share noise keys path by path (same seed), so
//! differences between them are common-random-number estimates.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::constants::HarnackConstants;
use crate::coupling::time_steps;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::integrator::{ensemble, EnergyLedger, SimConfig};
use crate::rng::RngKey;
use crate::stats::{log_mean_exp, Estimate, LogWeights, Welford};

/// Test observables with exactly known Lipschitz constants.
#[derive(Debug, Clone)]
pub enum ObservableF {
    /// `log f(u) = c·√(1 + ‖u − a‖²)`, so `‖∇log f‖_∞ = c`.
    ExpLipschitz { center: VelocityField, c: f64 },
    /// `g(u) = min(c‖u − a‖, cap)`, so `‖∇g‖_∞ = c`.
    BoundedLipschitz {
        center: VelocityField,
        c: f64,
        cap: f64,
    },
}

impl ObservableF {
    pub fn exp_lipschitz(center: &VelocityField, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale c must be nonnegative, got {c}")));
        }
        Ok(ObservableF::ExpLipschitz {
            center: center.clone(),
            c,
        })
    }

    pub fn bounded_lipschitz(center: &VelocityField, c: f64, cap: f64) -> Result<Self> {
        if !(c >= 0.0 && cap > 0.0 && c.is_finite() && cap.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need c ≥ 0 and cap > 0, got c = {c}, cap = {cap}"
            )));
        }
        Ok(ObservableF::BoundedLipschitz {
            center: center.clone(),
            c,
            cap,
        })
    }

    fn center(&self) -> &VelocityField {
        match self {
            ObservableF::ExpLipschitz { center, .. } | ObservableF::BoundedLipschitz { center, .. } => {
                center
            }
        }
    }

    fn dist(&self, u: &VelocityField) -> f64 {
        // ‖u − a‖ without allocating
        let a = self.center();
        let d2 = u.norm_h_sq() - 2.0 * u.inner(a) + a.norm_h_sq();
        d2.max(0.0).sqrt()
    }

    /// `log f(u)`.
    pub fn log_value(&self, u: &VelocityField) -> f64 {
        match self {
            ObservableF::ExpLipschitz { c, .. } => {
                let d = self.dist(u);
                c * (1.0 + d * d).sqrt()
            }
            ObservableF::BoundedLipschitz { .. } => self.value(u).ln(),
        }
    }

    pub fn value(&self, u: &VelocityField) -> f64 {
        match self {
            ObservableF::ExpLipschitz { .. } => self.log_value(u).exp(),
            ObservableF::BoundedLipschitz { c, cap, .. } => (c * self.dist(u)).min(*cap),
        }
    }

    /// `‖∇log f‖_∞` (exp-Lipschitz) or `‖∇g‖_∞` (bounded Lipschitz).
    pub fn lipschitz(&self) -> f64 {
        match self {
            ObservableF::ExpLipschitz { c, .. } | ObservableF::BoundedLipschitz { c, .. } => *c,
        }
    }
}

/// `x + dist·d` for a random unit direction `d` drawn from `rng`.
pub fn displaced<R: Rng + ?Sized>(x: &VelocityField, dist: f64, rng: &mut R) -> VelocityField {
    let d = VelocityField::random(x.basis(), rng, 1.0);
    let mut y = x.clone();
    y.axpy(dist, &d);
    y
}

#[derive(Debug, Clone)]
pub struct PathRecord {
    pub states: Vec<VelocityField>,
    /// Closed ledgers at the state times.
    pub ledgers: Vec<EnergyLedger>,
    /// Moment functional at every `moment_every`-th step (including step 0).
    pub moments: Vec<f64>,
}

/// Plain (uncoupled) trajectories from one start, with snapshots at fixed times.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub x: VelocityField,
    pub times: Vec<f64>,
    pub moment_every: u64,
    pub dt: f64,
    pub paths: Vec<PathRecord>,
}

/// Runs `cfg.paths` trajectories from `x` to the last of `times`. `moment_every = 0` skips
/// the moment grid.
pub fn run_ensemble(
    cfg: &SimConfig,
    x: &VelocityField,
    times: &[f64],
    moment_every: u64,
) -> Result<Ensemble> {
    cfg.validate()?;
    let steps = time_steps(times, cfg.dt)?;
    let end = steps.last().copied().unwrap_or(0);
    let basis: Arc<SpectralBasis> = x.basis().clone();
    let every = match moment_every {
        0 => steps.iter().fold(0, |g, &s| gcd(g, s)).max(1),
        m => steps.iter().fold(m, |g, &s| gcd(g, s)).max(1),
    };
    let params = cfg.params;
    let paths = ensemble(cfg.paths, |path| {
        let mut st = cfg.stepper(&basis)?;
        let key = RngKey::new(cfg.seed, path);
        let mut rec = PathRecord {
            states: Vec::with_capacity(steps.len()),
            ledgers: Vec::with_capacity(steps.len()),
            moments: Vec::new(),
        };
        let mut next = 0;
        st.run(x, &key, end, every, |s, u, ledger| {
            if moment_every > 0 && s % moment_every == 0 {
                rec.moments.push(ledger.moment_functional(&params));
            }
            if next < steps.len() && steps[next] == s {
                rec.states.push(u.clone());
                rec.ledgers.push(ledger.clone());
                next += 1;
            }
            Ok(())
        })?;
        Ok(rec)
    })?;
    Ok(Ensemble {
        x: x.clone(),
        times: times.to_vec(),
        moment_every,
        dt: cfg.dt,
        paths,
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Ensemble {
    pub fn state_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    fn index(&self, t: f64) -> Result<usize> {
        self.state_index(t)
            .ok_or_else(|| Error::InvalidArgument(format!("ensemble has no snapshot at t = {t}")))
    }

    pub fn mean_of<F: Fn(&VelocityField) -> f64>(&self, t: f64, f: F) -> Result<Estimate> {
        let i = self.index(t)?;
        Ok(Estimate::of(self.paths.iter().map(|p| f(&p.states[i]))))
    }

    /// Energy-identity residuals of every path at time `t`.
    pub fn residuals(&self, t: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
        let i = self.index(t)?;
        let x2 = self.x.norm_h_sq();
        Ok(self.paths.iter().map(|p| p.ledgers[i].residual(x2, &cfg.params)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEstimate {
    pub t: f64,
    /// `log P_t f(x)`.
    pub log_pf: Estimate,
    /// `P_t log f(x)`.
    pub p_log_f: Estimate,
}

impl SemigroupEstimate {
    /// Jensen: `P_t log f ≤ log P_t f` up to three combined standard errors.
    pub fn jensen_ok(&self) -> bool {
        let s = (self.log_pf.se.powi(2) + self.p_log_f.se.powi(2)).sqrt();
        self.p_log_f.mean <= self.log_pf.mean + 3.0 * s
    }
}

pub fn semigroup_mc(ens: &Ensemble, t: f64, f: &ObservableF) -> Result<SemigroupEstimate> {
    if ens.paths.len() < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let i = ens.index(t)?;
    let logs: Vec<f64> = ens.paths.iter().map(|p| f.log_value(&p.states[i])).collect();
    Ok(SemigroupEstimate {
        t,
        log_pf: log_mean_exp(&logs)?,
        p_log_f: Estimate::of(logs.iter().copied()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackMargin {
    pub t: f64,
    /// `P_t log f(y)`.
    pub lhs: Estimate,
    /// `log P_t f(x)`.
    pub log_pf_x: Estimate,
    /// `Θ(x, y)`.
    pub penalty: f64,
    /// `Ψ_t(x, y)‖∇log f‖_∞`.
    pub remainder: f64,
    pub rhs: f64,
    pub combined_se: f64,
    /// `rhs + 3·se − lhs`.
    pub margin: f64,
    /// `lhs − log P_t f(x) − Θ`, the part of the gap that the decaying remainder must cover.
    pub excess: f64,
    pub pass: bool,
}

pub fn log_harnack_margin(
    from_x: &Ensemble,
    from_y: &Ensemble,
    t: f64,
    f: &ObservableF,
    consts: &HarnackConstants,
) -> Result<HarnackMargin> {
    if !matches!(f, ObservableF::ExpLipschitz { .. }) {
        return Err(Error::InvalidArgument(
            "the log-Harnack check takes an exp-Lipschitz observable".into(),
        ));
    }
    let dist = from_x.x.sub(&from_y.x).norm_h();
    let y_norm = from_y.x.norm_h();
    let sx = semigroup_mc(from_x, t, f)?;
    let sy = semigroup_mc(from_y, t, f)?;
    let penalty = consts.penalty(dist, y_norm);
    let remainder = consts.remainder(t, dist, y_norm) * f.lipschitz();
    let rhs = sx.log_pf.mean + penalty + remainder;
    let combined_se = (sy.p_log_f.se.powi(2) + sx.log_pf.se.powi(2)).sqrt();
    let margin = rhs + 3.0 * combined_se - sy.p_log_f.mean;
    Ok(HarnackMargin {
        t,
        lhs: sy.p_log_f,
        log_pf_x: sx.log_pf,
        penalty,
        remainder,
        rhs,
        combined_se,
        margin,
        excess: sy.p_log_f.mean - sx.log_pf.mean - penalty,
        pass: margin >= 0.0,
    })
}

/// Whether the measured excess over `Θ` stays under the `e^{−θt}` envelope at every time.
pub fn remainder_envelope_ok(margins: &[HarnackMargin]) -> bool {
    margins
        .iter()
        .all(|m| m.excess <= m.remainder + 3.0 * m.combined_se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub t: f64,
    pub h: f64,
    /// Central-difference directional derivatives, one per direction.
    pub directional: Vec<Estimate>,
    /// `√(P_t f² − (P_t f)²)` at `y`.
    pub std: f64,
    pub bound: f64,
    /// Some direction's estimate is below its own standard error.
    pub noise_floor: bool,
    pub pass: bool,
}

impl GradientReport {
    pub fn max_abs(&self) -> f64 {
        self.directional.iter().map(|e| e.mean.abs()).fold(0.0, f64::max)
    }
}

/// Displacement `h = 1e−2·‖y‖` with floor `1e−3`.
pub fn default_displacement(y: &VelocityField) -> f64 {
    (1e-2 * y.norm_h()).max(1e-3)
}

/// Central differences `(P_t f(y + hd) − P_t f(y − hd))/(2h)` along `directions`, with shared
/// noise, checked against the gradient estimate at the times of `base` (runs from `y`).
pub fn gradient_bound_check(
    cfg: &SimConfig,
    base: &Ensemble,
    f: &ObservableF,
    directions: &[VelocityField],
    h: f64,
    consts: &HarnackConstants,
) -> Result<Vec<GradientReport>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("displacement must be positive, got {h}")));
    }
    let y = &base.x;
    let mut pairs = Vec::with_capacity(directions.len());
    for d in directions {
        let n = d.norm_h();
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("zero direction".into()));
        }
        let mut plus = y.clone();
        plus.axpy(h / n, d);
        let mut minus = y.clone();
        minus.axpy(-h / n, d);
        pairs.push((
            run_ensemble(cfg, &plus, &base.times, 0)?,
            run_ensemble(cfg, &minus, &base.times, 0)?,
        ));
    }
    gradient_reports(base, &pairs, f, h, consts)
}

pub fn gradient_reports(
    base: &Ensemble,
    pairs: &[(Ensemble, Ensemble)],
    f: &ObservableF,
    h: f64,
    consts: &HarnackConstants,
) -> Result<Vec<GradientReport>> {
    let y_norm = base.x.norm_h();
    let mut out = Vec::new();
    for (i, &t) in base.times.iter().enumerate() {
        let w: Welford = base.paths.iter().map(|p| f.value(&p.states[i])).collect();
        let std = w.std();
        let bound = consts.gradient_bound(t, y_norm, std, f.lipschitz());
        let directional: Vec<Estimate> = pairs
            .iter()
            .map(|(p, m)| {
                Estimate::of(
                    p.paths
                        .iter()
                        .zip(&m.paths)
                        .map(|(a, b)| (f.value(&a.states[i]) - f.value(&b.states[i])) / (2.0 * h)),
                )
            })
            .collect();
        let noise_floor = directional.iter().any(|e| e.se > e.mean.abs());
        let pass = directional.iter().all(|e| e.mean.abs() - 3.0 * e.se <= bound);
        out.push(GradientReport {
            t,
            h,
            directional,
            std,
            bound,
            noise_floor,
            pass,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentMargin {
    /// Steps between grid points of the discrete supremum.
    pub grid_every: u64,
    pub estimate: Estimate,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub k: f64,
    pub horizon: f64,
    /// `2e^{k‖x‖²}`.
    pub bound: f64,
    /// One row per sample grid, coarsest first; the last row is the verdict.
    pub grids: Vec<MomentMargin>,
    pub pass: bool,
}

/// `E exp(k·S_T)` with `S_T` the discrete supremum of the moment functional, evaluated on the
/// ensemble's moment grid and on its coarsenings by the factors in `coarsen`.
pub fn exp_moment_check(
    ens: &Ensemble,
    k: f64,
    consts: &HarnackConstants,
    coarsen: &[u64],
) -> Result<ExpMomentReport> {
    if ens.moment_every == 0 {
        return Err(Error::InvalidArgument("ensemble was run without a moment grid".into()));
    }
    if !(k >= 0.0) || k > consts.k * (1.0 + 1e-12) {
        return Err(Error::Hypothesis(format!(
            "k = {k} is outside [0, λ₁μ/(4 Tr)] = [0, {}]",
            consts.k
        )));
    }
    let bound = 2.0 * (k * ens.x.norm_h_sq()).exp();
    let mut factors: Vec<u64> = coarsen.iter().copied().filter(|&c| c > 1).collect();
    factors.sort_unstable_by(|a, b| b.cmp(a));
    factors.dedup();
    factors.push(1);
    let mut grids = Vec::new();
    for c in factors {
        let logs: Vec<f64> = ens
            .paths
            .iter()
            .map(|p| {
                let sup = p
                    .moments
                    .iter()
                    .step_by(c as usize)
                    .chain(p.moments.last())
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                k * sup
            })
            .collect();
        let estimate = LogWeights::new(&logs)?.mean_weight();
        let margin = bound + 3.0 * estimate.se - estimate.mean;
        grids.push(MomentMargin {
            grid_every: c * ens.moment_every,
            estimate,
            margin,
            pass: margin >= 0.0,
        });
    }
    let pass = grids.last().is_some_and(|g| g.pass);
    Ok(ExpMomentReport {
        k,
        horizon: ens.times.last().copied().unwrap_or(0.0),
        bound,
        grids,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicAverage {
    pub horizon: f64,
    pub burn_in: f64,
    /// `ν_n(‖·‖²_V)`.
    pub nu_v: Estimate,
    /// `ν_n(‖·‖^{r+1}_{L^{r+1}})`.
    pub nu_lr1: Estimate,
    /// `ν_n(‖·‖²_H)`.
    pub nu_h: Estimate,
    pub terminal_h_sq: Estimate,
    /// `2μν(V) + 2βν(L) − ν(Tr) − (‖u_b‖² − ‖u_n‖²)/(n − b)` per path.
    pub residual: Estimate,
    /// `ν(V) − Tr/(2μ)`, recorded only.
    pub gap_v: f64,
    /// `ν(L) − Tr/(2β)`, recorded only.
    pub gap_lr1: f64,
}

impl ErgodicAverage {
    pub fn residual_ok(&self, slack: f64) -> bool {
        self.residual.mean.abs() <= 3.0 * self.residual.se + slack
    }
}

/// Time averages over `[burn_in, horizon]` from `x`, one per path of `cfg`.
pub fn time_average(
    cfg: &SimConfig,
    x: &VelocityField,
    horizon: f64,
    burn_in: f64,
) -> Result<ErgodicAverage> {
    if !(horizon > burn_in && burn_in >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need horizon > burn-in ≥ 0, got {horizon} and {burn_in}"
        )));
    }
    let span = horizon - burn_in;
    let (p, dt) = (cfg.params, cfg.dt);
    let times: Vec<f64> = if burn_in > 0.0 { vec![burn_in, horizon] } else { vec![0.0, horizon] };
    let steps = time_steps(&times, dt)?;
    let basis = x.basis().clone();
    let rows = ensemble(cfg.paths, |path| {
        let mut st = cfg.stepper(&basis)?;
        let key = RngKey::new(cfg.seed, path);
        let (ub, lb) = st.run(x, &key, steps[0], steps[0].max(1), |_, _, _| Ok(()))?;
        let lb = st.close(&ub, &lb);
        let (un, ln) = st.run_from(&ub, lb.clone(), &key, steps[0], steps[1], steps[1], |_, _, _| Ok(()))?;
        let ln = st.close(&un, &ln);
        let nu_v = (ln.int_v - lb.int_v) / span;
        let nu_l = (ln.int_lr1 - lb.int_lr1) / span;
        let nu_h = (ln.int_h - lb.int_h) / span;
        let nu_tr = (ln.int_trace - lb.int_trace) / span;
        let res = 2.0 * p.mu * nu_v + 2.0 * p.beta * nu_l
            - nu_tr
            - (ub.norm_h_sq() - un.norm_h_sq()) / span;
        Ok([nu_v, nu_l, nu_h, un.norm_h_sq(), res, nu_tr])
    })?;
    let col = |j: usize| Estimate::of(rows.iter().map(|r| r[j]));
    let (nu_v, nu_lr1, tr) = (col(0), col(1), col(5));
    Ok(ErgodicAverage {
        horizon,
        burn_in,
        nu_v,
        nu_lr1,
        nu_h: col(2),
        terminal_h_sq: col(3),
        residual: col(4),
        gap_v: nu_v.mean - tr.mean / (2.0 * p.mu),
        gap_lr1: if p.beta > 0.0 { nu_lr1.mean - tr.mean / (2.0 * p.beta) } else { f64::NAN },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub from_x: Estimate,
    pub from_y: Estimate,
    pub z: f64,
    pub pass: bool,
}

/// Compares `ν_n(‖·‖²_H)` from two starts; the second start uses an independent seed.
pub fn uniqueness_proxy(
    cfg: &SimConfig,
    x: &VelocityField,
    y: &VelocityField,
    horizon: f64,
    burn_in: f64,
) -> Result<(ErgodicAverage, ErgodicAverage, UniquenessReport)> {
    let ax = time_average(cfg, x, horizon, burn_in)?;
    let mut other = cfg.clone();
    other.seed = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;
    let ay = time_average(&other, y, horizon, burn_in)?;
    let z = ax.nu_h.z_against(&ay.nu_h);
    Ok((
        ax,
        ay,
        UniquenessReport {
            from_x: ax.nu_h,
            from_y: ay.nu_h,
            z,
            pass: z.abs() <= 3.0,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub dts: Vec<f64>,
    /// `|residual(T)|` of the noise-free run at each step size.
    pub residuals: Vec<f64>,
    /// `log₂` ratios of successive residuals.
    pub orders: Vec<f64>,
    /// `max |residual|/dt`.
    pub constant: f64,
}

impl RefinementStudy {
    pub fn pass(&self, min_order: f64) -> bool {
        self.orders.iter().all(|o| *o >= min_order)
    }
}

/// Noise-free energy-residual refinement `dt, dt/2, dt/4, …` at `levels` levels.
pub fn refinement_study(cfg: &SimConfig, x: &VelocityField, levels: usize) -> Result<RefinementStudy> {
    let basis = x.basis().clone();
    let mut dts = Vec::new();
    let mut residuals = Vec::new();
    for l in 0..levels {
        let dt = cfg.dt / f64::powi(2.0, l as i32);
        let mut c = cfg.clone();
        c.dt = dt;
        c.noise = crate::noise::NoiseSpec::off();
        c.validate()?;
        let mut st = c.stepper(&basis)?;
        let (u, l) = st.run(x, &RngKey::new(c.seed, 0), c.steps(), c.steps().max(1), |_, _, _| Ok(()))?;
        let l = st.close(&u, &l);
        dts.push(dt);
        residuals.push(l.residual(x.norm_h_sq(), &c.params).abs());
    }
    let orders = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let constant = residuals.iter().zip(&dts).map(|(r, d)| r / d).fold(0.0, f64::max);
    Ok(RefinementStudy {
        dts,
        residuals,
        orders,
        constant,
    })
}
