//! Semi-implicit Euler–Maruyama time stepping and the Itô energy ledger.
//!
//! One step solves `(I + dt μA) u⁺ = u − dt[B(u,u) + βC(u)] + σ(u)ΔW` mode by mode. The
//! ledger integrates `‖u‖²_V`, `‖u‖²_H` and `‖u‖^{r+1}_{L^{r+1}}` with the trapezoid rule and
//! the martingale `M = 2Σ(σΔW, u)` at the left point.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, SpectralBasis};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::noise::{NoiseModel, NoiseSpec};
use crate::operators::{Nonlinear, NonlinearOut, PhysParams};
use crate::rng::RngKey;

/// Abort threshold on `‖u‖_H`.
pub const BLOWUP_NORM: f64 = 1e6;
const MAX_HALVINGS: u32 = 12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub t: f64,
    pub norm_h_sq: f64,
    /// `∫‖u‖²_V`.
    pub int_v: f64,
    /// `∫‖u‖^{r+1}_{L^{r+1}}`.
    pub int_lr1: f64,
    /// `∫‖u‖²_H`.
    pub int_h: f64,
    /// `M(t) = 2Σ(σ(u)ΔW, u)`.
    pub martingale: f64,
    /// `⟨M⟩(t) = 4Σ Tr(σσ* u⊗u) Δt`.
    pub quad_var: f64,
    /// `∫Tr(σ(u)σ(u)*)`; equals `Tr·t` for additive noise.
    pub int_trace: f64,
    /// Steps where `dt·β·max|u|^{r−1} ≥ 1`.
    pub guard_warnings: u64,
    /// Half-steps inserted by the explicit-term guard.
    pub halvings: u64,
    // trailing trapezoid weight of the last L^{r+1} value not yet added
    #[serde(default)]
    open_dt: f64,
    last_v: f64,
    last_h: f64,
}

impl EnergyLedger {
    pub fn start(x: &VelocityField) -> Self {
        EnergyLedger {
            norm_h_sq: x.norm_h_sq(),
            last_v: x.norm_v_sq(),
            last_h: x.norm_h_sq(),
            ..Default::default()
        }
    }

    /// Whether every integral includes its right end point.
    pub fn is_closed(&self) -> bool {
        self.open_dt == 0.0
    }

    /// Adds the missing end-point half of the `L^{r+1}` integral.
    pub fn closed(&self, lr1_now: f64) -> Self {
        let mut c = self.clone();
        c.int_lr1 += 0.5 * c.open_dt * lr1_now;
        c.open_dt = 0.0;
        c
    }

    /// `M_{k₀}(t) = M(t) − (k₀/2)⟨M⟩(t)`.
    pub fn exp_martingale(&self, k0: f64) -> f64 {
        self.martingale - 0.5 * k0 * self.quad_var
    }

    /// `‖u‖² + 2μ∫‖u‖²_V + 2β∫‖u‖^{r+1} − ‖x‖² − ∫Tr − M`.
    pub fn residual(&self, x_norm_sq: f64, p: &PhysParams) -> f64 {
        self.norm_h_sq + 2.0 * p.mu * self.int_v + 2.0 * p.beta * self.int_lr1
            - x_norm_sq
            - self.int_trace
            - self.martingale
    }

    /// The functional inside the exponential moment:
    /// `‖u‖² + μ∫‖u‖²_V + 2β∫‖u‖^{r+1} − ∫Tr`.
    pub fn moment_functional(&self, p: &PhysParams) -> f64 {
        self.norm_h_sq + p.mu * self.int_v + 2.0 * p.beta * self.int_lr1 - self.int_trace
    }

    fn begin_step(&mut self, dt: f64, lr1: f64) {
        self.int_lr1 += 0.5 * (self.open_dt + dt) * lr1;
        self.open_dt = dt;
    }

    fn end_step(&mut self, dt: f64, next: &VelocityField) {
        let (v, h) = (next.norm_v_sq(), next.norm_h_sq());
        self.int_v += 0.5 * dt * (self.last_v + v);
        self.int_h += 0.5 * dt * (self.last_h + h);
        self.last_v = v;
        self.last_h = h;
        self.norm_h_sq = h;
        self.t += dt;
    }
}

/// Residual of the energy identity with a fixed trace: `‖u‖² + 2μ∫V + 2β∫L − ‖x‖² − Tr·t − M`.
pub fn energy_residual(ledger: &EnergyLedger, x_norm_sq: f64, tr: f64, p: &PhysParams) -> f64 {
    ledger.norm_h_sq + 2.0 * p.mu * ledger.int_v + 2.0 * p.beta * ledger.int_lr1
        - x_norm_sq
        - tr * ledger.t
        - ledger.martingale
}

/// Reaction to `dt·β·max|u|^{r−1} ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardPolicy {
    /// Count the violation and carry on.
    #[default]
    Warn,
    /// Split the step into Brownian-bridge halves until the condition holds.
    Halve,
}

pub struct Stepper {
    basis: Arc<SpectralBasis>,
    params: PhysParams,
    noise: Option<NoiseModel>,
    dt: f64,
    advection: bool,
    guard: GuardPolicy,
    nl: Nonlinear,
    xi: Vec<f64>,
}

impl Stepper {
    pub fn new(
        basis: &Arc<SpectralBasis>,
        params: PhysParams,
        noise: Option<NoiseModel>,
        dt: f64,
    ) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if params.alpha != 0.0 {
            return Err(Error::InvalidArgument(
                "the Darcy coefficient α is fixed to 0 in the stepper".into(),
            ));
        }
        if let Some(n) = &noise {
            basis.check_same(n.basis())?;
        }
        Ok(Stepper {
            basis: basis.clone(),
            params,
            noise,
            dt,
            advection: true,
            guard: GuardPolicy::Warn,
            nl: Nonlinear::new(basis),
            xi: vec![0.0; basis.n_low_slots()],
        })
    }

    /// Switches the advection term `B(u, u)` on or off.
    pub fn with_advection(mut self, on: bool) -> Self {
        self.advection = on;
        self
    }

    pub fn with_guard(mut self, guard: GuardPolicy) -> Self {
        self.guard = guard;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    /// `‖u‖^{r+1}_{L^{r+1}}`, used to close a ledger at a sample time.
    pub fn lr1(&mut self, u: &VelocityField) -> f64 {
        self.nl.lr1(u, self.params.r)
    }

    pub fn close(&mut self, u: &VelocityField, ledger: &EnergyLedger) -> EnergyLedger {
        if ledger.is_closed() {
            ledger.clone()
        } else {
            ledger.closed(self.lr1(u))
        }
    }

    /// One step of size `dt` driven by the Wiener increment of `(key, step)`.
    pub fn step(
        &mut self,
        u: &VelocityField,
        key: &RngKey,
        step: u64,
        ledger: &mut EnergyLedger,
    ) -> Result<VelocityField> {
        self.basis.check_same(u.basis())?;
        if !u.is_finite() {
            return Err(guard_error(key, step, "non-finite state"));
        }
        let mut dw = std::mem::take(&mut self.xi);
        match &self.noise {
            Some(_) => {
                key.normals(step, &mut dw);
                let s = self.dt.sqrt();
                dw.iter_mut().for_each(|x| *x *= s);
            }
            None => dw.iter_mut().for_each(|x| *x = 0.0),
        }
        let out = self.advance(u, &dw, self.dt, key, step, 0, 1, ledger);
        self.xi = dw;
        let next = out?;
        check_guard(&next, key, step)?;
        Ok(next)
    }

    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        u: &VelocityField,
        dw: &[f64],
        dt: f64,
        key: &RngKey,
        step: u64,
        depth: u32,
        label: u64,
        ledger: &mut EnergyLedger,
    ) -> Result<VelocityField> {
        let out = self.nl.eval(u, &self.params, self.advection);
        let explicit = dt * self.params.beta * out.max_abs.powf(self.params.r - 1.0);
        if explicit >= 1.0 {
            if self.guard == GuardPolicy::Halve && depth < MAX_HALVINGS {
                ledger.halvings += 1;
                // Brownian bridge: ΔW₁ = ΔW/2 + √dt/2·Z, ΔW₂ = ΔW/2 − √dt/2·Z
                let mut z = vec![0.0; dw.len()];
                if self.noise.is_some() {
                    key.bridge_normals(step, label, &mut z);
                    let sq = 0.5 * dt.sqrt();
                    z.iter_mut().for_each(|x| *x *= sq);
                }
                let first: Vec<f64> = dw.iter().zip(&z).map(|(w, z)| 0.5 * w + z).collect();
                let second: Vec<f64> = dw.iter().zip(&z).map(|(w, z)| 0.5 * w - z).collect();
                let mid =
                    self.advance(u, &first, 0.5 * dt, key, step, depth + 1, 2 * label, ledger)?;
                check_guard(&mid, key, step)?;
                return self.advance(
                    &mid,
                    &second,
                    0.5 * dt,
                    key,
                    step,
                    depth + 1,
                    2 * label + 1,
                    ledger,
                );
            }
            ledger.guard_warnings += 1;
        }
        self.finish(u, out, dw, dt, None, Some(ledger))
    }

    /// Completes a step from a precomputed nonlinear term, with an optional extra drift on the
    /// forced block (real coordinates, per unit time).
    pub(crate) fn finish(
        &self,
        u: &VelocityField,
        out: NonlinearOut,
        dw: &[f64],
        dt: f64,
        extra: Option<&[f64]>,
        ledger: Option<&mut EnergyLedger>,
    ) -> Result<VelocityField> {
        let mut rhs = out.term;
        rhs.scale_mut(-dt);
        rhs.axpy(1.0, u);
        let mut forcing: Option<(f64, &NoiseModel)> = None;
        if let Some(noise) = &self.noise {
            let g = noise.gain(Some(u))?;
            let kick: Vec<f64> = noise.sigma().iter().zip(dw).map(|(s, w)| g * s * w).collect();
            rhs.add_low_dofs(&kick, 1.0);
            forcing = Some((g, noise));
        }
        if let Some(e) = extra {
            rhs.add_low_dofs(e, dt);
        }
        let mu_dt = self.params.mu * dt;
        for (slot, a) in rhs.coeffs_mut().iter_mut().enumerate() {
            *a /= 1.0 + mu_dt * self.basis.slot_lambda(slot);
        }
        if let Some(ledger) = ledger {
            ledger.begin_step(dt, out.lr1);
            if let Some((g, noise)) = forcing {
                let d = u.low_dofs();
                let (mut dm, mut dq) = (0.0, 0.0);
                for ((s, w), x) in noise.sigma().iter().zip(dw).zip(&d) {
                    dm += g * s * w * x;
                    dq += (g * s * x).powi(2);
                }
                ledger.martingale += 2.0 * dm;
                ledger.quad_var += 4.0 * dq * dt;
                ledger.int_trace += g * g * noise.trace() * dt;
            }
            ledger.end_step(dt, &rhs);
        }
        Ok(rhs)
    }

    pub(crate) fn eval(&mut self, u: &VelocityField) -> NonlinearOut {
        self.nl.eval(u, &self.params, self.advection)
    }

    /// Runs `n_steps` steps from `x`, calling `observe(step, u, closed ledger)` at step 0 and
    /// every `every` steps (and at the last step).
    pub fn run<F>(
        &mut self,
        x: &VelocityField,
        key: &RngKey,
        n_steps: u64,
        every: u64,
        observe: F,
    ) -> Result<(VelocityField, EnergyLedger)>
    where
        F: FnMut(u64, &VelocityField, &EnergyLedger) -> Result<()>,
    {
        self.run_from(x, EnergyLedger::start(x), key, 0, n_steps, every, observe)
    }

    /// Continues a run at step index `start` (e.g. from a checkpoint) up to step `end`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_from<F>(
        &mut self,
        x: &VelocityField,
        mut ledger: EnergyLedger,
        key: &RngKey,
        start: u64,
        end: u64,
        every: u64,
        mut observe: F,
    ) -> Result<(VelocityField, EnergyLedger)>
    where
        F: FnMut(u64, &VelocityField, &EnergyLedger) -> Result<()>,
    {
        let every = every.max(1);
        let mut u = x.clone();
        if start.is_multiple_of(every) || start == end {
            observe(start, &u, &self.close(&u, &ledger))?;
        }
        for s in start..end {
            u = self.step(&u, key, s, &mut ledger)?;
            let done = s + 1;
            if done % every == 0 || done == end {
                observe(done, &u, &self.close(&u, &ledger))?;
            }
        }
        Ok((u, ledger))
    }
}

fn guard_error(key: &RngKey, step: u64, reason: impl Into<String>) -> Error {
    Error::Guard {
        trajectory: key.trajectory,
        step,
        reason: reason.into(),
    }
}

fn check_guard(u: &VelocityField, key: &RngKey, step: u64) -> Result<()> {
    if !u.is_finite() {
        return Err(guard_error(key, step, "non-finite coefficient"));
    }
    let n = u.norm_h();
    if n > BLOWUP_NORM {
        return Err(guard_error(key, step, format!("‖u‖_H = {n:e} exceeds {BLOWUP_NORM:e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[derive(Default)]
pub enum InitialCondition {
    #[default]
    Zero,
    SingleMode {
        k: Vec<i64>,
        #[serde(default)]
        pol: usize,
        amplitude: f64,
    },
    /// Coefficients read from a checkpoint file.
    File { path: PathBuf },
    /// Random field with decaying spectrum scaled to `norm`, drawn from the auxiliary stream
    /// `label` of the run seed.
    Random {
        norm: f64,
        #[serde(default)]
        label: u64,
    },
}


impl InitialCondition {
    pub fn build(&self, basis: &Arc<SpectralBasis>, seed: u64) -> Result<VelocityField> {
        match self {
            InitialCondition::Zero => Ok(VelocityField::zeros(basis)),
            InitialCondition::SingleMode { k, pol, amplitude } => {
                VelocityField::single_mode(basis, k, *pol, Complex64::new(*amplitude, 0.0))
            }
            InitialCondition::File { path } => {
                let u = crate::checkpoint::read_field(path)?;
                basis.check_same(u.basis())?;
                // rebind to the caller's basis handle
                VelocityField::from_coeffs(basis, u.coeffs().to_vec())
            }
            InitialCondition::Random { norm, label } => {
                let mut rng = RngKey::new(seed, u64::MAX).aux(*label);
                Ok(VelocityField::random(basis, &mut rng, *norm))
            }
        }
    }
}

fn default_samples() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// Everything needed to run one ensemble of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub params: PhysParams,
    pub basis: BasisSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub seed: u64,
    pub paths: usize,
    /// Number of sampling intervals on `[0, T]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_true")]
    pub advection: bool,
    #[serde(default)]
    pub guard: GuardPolicy,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.horizon > 0.0 && self.dt > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds the horizon {}",
                self.dt, self.horizon
            )));
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidArgument("at least one path is required".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument("at least one sample interval is required".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    /// Steps between samples (the last interval may be shorter).
    pub fn sample_every(&self) -> u64 {
        let n = self.steps();
        n.div_ceil(self.samples as u64).max(1)
    }

    pub fn build_basis(&self) -> Result<Arc<SpectralBasis>> {
        SpectralBasis::from_spec(self.basis)
    }

    pub fn stepper(&self, basis: &Arc<SpectralBasis>) -> Result<Stepper> {
        Ok(Stepper::new(basis, self.params, self.noise.build(basis)?, self.dt)?
            .with_advection(self.advection)
            .with_guard(self.guard))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: u64,
    pub t: f64,
    pub ledger: EnergyLedger,
    pub state: VelocityField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub key: RngKey,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trajectory holds at least its initial state")
    }
}

/// Simulates trajectory `trajectory` of the ensemble described by `config` from `x`.
pub fn simulate(config: &SimConfig, x: &VelocityField, trajectory: u64) -> Result<Trajectory> {
    config.validate()?;
    let basis = x.basis().clone();
    if basis.spec() != config.basis {
        return Err(Error::BasisMismatch(format!(
            "initial state lives on {:?}, config asks for {:?}",
            basis.spec(),
            config.basis
        )));
    }
    let mut stepper = config.stepper(&basis)?;
    let key = RngKey::new(config.seed, trajectory);
    let dt = config.dt;
    let mut samples = Vec::new();
    stepper.run(x, &key, config.steps(), config.sample_every(), |step, u, ledger| {
        samples.push(Sample {
            step,
            t: step as f64 * dt,
            ledger: ledger.clone(),
            state: u.clone(),
        });
        Ok(())
    })?;
    Ok(Trajectory { key, samples })
}

/// Runs `f(path)` for `path ∈ 0..paths` on the rayon pool; results are in path order, so any
/// subsequent sequential reduction is deterministic.
pub fn ensemble<T, F>(paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..paths as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_mode(basis: &Arc<SpectralBasis>, a: f64) -> VelocityField {
        VelocityField::single_mode(basis, &[1, 0], 0, Complex64::new(a, 0.0)).unwrap()
    }

    #[test]
    fn linear_decay_of_one_mode() {
        let basis = SpectralBasis::build(2, 8, 1.5).unwrap();
        let p = PhysParams::new(1.0, 0.0, 1.0).unwrap();
        let dt = 0.01;
        let mut st = Stepper::new(&basis, p, None, dt).unwrap();
        let u = unit_mode(&basis, 0.7);
        let mut l = EnergyLedger::start(&u);
        let next = st.step(&u, &RngKey::new(0, 0), 0, &mut l).unwrap();
        let expect = unit_mode(&basis, 0.7 / (1.0 + dt));
        assert!(next.sub(&expect).norm_h() < 1e-15);
    }

    #[test]
    fn zero_state_gets_resolved_noise() {
        let basis = SpectralBasis::build(2, 8, 4.5).unwrap();
        let p = PhysParams::new(1.0, 1.0, 5.0).unwrap();
        let noise = NoiseModel::additive_with_trace(&basis, 0.01).unwrap();
        let dt = 1e-2;
        let mut st = Stepper::new(&basis, p, Some(noise.clone()), dt).unwrap();
        let key = RngKey::new(3, 1);
        let u0 = VelocityField::zeros(&basis);
        let mut l = EnergyLedger::start(&u0);
        let next = st.step(&u0, &key, 0, &mut l).unwrap();
        let inc = noise.sample_increment(None, dt, &key, 0).unwrap().to_field(&basis).unwrap();
        let mut expect = inc.clone();
        for (slot, a) in expect.coeffs_mut().iter_mut().enumerate() {
            *a /= 1.0 + dt * basis.slot_lambda(slot);
        }
        assert!(next.sub(&expect).norm_h() < 1e-15);
        assert_eq!(next.high_norm(), 0.0);
    }

    #[test]
    fn trivial_horizon_keeps_initial_state() {
        let cfg = SimConfig {
            params: PhysParams::new(1.0, 1.0, 5.0).unwrap(),
            basis: BasisSpec {
                dim: 2,
                resolution: 8,
                eigen_cut: 4.5,
            },
            noise: NoiseSpec::additive_trace(0.01),
            dt: 1e-3,
            horizon: 0.0,
            initial: InitialCondition::Zero,
            seed: 1,
            paths: 1,
            samples: 4,
            advection: true,
            guard: GuardPolicy::Warn,
        };
        let basis = cfg.build_basis().unwrap();
        let x = unit_mode(&basis, 0.3);
        let tr = simulate(&cfg, &x, 0).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.samples[0].state, x);
        assert_eq!(energy_residual(&tr.samples[0].ledger, x.norm_h_sq(), 0.01, &cfg.params), 0.0);
    }

    #[test]
    fn halving_splits_the_step() {
        let basis = SpectralBasis::build(2, 8, 4.5).unwrap();
        let p = PhysParams::new(1.0, 1.0, 5.0).unwrap();
        let noise = NoiseModel::additive_with_trace(&basis, 0.01).unwrap();
        let u = unit_mode(&basis, 20.0);
        let mut warn = Stepper::new(&basis, p, Some(noise.clone()), 0.1).unwrap();
        let mut l = EnergyLedger::start(&u);
        let _ = warn.step(&u, &RngKey::new(1, 0), 0, &mut l);
        assert_eq!(l.guard_warnings, 1);
        let mut halve = Stepper::new(&basis, p, Some(noise), 0.1)
            .unwrap()
            .with_guard(GuardPolicy::Halve);
        let mut l = EnergyLedger::start(&u);
        let next = halve.step(&u, &RngKey::new(1, 0), 0, &mut l).unwrap();
        assert!(l.halvings > 0);
        assert!((l.t - 0.1).abs() < 1e-12);
        assert!(next.norm_h() < u.norm_h());
    }
}
