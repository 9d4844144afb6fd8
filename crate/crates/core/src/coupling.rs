//! Asymptotic coupling: a companion process `v` started at `y`, driven by the same noise as
//! `u` (started at `x`) plus the low-mode feedback `(μλ_{N₀}/2)σ(v)σ(u)^{-1}(u − v)^l`, and
//! its Girsanov density `Φ`.
//!
//! Two ways of realizing the tilted measure `P̃` (under which the shifted noise is a Wiener
//! process) are offered:
//! - [`MeasureMode::Weighted`]: simulate under `P` and reweight by `Φ(t)`;
//! - [`MeasureMode::Tilted`]: drive with `W̃` directly, so `v` is a plain solution from `y` and
//!   `u` carries the opposite control; samples are already distributed under `P̃`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::checkpoint::{self, CouplingSnapshot};
use crate::constants::{HarnackConstants, Regime};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::integrator::{ensemble, SimConfig, Stepper};
use crate::noise::NoiseModel;
use crate::rng::RngKey;
use crate::stats::{fit_decay_rate, Estimate, LogWeights, RateFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMode {
    #[default]
    Weighted,
    Tilted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingState {
    pub u: VelocityField,
    pub v: VelocityField,
    /// `log Φ(t)`.
    pub log_phi: f64,
    /// `∫₀ᵗ‖h‖² ds`.
    pub int_h_sq: f64,
    pub t: f64,
    /// Index of the next step in the keyed noise stream.
    pub step: u64,
}

impl CouplingState {
    pub fn new(x: &VelocityField, y: &VelocityField) -> Result<Self> {
        x.basis().check_same(y.basis())?;
        Ok(CouplingState {
            u: x.clone(),
            v: y.clone(),
            log_phi: 0.0,
            int_h_sq: 0.0,
            t: 0.0,
            step: 0,
        })
    }

    pub fn w(&self) -> VelocityField {
        self.u.sub(&self.v)
    }

    pub fn snapshot(&self) -> CouplingSnapshot {
        CouplingSnapshot {
            v: checkpoint::encode(&self.v),
            log_phi: self.log_phi,
            int_h_sq: self.int_h_sq,
        }
    }

    pub fn from_snapshot(
        u: VelocityField,
        snap: &CouplingSnapshot,
        t: f64,
        step: u64,
    ) -> Result<Self> {
        let v = checkpoint::decode(u.basis(), &snap.v)?;
        Ok(CouplingState {
            u,
            v,
            log_phi: snap.log_phi,
            int_h_sq: snap.int_h_sq,
            t,
            step,
        })
    }
}

/// Steps coupled pairs with a shared noise increment per step.
pub struct Coupler {
    stepper: Stepper,
    gain: f64,
    mode: MeasureMode,
    xi: Vec<f64>,
}

impl Coupler {
    pub fn new(stepper: Stepper, mode: MeasureMode) -> Result<Self> {
        let noise = stepper
            .noise()
            .ok_or_else(|| Error::InvalidNoise("coupling needs a noise model to invert".into()))?;
        let n = noise.sigma().len();
        let gain = stepper.params().mu * stepper.basis().lambda_n0() / 2.0;
        Ok(Coupler {
            stepper,
            gain,
            mode,
            xi: vec![0.0; n],
        })
    }

    pub fn from_config(cfg: &SimConfig, basis: &Arc<SpectralBasis>, mode: MeasureMode) -> Result<Self> {
        Self::new(cfg.stepper(basis)?, mode)
    }

    pub fn mode(&self) -> MeasureMode {
        self.mode
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    /// Control gain `μλ_{N₀}/2`.
    pub fn control_gain(&self) -> f64 {
        self.gain
    }

    fn noise(&self) -> &NoiseModel {
        self.stepper.noise().expect("checked at construction")
    }

    /// The control `h = (μλ_{N₀}/2)σ(u)^{-1}(u − v)^l` in real forced-block coordinates.
    pub fn control(&self, u: &VelocityField, v: &VelocityField) -> Result<Vec<f64>> {
        let noise = self.noise();
        let g = noise.gain(Some(u))?;
        Ok(u.sub(v)
            .low_dofs()
            .iter()
            .zip(noise.sigma())
            .map(|(w, s)| self.gain * w / (g * s))
            .collect())
    }

    pub fn step(&mut self, state: &mut CouplingState, key: &RngKey) -> Result<()> {
        let dt = self.stepper.dt();
        let step = state.step;
        let mut dw = std::mem::take(&mut self.xi);
        key.normals(step, &mut dw);
        let sq = dt.sqrt();
        dw.iter_mut().for_each(|x| *x *= sq);
        let out = self.advance(state, &dw, dt);
        self.xi = dw;
        out?;
        for (f, name) in [(&state.u, "u"), (&state.v, "v")] {
            if !f.is_finite() || f.norm_h() > crate::integrator::BLOWUP_NORM {
                return Err(Error::Guard {
                    trajectory: key.trajectory,
                    step,
                    reason: format!("coupled component {name} left the admissible range"),
                });
            }
        }
        Ok(())
    }

    fn advance(&mut self, state: &mut CouplingState, dw: &[f64], dt: f64) -> Result<()> {
        let noise = self.noise();
        let (gu, gv) = (noise.gain(Some(&state.u))?, noise.gain(Some(&state.v))?);
        let wl = state.w().low_dofs();
        let h: Vec<f64> = wl
            .iter()
            .zip(noise.sigma())
            .map(|(w, s)| self.gain * w / (gu * s))
            .collect();
        let h_dw: f64 = h.iter().zip(dw).map(|(a, b)| a * b).sum();
        let h_sq: f64 = h.iter().map(|a| a * a).sum();

        let out_u = self.stepper.eval(&state.u);
        let out_v = self.stepper.eval(&state.v);
        let (u_next, v_next) = match self.mode {
            MeasureMode::Weighted => {
                let ratio = gv / gu;
                let drift: Vec<f64> = wl.iter().map(|w| self.gain * ratio * w).collect();
                let u = self.stepper.finish(&state.u, out_u, dw, dt, None, None)?;
                let v = self.stepper.finish(&state.v, out_v, dw, dt, Some(&drift), None)?;
                state.log_phi -= h_dw + 0.5 * h_sq * dt;
                (u, v)
            }
            MeasureMode::Tilted => {
                let drift: Vec<f64> = wl.iter().map(|w| -self.gain * w).collect();
                let u = self.stepper.finish(&state.u, out_u, dw, dt, Some(&drift), None)?;
                let v = self.stepper.finish(&state.v, out_v, dw, dt, None, None)?;
                state.log_phi += -h_dw + 0.5 * h_sq * dt;
                (u, v)
            }
        };
        state.u = u_next;
        state.v = v_next;
        state.int_h_sq += h_sq * dt;
        state.t += dt;
        state.step += 1;
        Ok(())
    }

    /// Advances `state` to step `end`, calling `observe` after every step index in `at`.
    pub fn run_to<F>(
        &mut self,
        state: &mut CouplingState,
        key: &RngKey,
        end: u64,
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(&CouplingState) -> Result<()>,
    {
        while state.step < end {
            self.step(state, key)?;
            observe(state)?;
        }
        Ok(())
    }
}

/// Per-path observations of a coupled run at the requested times.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub w_sq: Vec<f64>,
    pub log_phi: Vec<f64>,
    pub int_h_sq: Vec<f64>,
    pub u: Vec<VelocityField>,
    pub v: Vec<VelocityField>,
}

/// A coupled ensemble observed at `times` (paths keyed by `(seed, path)`).
#[derive(Debug, Clone)]
pub struct CoupledEnsemble {
    pub mode: MeasureMode,
    pub times: Vec<f64>,
    pub paths: Vec<CoupledPath>,
}

pub(crate) fn time_steps(times: &[f64], dt: f64) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut prev = None;
    for &t in times {
        let r = t / dt;
        if !(t >= 0.0) || (r - r.round()).abs() > 1e-6 * r.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "sample time {t} is not a nonnegative multiple of dt = {dt}"
            )));
        }
        let s = r.round() as u64;
        if prev.is_some_and(|p| s <= p) {
            return Err(Error::InvalidArgument("sample times must increase".into()));
        }
        prev = Some(s);
        out.push(s);
    }
    Ok(out)
}

pub fn run_coupled(
    cfg: &SimConfig,
    x: &VelocityField,
    y: &VelocityField,
    times: &[f64],
    mode: MeasureMode,
) -> Result<CoupledEnsemble> {
    cfg.validate()?;
    x.basis().check_same(y.basis())?;
    let steps = time_steps(times, cfg.dt)?;
    let basis = x.basis().clone();
    let paths = ensemble(cfg.paths, |path| {
        let mut c = Coupler::from_config(cfg, &basis, mode)?;
        let key = RngKey::new(cfg.seed, path);
        let mut st = CouplingState::new(x, y)?;
        let mut rec = CoupledPath {
            w_sq: Vec::with_capacity(steps.len()),
            log_phi: Vec::with_capacity(steps.len()),
            int_h_sq: Vec::with_capacity(steps.len()),
            u: Vec::with_capacity(steps.len()),
            v: Vec::with_capacity(steps.len()),
        };
        for &s in &steps {
            c.run_to(&mut st, &key, s, |_| Ok(()))?;
            rec.w_sq.push(st.w().norm_h_sq());
            rec.log_phi.push(st.log_phi);
            rec.int_h_sq.push(st.int_h_sq);
            rec.u.push(st.u.clone());
            rec.v.push(st.v.clone());
        }
        Ok(rec)
    })?;
    Ok(CoupledEnsemble {
        mode,
        times: times.to_vec(),
        paths,
    })
}

impl CoupledEnsemble {
    fn column<F: Fn(&CoupledPath) -> f64>(&self, f: F) -> Vec<f64> {
        self.paths.iter().map(f).collect()
    }

    pub fn weights(&self, i: usize) -> Result<LogWeights> {
        LogWeights::new(&self.column(|p| p.log_phi[i]))
    }

    /// `E_P̃[φ]` at sample `i` for a per-path quantity `φ`.
    pub fn tilted_mean<F: Fn(&CoupledPath) -> f64>(&self, i: usize, f: F) -> Result<Estimate> {
        let vals = self.column(f);
        match self.mode {
            MeasureMode::Tilted => Ok(Estimate::of(vals)),
            MeasureMode::Weighted => Ok(self.weights(i)?.mean_of(&vals)),
        }
    }

    /// Effective sample size of the `P̃` expectation at sample `i` (`M` in tilted mode).
    pub fn ess(&self, i: usize) -> Result<f64> {
        match self.mode {
            MeasureMode::Tilted => Ok(self.paths.len() as f64),
            MeasureMode::Weighted => Ok(self.weights(i)?.ess()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub regime: Regime,
    pub mode: MeasureMode,
    pub times: Vec<f64>,
    pub mean_w2: Vec<f64>,
    pub se_w2: Vec<f64>,
    /// `‖x−y‖²`-scaled theoretical bound at each sample time.
    pub bound: Vec<f64>,
    pub bound_ok: Vec<bool>,
    pub fit: Option<RateFit>,
    /// Mean-square contraction rate of the coupling lemma.
    pub theory_rate: f64,
    /// Remainder rate `θ` of the Harnack inequality.
    pub theorem_rate: f64,
    /// Fraction of the theory rate the fit must reach.
    pub rate_factor: f64,
    pub rate_ok: bool,
}

impl ContractionReport {
    pub fn pass(&self) -> bool {
        self.rate_ok && self.bound_ok.iter().all(|&b| b)
    }
}

/// Mean-square contraction of the coupling under `P̃`, with a WLS rate fit on `[T/4, T]`.
pub fn contraction_rate(
    ens: &CoupledEnsemble,
    consts: &HarnackConstants,
    dist: f64,
    y_norm: f64,
    rate_factor: f64,
) -> Result<ContractionReport> {
    let mut mean_w2 = Vec::new();
    let mut se_w2 = Vec::new();
    let mut bound = Vec::new();
    let mut bound_ok = Vec::new();
    let mut ests = Vec::new();
    for (i, &t) in ens.times.iter().enumerate() {
        let e = ens.tilted_mean(i, |p| p.w_sq[i])?;
        let b = consts.contraction_bound(t, dist, y_norm);
        mean_w2.push(e.mean);
        se_w2.push(e.se);
        bound.push(b);
        bound_ok.push(e.below(b));
        ests.push(e);
    }
    let t_end = ens.times.last().copied().unwrap_or(0.0);
    let (fit, rate_ok) = if dist == 0.0 {
        (None, true)
    } else {
        let (wt, we): (Vec<f64>, Vec<Estimate>) = ens
            .times
            .iter()
            .zip(&ests)
            .filter(|(t, _)| **t >= 0.25 * t_end)
            .map(|(t, e)| (*t, *e))
            .unzip();
        let fit = fit_decay_rate(&wt, &we)?;
        let ok = fit.rate + fit.ci_half_width() >= rate_factor * consts.contraction_rate;
        (Some(fit), ok)
    };
    Ok(ContractionReport {
        regime: consts.regime,
        mode: ens.mode,
        times: ens.times.clone(),
        mean_w2,
        se_w2,
        bound,
        bound_ok,
        fit,
        theory_rate: consts.contraction_rate,
        theorem_rate: consts.theta,
        rate_factor,
        rate_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableComparison {
    pub name: String,
    pub plain: Estimate,
    pub weighted: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub t: f64,
    pub mean_phi: Estimate,
    pub z_phi: f64,
    pub ess: f64,
    pub degenerate: bool,
    pub rows: Vec<ObservableComparison>,
}

impl GirsanovReport {
    pub fn pass(&self, z_max: f64) -> bool {
        !self.degenerate && self.z_phi.abs() <= z_max && self.rows.iter().all(|r| r.z.abs() <= z_max)
    }
}

pub type Observable<'a> = (&'a str, &'a (dyn Fn(&VelocityField) -> f64 + Sync));

/// Compares `E[φ(u(t, y))]` from `plain` (direct runs from `y`) against `E[Φ(t)φ(v(t, y))]`
/// from a weighted coupled ensemble, at every common sample time.
pub fn girsanov_consistency(
    plain: &crate::verify::Ensemble,
    coupled: &CoupledEnsemble,
    observables: &[Observable<'_>],
    ess_fraction: f64,
) -> Result<Vec<GirsanovReport>> {
    if coupled.mode != MeasureMode::Weighted {
        return Err(Error::InvalidArgument(
            "the consistency check needs base-measure samples (weighted mode)".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, &t) in coupled.times.iter().enumerate() {
        let j = plain.state_index(t).ok_or_else(|| {
            Error::InvalidArgument(format!("plain ensemble has no snapshot at t = {t}"))
        })?;
        let w = coupled.weights(i)?;
        let mean_phi = w.mean_weight();
        let z_phi = Estimate { mean: 1.0, se: 0.0 }.z_against(&mean_phi);
        let ess = w.ess();
        let rows = observables
            .iter()
            .map(|(name, f)| {
                let p = Estimate::of(plain.paths.iter().map(|r| f(&r.states[j])));
                let vals: Vec<f64> = coupled.paths.iter().map(|r| f(&r.v[i])).collect();
                let q = w.mean_of(&vals);
                ObservableComparison {
                    name: name.to_string(),
                    plain: p,
                    weighted: q,
                    z: p.z_against(&q),
                }
            })
            .collect();
        out.push(GirsanovReport {
            t,
            mean_phi,
            z_phi,
            ess,
            degenerate: ess < ess_fraction * coupled.paths.len() as f64,
            rows,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub t: f64,
    /// `E[Φ log Φ]` as the `P̃`-mean of `log Φ`.
    pub via_log_phi: Estimate,
    /// `E[Φ log Φ]` as half the `P̃`-mean of `∫‖h‖²`.
    pub via_control: Estimate,
    /// Paired difference of the two estimators.
    pub difference: Estimate,
    pub bound: f64,
    pub ess: f64,
    pub agree: bool,
    pub within_bound: bool,
}

impl EntropyReport {
    pub fn pass(&self) -> bool {
        self.agree && self.within_bound
    }
}

pub fn entropy_check(
    ens: &CoupledEnsemble,
    consts: &HarnackConstants,
    dist: f64,
    y_norm: f64,
) -> Result<Vec<EntropyReport>> {
    let bound = consts.entropy_bound(dist, y_norm);
    let mut out = Vec::new();
    for (i, &t) in ens.times.iter().enumerate() {
        let a = ens.tilted_mean(i, |p| p.log_phi[i])?;
        let b = ens.tilted_mean(i, |p| 0.5 * p.int_h_sq[i])?;
        let d = ens.tilted_mean(i, |p| p.log_phi[i] - 0.5 * p.int_h_sq[i])?;
        out.push(EntropyReport {
            t,
            via_log_phi: a,
            via_control: b,
            difference: d,
            bound,
            ess: ens.ess(i)?,
            agree: d.mean.abs() <= 3.0 * d.se,
            within_bound: a.below(bound) && b.below(bound),
        });
    }
    Ok(out)
}

/// Both sides of `E[fg] ≤ E[f] log E[eᵍ] + E[f log f] − E[f] log E[f]` on the empirical measure
/// of the samples (`f ≥ 0`).
pub fn young_inequality(f: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    if f.len() != g.len() || f.is_empty() {
        return Err(Error::InvalidArgument("need equally many f and g samples".into()));
    }
    if f.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument("f must be nonnegative".into()));
    }
    let n = f.len() as f64;
    let ef = f.iter().sum::<f64>() / n;
    let efg = f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / n;
    let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_eg = gmax + (g.iter().map(|b| (b - gmax).exp()).sum::<f64>() / n).ln();
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let eflogf = f.iter().map(|&a| xlogx(a)).sum::<f64>() / n;
    Ok((efg, ef * log_eg + eflogf - xlogx(ef)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::PhysParams;
    use rustfft::num_complex::Complex64;

    fn setup(beta: f64, r: f64) -> (Arc<SpectralBasis>, Stepper) {
        let basis = SpectralBasis::build(2, 8, 1.5).unwrap();
        let p = PhysParams::new(1.0, beta, r).unwrap();
        let noise = NoiseModel::additive_with_trace(&basis, 0.01).unwrap();
        let st = Stepper::new(&basis, p, Some(noise), 1e-3).unwrap();
        (basis, st)
    }

    #[test]
    fn identical_starts_stay_identical() {
        let (basis, st) = setup(1.0, 5.0);
        let mut c = Coupler::new(st, MeasureMode::Weighted).unwrap();
        let x = VelocityField::single_mode(&basis, &[1, 1], 0, Complex64::new(0.1, 0.05)).unwrap();
        let mut s = CouplingState::new(&x, &x).unwrap();
        c.run_to(&mut s, &RngKey::new(4, 0), 200, |_| Ok(())).unwrap();
        assert_eq!(s.u, s.v);
        assert_eq!(s.log_phi, 0.0);
        assert_eq!(s.int_h_sq, 0.0);
    }

    #[test]
    fn high_mode_difference_has_no_control() {
        let (basis, st) = setup(1.0, 5.0);
        let c = Coupler::new(st, MeasureMode::Weighted).unwrap();
        let x = VelocityField::zeros(&basis);
        let y = VelocityField::single_mode(&basis, &[2, 1], 0, Complex64::new(0.1, 0.0)).unwrap();
        assert!(c.control(&x, &y).unwrap().iter().all(|h| *h == 0.0));
    }

    #[test]
    fn controlled_linear_mode_decays_in_closed_form() {
        // β = 0, no advection: w_k obeys w' = −μ(λ_k + λ_{N₀}/2) w
        let basis = SpectralBasis::build(2, 8, 1.5).unwrap();
        let p = PhysParams::new(1.0, 0.0, 1.0).unwrap();
        let noise = NoiseModel::additive_with_trace(&basis, 0.01).unwrap();
        let dt = 1e-3;
        let st = Stepper::new(&basis, p, Some(noise), dt).unwrap().with_advection(false);
        let mut c = Coupler::new(st, MeasureMode::Weighted).unwrap();
        let x = VelocityField::single_mode(&basis, &[1, 0], 0, Complex64::new(0.1, 0.0)).unwrap();
        let y = VelocityField::zeros(&basis);
        let mut s = CouplingState::new(&x, &y).unwrap();
        let steps = 500;
        c.run_to(&mut s, &RngKey::new(9, 0), steps, |_| Ok(())).unwrap();
        let t = steps as f64 * dt;
        let exact = 0.1 * (-(1.0 + 0.5) * t).exp();
        let got = s.w().coeffs()[basis.modes().iter().position(|m| m.k == [1, 0, 0]).unwrap()].re;
        assert!((got - exact).abs() < 2.0 * dt * exact, "{got} vs {exact}");
    }

    #[test]
    fn young_inequality_on_samples() {
        let f = [0.0, 0.5, 2.0, 1.0];
        let g = [1.0, -2.0, 0.3, 0.0];
        let (l, r) = young_inequality(&f, &g).unwrap();
        assert!(l <= r + 1e-12);
    }
}
