//! Degenerate noise acting on the forced block only.
//!
//! The forced block is described in real coordinates (see [`VelocityField::low_dofs`]); `σ` is
//! diagonal there with one amplitude per real degree of freedom. `Tr(σσ*) = Σ_j σ_j²` counts
//! each conjugate pair `(k, −k)` as two real degrees of freedom per polarization.
//!
//! The multiplicative family scales the whole diagonal by the scalar gain
//! `g(u) = q₀ + q₁·tanh(‖u‖_H)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::rng::RngKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub q0: f64,
    pub q1: f64,
}

impl Gain {
    #[inline]
    pub fn at_norm(&self, norm_h: f64) -> f64 {
        self.q0 + self.q1 * norm_h.tanh()
    }
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    basis: Arc<SpectralBasis>,
    sigma: Vec<f64>,
    gain: Option<Gain>,
}

impl NoiseModel {
    /// Additive noise with amplitude `a` on every forced real degree of freedom.
    pub fn additive_uniform(basis: &Arc<SpectralBasis>, a: f64) -> Result<Self> {
        Self::additive(basis, vec![a; basis.n_low_slots()])
    }

    /// Additive noise with `Tr(σσ*) = trace`, spread uniformly.
    pub fn additive_with_trace(basis: &Arc<SpectralBasis>, trace: f64) -> Result<Self> {
        let a = (trace / basis.n_low_slots() as f64).sqrt();
        Self::additive_uniform(basis, a)
    }

    /// Additive noise with one amplitude per forced real degree of freedom.
    pub fn additive(basis: &Arc<SpectralBasis>, sigma: Vec<f64>) -> Result<Self> {
        if basis.n_low_slots() == 0 {
            return Err(Error::InvalidNoise("forced block is empty".into()));
        }
        if sigma.len() != basis.n_low_slots() {
            return Err(Error::InvalidNoise(format!(
                "{} amplitudes for {} forced degrees of freedom",
                sigma.len(),
                basis.n_low_slots()
            )));
        }
        if let Some(bad) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidNoise(format!(
                "amplitudes must be positive and finite, got {bad}"
            )));
        }
        Ok(NoiseModel {
            basis: basis.clone(),
            sigma,
            gain: None,
        })
    }

    /// Additive noise with one amplitude per forced wavevector, shared by its polarizations.
    pub fn additive_per_mode(basis: &Arc<SpectralBasis>, per_mode: &[f64]) -> Result<Self> {
        if per_mode.len() != basis.n_low() {
            return Err(Error::InvalidNoise(format!(
                "{} amplitudes for {} forced modes",
                per_mode.len(),
                basis.n_low()
            )));
        }
        let npol = basis.n_pol();
        let sigma = per_mode
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, npol))
            .collect();
        Self::additive(basis, sigma)
    }

    pub fn multiplicative(
        basis: &Arc<SpectralBasis>,
        sigma: Vec<f64>,
        q0: f64,
        q1: f64,
    ) -> Result<Self> {
        if !(q0 > 0.0 && q0.is_finite()) {
            return Err(Error::InvalidNoise(format!(
                "q0 must be positive for a bounded pseudo-inverse, got {q0}"
            )));
        }
        if !(q1 >= 0.0 && q1.is_finite()) {
            return Err(Error::InvalidNoise(format!("q1 must be nonnegative, got {q1}")));
        }
        let mut m = Self::additive(basis, sigma)?;
        m.gain = Some(Gain { q0, q1 });
        Ok(m)
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn gain_law(&self) -> Option<Gain> {
        self.gain
    }

    pub fn is_multiplicative(&self) -> bool {
        self.gain.is_some()
    }

    /// `Σ_j σ_j²` of the base amplitudes.
    pub fn trace(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }

    fn min_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    /// `C_σ = 1/min σ_j`, the tight inverse bound on the forced block.
    pub fn c_sigma(&self) -> f64 {
        1.0 / self.min_sigma()
    }

    /// Squared Lipschitz constant `L = q₁² Σσ_j²` (zero for additive noise).
    pub fn lipschitz_sq(&self) -> f64 {
        self.gain.map_or(0.0, |g| g.q1 * g.q1 * self.trace())
    }

    /// Pseudo-inverse bound `K̃ = 1/(q₀ min σ_j)` (equals `C_σ` for additive noise).
    pub fn k_tilde(&self) -> f64 {
        self.gain.map_or(self.c_sigma(), |g| 1.0 / (g.q0 * self.min_sigma()))
    }

    /// Scalar gain at state `u`; 1 for additive noise.
    pub fn gain(&self, u: Option<&VelocityField>) -> Result<f64> {
        match (self.gain, u) {
            (None, _) => Ok(1.0),
            (Some(g), Some(u)) => Ok(g.at_norm(u.norm_h())),
            (Some(_), None) => Err(Error::InvalidNoise(
                "multiplicative noise needs the current state".into(),
            )),
        }
    }

    /// `Tr(σ(u)σ(u)*)`.
    pub fn trace_at(&self, u: Option<&VelocityField>) -> Result<f64> {
        let g = self.gain(u)?;
        Ok(g * g * self.trace())
    }

    /// `σ(u) w`: keeps the forced block of `w` scaled per degree of freedom, kills the rest.
    pub fn apply(&self, w: &VelocityField, u: Option<&VelocityField>) -> Result<VelocityField> {
        self.basis.check_same(w.basis())?;
        let g = self.gain(u)?;
        let d: Vec<f64> = w
            .low_dofs()
            .iter()
            .zip(&self.sigma)
            .map(|(x, s)| g * s * x)
            .collect();
        VelocityField::from_low_dofs(&self.basis, &d)
    }

    /// `σ(u)^{-1} w` for `w` supported on the forced block.
    pub fn inverse_on_low(
        &self,
        w: &VelocityField,
        u: Option<&VelocityField>,
    ) -> Result<VelocityField> {
        self.basis.check_same(w.basis())?;
        let high = w.high_norm();
        if high > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "field has high-mode content (‖·‖ = {high:e}) outside the range of σ"
            )));
        }
        let g = self.gain(u)?;
        let d: Vec<f64> = w
            .low_dofs()
            .iter()
            .zip(&self.sigma)
            .map(|(x, s)| x / (g * s))
            .collect();
        VelocityField::from_low_dofs(&self.basis, &d)
    }

    /// Draws the Wiener increment of step `step` and scales it by `σ(u)`.
    pub fn sample_increment(
        &self,
        u: Option<&VelocityField>,
        dt: f64,
        key: &RngKey,
        step: u64,
    ) -> Result<NoiseIncrement> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
        }
        let gain = self.gain(u)?;
        let mut xi = vec![0.0; self.sigma.len()];
        key.normals(step, &mut xi);
        let sq = dt.sqrt();
        let dofs = xi
            .iter()
            .zip(&self.sigma)
            .map(|(x, s)| gain * s * sq * x)
            .collect();
        Ok(NoiseIncrement { dt, xi, gain, dofs })
    }
}

/// One step of forcing: standard normals `ξ`, the gain used, and `σ(u)√dt ξ` in real
/// forced-block coordinates.
#[derive(Debug, Clone)]
pub struct NoiseIncrement {
    pub dt: f64,
    pub xi: Vec<f64>,
    pub gain: f64,
    pub dofs: Vec<f64>,
}

impl NoiseIncrement {
    pub fn to_field(&self, basis: &Arc<SpectralBasis>) -> Result<VelocityField> {
        VelocityField::from_low_dofs(basis, &self.dofs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Off,
    #[default]
    Additive,
    Multiplicative,
}

/// Declarative noise description: either a per-dof `amplitude` or a total `trace`, spread
/// uniformly over the forced block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<f64>,
    #[serde(default = "one")]
    pub q0: f64,
    #[serde(default)]
    pub q1: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::Additive,
            amplitude: None,
            trace: Some(0.01),
            q0: 1.0,
            q1: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn off() -> Self {
        NoiseSpec {
            kind: NoiseKind::Off,
            amplitude: None,
            trace: None,
            ..Default::default()
        }
    }

    pub fn additive_trace(trace: f64) -> Self {
        NoiseSpec {
            trace: Some(trace),
            ..Default::default()
        }
    }

    pub fn multiplicative_trace(trace: f64, q0: f64, q1: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Multiplicative,
            trace: Some(trace),
            amplitude: None,
            q0,
            q1,
        }
    }

    /// `None` when the noise is switched off.
    pub fn build(&self, basis: &Arc<SpectralBasis>) -> Result<Option<NoiseModel>> {
        if self.kind == NoiseKind::Off {
            return Ok(None);
        }
        let a = match (self.amplitude, self.trace) {
            (Some(a), None) => a,
            (None, Some(t)) => (t / basis.n_low_slots().max(1) as f64).sqrt(),
            (None, None) => {
                return Err(Error::InvalidNoise("one of amplitude or trace is required".into()))
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidNoise(
                    "amplitude and trace are mutually exclusive".into(),
                ))
            }
        };
        let sigma = vec![a; basis.n_low_slots()];
        match self.kind {
            NoiseKind::Additive => NoiseModel::additive(basis, sigma).map(Some),
            NoiseKind::Multiplicative => {
                NoiseModel::multiplicative(basis, sigma, self.q0, self.q1).map(Some)
            }
            NoiseKind::Off => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_trace_and_inverse_bound() {
        let b = SpectralBasis::build(2, 4, 1.5).unwrap();
        let m = NoiseModel::additive_uniform(&b, 0.05).unwrap();
        assert_eq!(b.n_low_slots(), 4);
        assert!((m.trace() - 0.01).abs() < 1e-16);
        assert!((m.c_sigma() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_pair_counts_twice() {
        let b = SpectralBasis::build(2, 4, 1.5).unwrap();
        let m = NoiseModel::additive_per_mode(&b, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        // four forced wavevectors = two conjugate pairs = four real dofs
        assert_eq!(m.trace(), 4.0);
    }

    #[test]
    fn multiplicative_constants() {
        let b = SpectralBasis::build(2, 4, 1.5).unwrap();
        let m = NoiseModel::multiplicative(&b, vec![0.05; 4], 1.0, 0.5).unwrap();
        assert!((m.lipschitz_sq() - 0.0025).abs() < 1e-16);
        assert!((m.k_tilde() - 20.0).abs() < 1e-12);
        let zero = VelocityField::zeros(&b);
        assert_eq!(m.gain(Some(&zero)).unwrap(), 1.0);
        assert!(m.gain(None).is_err());
        assert!(NoiseModel::multiplicative(&b, vec![0.05; 4], 0.0, 0.5).is_err());
        let no_slope = NoiseModel::multiplicative(&b, vec![0.05; 4], 2.0, 0.0).unwrap();
        assert_eq!(no_slope.lipschitz_sq(), 0.0);
    }

    #[test]
    fn rejects_bad_amplitudes() {
        let b = SpectralBasis::build(2, 4, 1.5).unwrap();
        assert!(NoiseModel::additive(&b, vec![0.1, 0.0, 0.1, 0.1]).is_err());
        assert!(NoiseModel::additive(&b, vec![0.1, -0.1, 0.1, 0.1]).is_err());
        assert!(NoiseModel::additive(&b, vec![0.1; 3]).is_err());
    }

    #[test]
    fn zero_dt_gives_zero_increment() {
        let b = SpectralBasis::build(2, 8, 4.5).unwrap();
        let m = NoiseModel::additive_uniform(&b, 0.3).unwrap();
        let inc = m.sample_increment(None, 0.0, &RngKey::new(1, 0), 0).unwrap();
        assert!(inc.dofs.iter().all(|&d| d == 0.0));
    }
}
