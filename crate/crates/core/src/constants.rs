//! Closed-form constants of the coupling estimates and asymptotic log-Harnack bounds.
//!
//! Each regime carries two rates: the mean-square contraction rate of the coupling
//! (`E‖w(t)‖² ≲ e^{−rate·t}`) and the remainder rate `θ` of the Harnack inequality, which is
//! half of it in the supercritical, critical and multiplicative cases.

use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::operators::PhysParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `n = 2`, `r ∈ [1, 3]`, additive noise with `λ₁μ³ ≥ 8 Tr(σσ*)`.
    Additive2dSubcritical,
    /// `r > 3`, additive noise, any `μ, β > 0`.
    AdditiveSupercritical,
    /// `r = 3`, `βμ > 1`, additive noise.
    Critical,
    /// `r ≥ 3`, gain-modulated noise.
    Multiplicative,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::Additive2dSubcritical => "additive-2d-subcritical",
            Regime::AdditiveSupercritical => "additive-supercritical",
            Regime::Critical => "critical",
            Regime::Multiplicative => "multiplicative",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            Regime::Additive2dSubcritical,
            Regime::AdditiveSupercritical,
            Regime::Critical,
            Regime::Multiplicative,
        ]
        .into_iter()
        .find(|r| r.tag() == tag)
    }

    /// The regime implied by the parameters, if any.
    pub fn infer(dim: usize, p: &PhysParams, noise: &NoiseModel) -> Result<Self> {
        let r = if noise.is_multiplicative() {
            Regime::Multiplicative
        } else if p.r > 3.0 {
            Regime::AdditiveSupercritical
        } else if p.r == 3.0 && (dim == 3 || p.beta * p.mu > 1.0) {
            Regime::Critical
        } else {
            Regime::Additive2dSubcritical
        };
        HarnackConstants::compute(r, dim, p, noise)?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackConstants {
    pub regime: Regime,
    pub lambda_1: f64,
    pub lambda_n0: f64,
    /// `Tr(σσ*)`; for multiplicative noise the supremum `(q₀ + q₁)² Σσ_j²`.
    pub trace: f64,
    pub c_sigma: f64,
    pub k_tilde: f64,
    pub lipschitz_sq: f64,
    /// `η̂ = 2η` (zero at `r = 3` and for `r < 3`).
    pub eta_hat: f64,
    /// Exponential-moment exponent, set to its maximal admissible value `λ₁μ/(4 Tr)`.
    pub k: f64,
    /// `k₀ = λ₁μ/(2 Tr)`.
    pub k0: f64,
    /// Remainder rate of the log-Harnack inequality (`θ`, `θ̃`, `μλ_{N₀}/2` or `θ̂`).
    pub theta: f64,
    /// Entropy constant (`γ`, `γ̃`, `C_σ²μλ_{N₀}/8` or `γ̂`).
    pub gamma: f64,
    /// Mean-square contraction rate of the coupling lemma.
    pub contraction_rate: f64,
}

impl HarnackConstants {
    pub fn compute(
        regime: Regime,
        dim: usize,
        p: &PhysParams,
        noise: &NoiseModel,
    ) -> Result<Self> {
        p.validate()?;
        let basis: &SpectralBasis = noise.basis();
        let (mu, lam, lam1) = (p.mu, basis.lambda_n0(), basis.lambda_1());
        let trace = match noise.gain_law() {
            None => noise.trace(),
            Some(g) => (g.q0 + g.q1).powi(2) * noise.trace(),
        };
        let k = lam1 * mu / (4.0 * trace);
        let c_sigma = noise.c_sigma();
        let k_tilde = noise.k_tilde();
        let lipschitz_sq = noise.lipschitz_sq();
        let mut eta_hat = 0.0;

        let additive = |name: &str| -> Result<()> {
            if noise.is_multiplicative() {
                Err(Error::Hypothesis(format!(
                    "regime {name} needs additive noise"
                )))
            } else {
                Ok(())
            }
        };

        let (theta, gamma, contraction_rate) = match regime {
            Regime::Additive2dSubcritical => {
                additive(regime.tag())?;
                if dim != 2 || p.r > 3.0 {
                    return Err(Error::Hypothesis(format!(
                        "subcritical regime needs n = 2 and r ≤ 3 (n = {dim}, r = {})",
                        p.r
                    )));
                }
                if lam1 * mu.powi(3) < 8.0 * trace {
                    return Err(Error::Hypothesis(format!(
                        "λ₁μ³ = {} < 8 Tr(σσ*) = {}",
                        lam1 * mu.powi(3),
                        8.0 * trace
                    )));
                }
                let gap = mu * lam - k * trace;
                if !(gap > 0.0) {
                    return Err(Error::Hypothesis(format!(
                        "μλ_N₀ = {} ≤ k Tr(σσ*) = {}",
                        mu * lam,
                        k * trace
                    )));
                }
                let theta = gap / 2.0;
                (theta, mu * mu * c_sigma * c_sigma * lam * lam / (4.0 * gap), theta)
            }
            Regime::AdditiveSupercritical => {
                additive(regime.tag())?;
                if !(p.r > 3.0) {
                    return Err(Error::Hypothesis(format!(
                        "supercritical regime needs r > 3, got {}",
                        p.r
                    )));
                }
                eta_hat = p.eta_hat()?;
                let gap = mu * lam - eta_hat;
                if !(gap > 0.0) {
                    return Err(Error::Hypothesis(format!(
                        "μλ_N₀ = {} ≤ η̂ = {eta_hat}",
                        mu * lam
                    )));
                }
                (gap / 2.0, c_sigma * c_sigma * mu * mu * lam * lam / (8.0 * gap), gap)
            }
            Regime::Critical => {
                additive(regime.tag())?;
                if p.r != 3.0 || !(p.beta * p.mu > 1.0) {
                    return Err(Error::Hypothesis(format!(
                        "critical case requires r = 3 and βμ > 1 for coupling (r = {}, βμ = {})",
                        p.r,
                        p.beta * p.mu
                    )));
                }
                (mu * lam / 2.0, c_sigma * c_sigma * mu * lam / 8.0, mu * lam)
            }
            Regime::Multiplicative => {
                if !noise.is_multiplicative() {
                    return Err(Error::Hypothesis(
                        "multiplicative regime needs a gain-modulated noise model".into(),
                    ));
                }
                if p.r == 3.0 {
                    if !(p.beta * p.mu > 1.0) {
                        return Err(Error::Hypothesis(format!(
                            "critical case requires βμ > 1 for coupling (βμ = {})",
                            p.beta * p.mu
                        )));
                    }
                } else if p.r > 3.0 {
                    eta_hat = p.eta_hat()?;
                } else {
                    return Err(Error::Hypothesis(format!(
                        "multiplicative regime needs r ≥ 3, got {}",
                        p.r
                    )));
                }
                let gap = mu * lam - (eta_hat + lipschitz_sq);
                if !(gap > 0.0) {
                    return Err(Error::Hypothesis(format!(
                        "μλ_N₀ = {} ≤ η̂ + L = {}",
                        mu * lam,
                        eta_hat + lipschitz_sq
                    )));
                }
                (gap / 2.0, k_tilde * k_tilde * mu * mu * lam * lam / (8.0 * gap), gap)
            }
        };

        Ok(HarnackConstants {
            regime,
            lambda_1: lam1,
            lambda_n0: lam,
            trace,
            c_sigma,
            k_tilde,
            lipschitz_sq,
            eta_hat,
            k,
            k0: 2.0 * k,
            theta,
            gamma,
            contraction_rate,
        })
    }

    /// `e^{k‖y‖²}` in the subcritical regime, 1 elsewhere.
    fn moment_factor(&self, y_norm: f64) -> f64 {
        match self.regime {
            Regime::Additive2dSubcritical => (self.k * y_norm * y_norm).exp(),
            _ => 1.0,
        }
    }

    /// Prefactor 2 carried by the subcritical bounds.
    fn lead(&self) -> f64 {
        match self.regime {
            Regime::Additive2dSubcritical => 2.0,
            _ => 1.0,
        }
    }

    /// `Θ(x, y)`.
    pub fn penalty(&self, dist: f64, y_norm: f64) -> f64 {
        self.gamma * self.moment_factor(y_norm) * dist * dist
    }

    /// `Ψ_t(x, y)`.
    pub fn remainder(&self, t: f64, dist: f64, y_norm: f64) -> f64 {
        self.lead() * (-self.theta * t).exp() * self.moment_factor(y_norm) * dist
    }

    /// Upper bound on `E_P̃‖u(t) − v(t)‖²`.
    pub fn contraction_bound(&self, t: f64, dist: f64, y_norm: f64) -> f64 {
        self.lead() * (-self.contraction_rate * t).exp() * self.moment_factor(y_norm) * dist * dist
    }

    /// Upper bound on `E[Φ log Φ]`.
    pub fn entropy_bound(&self, dist: f64, y_norm: f64) -> f64 {
        self.penalty(dist, y_norm)
    }

    /// Upper bound on `‖∇P_t f(y)‖` given `std = √(P_t f² − (P_t f)²)`.
    pub fn gradient_bound(&self, t: f64, y_norm: f64, std: f64, lip: f64) -> f64 {
        let m = self.moment_factor(y_norm);
        let variance_term = match self.regime {
            Regime::Additive2dSubcritical => (2.0 * self.gamma * m).sqrt(),
            _ => self.gamma.sqrt(),
        };
        variance_term * std + self.lead() * (-self.theta * t).exp() * m * lip
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcritical_arithmetic() {
        // Tr = 0.1, μ = 1, λ₁ = 1 → k = 2.5, k₀ = 5; λ_N₀ = 25 → θ = 12.375
        let basis = SpectralBasis::build(2, 16, 25.5).unwrap();
        assert_eq!(basis.lambda_n0(), 25.0);
        let noise = NoiseModel::additive_with_trace(&basis, 0.1).unwrap();
        let p = PhysParams::new(1.0, 1.0, 2.0).unwrap();
        let c = HarnackConstants::compute(Regime::Additive2dSubcritical, 2, &p, &noise).unwrap();
        assert!((c.k - 2.5).abs() < 1e-12);
        assert!((c.k0 - 5.0).abs() < 1e-12);
        assert!((c.theta - 12.375).abs() < 1e-12);
    }

    #[test]
    fn supercritical_arithmetic() {
        let basis = SpectralBasis::build(2, 8, 4.5).unwrap();
        let noise = NoiseModel::additive_with_trace(&basis, 0.01).unwrap();
        let p = PhysParams::new(1.0, 1.0, 5.0).unwrap();
        let c = HarnackConstants::compute(Regime::AdditiveSupercritical, 2, &p, &noise).unwrap();
        assert!((c.eta_hat - 0.25).abs() < 1e-15);
        assert!((c.contraction_rate - 3.75).abs() < 1e-12);
        assert!((c.theta - 1.875).abs() < 1e-12);
        let cs2 = noise.c_sigma().powi(2);
        assert!((c.gamma - cs2 * 16.0 / (8.0 * 3.75)).abs() < 1e-9 * c.gamma);
    }

    #[test]
    fn hypothesis_failures_are_named() {
        let basis = SpectralBasis::build(2, 8, 4.5).unwrap();
        let noise = NoiseModel::additive_with_trace(&basis, 0.5).unwrap();
        let p = PhysParams::new(1.0, 1.0, 2.0).unwrap();
        let e = HarnackConstants::compute(Regime::Additive2dSubcritical, 2, &p, &noise);
        assert!(matches!(e, Err(Error::Hypothesis(_))));
        let p = PhysParams::new(1.0, 0.5, 3.0).unwrap();
        let e = HarnackConstants::compute(Regime::Critical, 3, &p, &noise).unwrap_err();
        assert!(e.to_string().contains("βμ > 1"));
    }
}
