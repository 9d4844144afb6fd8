//! Moment accumulation, likelihood-ratio weighted means and the decay-rate fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Welford running mean and variance; `merge` is the parallel (Chan et al.) combination.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            se: self.se(),
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        iter.into_iter().for_each(|x| w.push(x));
        w
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().collect::<Welford>().estimate()
    }

    /// `(self − other)/√(se² + se'²)` for independent estimates.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let s = (self.se * self.se + other.se * other.se).sqrt();
        z_score(self.mean - other.mean, s)
    }

    /// Whether `mean − 3·se ≤ bound`.
    pub fn below(&self, bound: f64) -> bool {
        self.mean - 3.0 * self.se <= bound
    }
}

fn z_score(diff: f64, s: f64) -> f64 {
    if s > 0.0 {
        diff / s
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Likelihood-ratio weights held in log space.
#[derive(Debug, Clone)]
pub struct LogWeights {
    shift: f64,
    scaled: Vec<f64>,
}

impl LogWeights {
    pub fn new(log_w: &[f64]) -> Result<Self> {
        if log_w.is_empty() {
            return Err(Error::InvalidArgument("no weights".into()));
        }
        if let Some(bad) = log_w.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite log-weight {bad}")));
        }
        let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled = log_w.iter().map(|l| (l - shift).exp()).collect();
        Ok(LogWeights { shift, scaled })
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// Kish effective sample size `(Σw)²/Σw²`.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.scaled.iter().sum();
        let s2: f64 = self.scaled.iter().map(|w| w * w).sum();
        s * s / s2
    }

    /// Unnormalized likelihood-ratio mean `(1/M)Σ wᵢ fᵢ` with its standard error.
    pub fn mean_of(&self, values: &[f64]) -> Estimate {
        assert_eq!(values.len(), self.scaled.len());
        let w: Welford = self.scaled.iter().zip(values).map(|(w, f)| w * f).collect();
        let e = self.shift.exp();
        Estimate {
            mean: w.mean() * e,
            se: w.se() * e,
        }
    }

    /// `(1/M)Σ wᵢ`, which estimates 1 for a normalized density.
    pub fn mean_weight(&self) -> Estimate {
        self.mean_of(&vec![1.0; self.scaled.len()])
    }
}

/// `log` of a Monte Carlo mean of `exp(lᵢ)`, with a delta-method standard error.
pub fn log_mean_exp(log_values: &[f64]) -> Result<Estimate> {
    let w = LogWeights::new(log_values)?;
    let s: Welford = w.scaled.iter().copied().collect();
    Ok(Estimate {
        mean: w.shift + s.mean().ln(),
        se: s.se() / s.mean(),
    })
}

/// Weighted least-squares fit of `log m(t) = a − ρt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub rate_se: f64,
    pub intercept: f64,
    pub points: usize,
}

impl RateFit {
    /// 95% confidence half-width.
    pub fn ci_half_width(&self) -> f64 {
        1.96 * self.rate_se
    }
}

/// Fits `log mean(t)` by weighted least squares with delta-method variances `(se/mean)²`.
pub fn fit_decay_rate(times: &[f64], means: &[Estimate]) -> Result<RateFit> {
    let pts: Vec<(f64, f64, f64)> = times
        .iter()
        .zip(means)
        .filter(|(_, m)| m.mean > 0.0)
        .map(|(&t, m)| {
            let rel = (m.se / m.mean).max(1e-12);
            (t, m.mean.ln(), 1.0 / (rel * rel))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "degenerate rate fit: {} usable sample times, need at least 3",
            pts.len()
        )));
    }
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y, w) in &pts {
        sw += w;
        st += w * t;
        sy += w * y;
        stt += w * t * t;
        sty += w * t * y;
    }
    let det = sw * stt - st * st;
    if !(det > 0.0) {
        return Err(Error::InvalidArgument("degenerate rate fit: sample times coincide".into()));
    }
    let slope = (sw * sty - st * sy) / det;
    let intercept = (stt * sy - st * sty) / det;
    Ok(RateFit {
        rate: -slope,
        rate_se: (sw / det).sqrt(),
        intercept,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25, 0.5];
        let w: Welford = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        assert!((w.mean() - mean).abs() < 1e-14);
        assert!((w.variance() - var).abs() < 1e-13);
        let mut a: Welford = xs[..2].iter().copied().collect();
        let b: Welford = xs[2..].iter().copied().collect();
        a.merge(&b);
        assert!((a.variance() - var).abs() < 1e-13);
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let times = [0.5, 1.0, 1.5, 2.0];
        let means: Vec<Estimate> = times
            .iter()
            .map(|t: &f64| Estimate {
                mean: 2.0 * (-3.0 * t).exp(),
                se: 0.01 * (-3.0 * t).exp(),
            })
            .collect();
        let fit = fit_decay_rate(&times, &means).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
        assert!(fit_decay_rate(&times[..2], &means[..2]).is_err());
    }

    #[test]
    fn shifted_weights_do_not_overflow() {
        let lw = LogWeights::new(&[300.0, 300.0]).unwrap();
        assert_eq!(lw.ess(), 2.0);
        let m = lw.mean_of(&[1.0, 3.0]);
        assert!((m.mean.ln() - (300.0 + 2f64.ln())).abs() < 1e-12);
        let l = log_mean_exp(&[1000.0, 1000.0]).unwrap();
        assert!((l.mean - 1000.0).abs() < 1e-12);
    }
}
