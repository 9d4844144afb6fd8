//! The experiment document: a flat TOML schema with strict key checking.
//!
//! ```toml
//! command = "harnack"
//! regime = "additive-supercritical"   # optional, inferred when absent
//! mu = 1.0
//! beta = 1.0
//! r = 5.0
//! n = 2
//! N = 8
//! eigen_cut = 4.5
//! dt = 1e-3
//! T = 4.0
//! seed = 7
//! paths = 1000
//! times = [0.5, 1.0, 2.0, 4.0]
//! distance = 0.1
//! scales = [0.5, 1.0, 2.0]
//!
//! [noise]
//! kind = "additive"
//! trace = 0.01
//!
//! [initial]
//! kind = "random"
//! norm = 0.2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::constants::{HarnackConstants, Regime};
use crate::coupling::MeasureMode;
use crate::error::{Error, Result};
use crate::integrator::{GuardPolicy, InitialCondition, SimConfig};
use crate::noise::NoiseSpec;
use crate::operators::PhysParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Simulate,
    Couple,
    Ergodic,
    Harnack,
    Gradcheck,
    Proptest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::Ergodic => "ergodic",
            Command::Harnack => "harnack",
            Command::Gradcheck => "gradcheck",
            Command::Proptest => "proptest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config {
                path: "--format".into(),
                message: format!("unknown format `{other}` (expected csv or json)"),
            }),
        }
    }
}

fn d_mu() -> f64 {
    1.0
}
fn d_beta() -> f64 {
    1.0
}
fn d_r() -> f64 {
    5.0
}
fn d_n() -> usize {
    2
}
fn d_res() -> usize {
    8
}
fn d_cut() -> f64 {
    4.5
}
fn d_dt() -> f64 {
    1e-3
}
fn d_t() -> f64 {
    1.0
}
fn d_paths() -> usize {
    1
}
fn d_samples() -> usize {
    10
}
fn d_true() -> bool {
    true
}
fn d_distance() -> f64 {
    0.1
}
fn d_scales() -> Vec<f64> {
    vec![1.0]
}
fn d_cases() -> usize {
    1000
}
fn d_directions() -> usize {
    2
}
fn d_cap() -> f64 {
    1.0
}
fn d_rate_factor() -> f64 {
    0.9
}
fn d_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// The document as written; every key has a default so an empty document is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default)]
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default = "d_mu")]
    pub mu: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_r")]
    pub r: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(rename = "N", default = "d_res")]
    pub resolution: usize,
    #[serde(default = "d_cut")]
    pub eigen_cut: f64,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "d_t")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_paths")]
    pub paths: usize,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_true")]
    pub advection: bool,
    #[serde(default)]
    pub guard: GuardPolicy,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Sample times for couple/harnack/gradcheck (default: `samples` even steps on `(0, T]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// `‖x − y‖` of the second start.
    #[serde(default = "d_distance")]
    pub distance: f64,
    #[serde(default)]
    pub mode: MeasureMode,
    #[serde(default)]
    pub burn_in: f64,
    /// Observable scales `c`.
    #[serde(default = "d_scales")]
    pub scales: Vec<f64>,
    /// Cap of the bounded-Lipschitz observables.
    #[serde(default = "d_cap")]
    pub cap: f64,
    #[serde(default = "d_directions")]
    pub directions: usize,
    /// Finite-difference displacement (default `1e−2‖y‖`, floor `1e−3`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<f64>,
    #[serde(default = "d_rate_factor")]
    pub rate_factor: f64,
    /// Random cases per invariant suite.
    #[serde(default = "d_cases")]
    pub cases: usize,
    #[serde(default = "d_formats")]
    pub formats: Vec<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ConfigDoc {
    fn default() -> Self {
        toml::from_str("").expect("every key has a default")
    }
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub doc: ConfigDoc,
    pub sim: SimConfig,
    /// `None` only when the noise is switched off.
    pub regime: Option<Regime>,
    pub constants: Option<HarnackConstants>,
    pub times: Vec<f64>,
    pub out: PathBuf,
}

/// Command-line overrides, applied on top of the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub command: Option<Command>,
}

fn config_error(text: &str, e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let path = match e.span() {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            let key = text.get(s.clone()).unwrap_or("").trim();
            if key.is_empty() || key.contains('\n') {
                format!("line {line}")
            } else {
                format!("line {line} `{key}`")
            }
        }
        None => "document".into(),
    };
    Error::Config { path, message }
}

fn bad(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| config_error(text, e))?;
    doc.resolve()
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(&path.display().to_string(), format!("cannot read config: {e}")))?;
    let doc: ConfigDoc = toml::from_str(&text).map_err(|e| {
        let Error::Config { path: at, message } = config_error(&text, e) else { unreachable!() };
        bad(&format!("{}: {at}", path.display()), message)
    })?;
    doc.with_overrides(overrides).resolve()
}

impl ConfigDoc {
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.paths {
            self.paths = p;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(f) = &o.formats {
            self.formats = f.clone();
        }
        if let Some(c) = o.command {
            self.command = c;
        }
        self
    }

    /// Canonical TOML form; parsing it back yields an equal document.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad("document", e.to_string()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            params: PhysParams {
                mu: self.mu,
                beta: self.beta,
                r: self.r,
                alpha: 0.0,
            },
            basis: BasisSpec {
                dim: self.n,
                resolution: self.resolution,
                eigen_cut: self.eigen_cut,
            },
            noise: self.noise,
            dt: self.dt,
            horizon: self.horizon,
            initial: self.initial.clone(),
            seed: self.seed,
            paths: self.paths,
            samples: self.samples,
            advection: self.advection,
            guard: self.guard,
        }
    }

    pub fn resolve(self) -> Result<ExperimentSpec> {
        let sim = self.sim_config();
        let wrap = |path: &str| {
            let path = path.to_string();
            move |e: Error| match e {
                Error::Config { .. } => e,
                other => bad(&path, other.to_string()),
            }
        };
        sim.params.validate().map_err(wrap("mu/beta/r"))?;
        sim.validate().map_err(wrap("dt/T/paths"))?;
        let basis = sim.build_basis().map_err(wrap("n/N/eigen_cut"))?;
        let noise = sim.noise.build(&basis).map_err(wrap("noise"))?;
        if !(self.distance >= 0.0 && self.distance.is_finite()) {
            return Err(bad("distance", "must be nonnegative"));
        }
        if self.scales.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(bad("scales", "observable scales must be nonnegative"));
        }
        if !(self.burn_in == 0.0 || (self.burn_in > 0.0 && self.burn_in < self.horizon)) {
            return Err(bad("burn_in", "need 0 ≤ burn_in < T"));
        }
        if self.formats.is_empty() {
            return Err(bad("formats", "at least one output format is required"));
        }

        let (regime, constants) = match &noise {
            None => {
                if let Some(r) = self.regime {
                    return Err(bad(
                        "regime",
                        format!("regime `{}` needs noise, but noise.kind = \"off\"", r.tag()),
                    ));
                }
                (None, None)
            }
            Some(noise) => {
                let regime = match self.regime {
                    Some(r) => r,
                    None => Regime::infer(self.n, &sim.params, noise).map_err(wrap("regime"))?,
                };
                let c = HarnackConstants::compute(regime, self.n, &sim.params, noise)
                    .map_err(wrap("regime"))?;
                (Some(regime), Some(c))
            }
        };
        let needs_noise = matches!(
            self.command,
            Command::Couple | Command::Harnack | Command::Gradcheck
        );
        if needs_noise && noise.is_none() {
            return Err(bad(
                "noise.kind",
                format!("command `{}` needs a noise model", self.command.name()),
            ));
        }

        let times = match &self.times {
            Some(t) => {
                if t.is_empty() || t.windows(2).any(|w| w[1] <= w[0]) || t[0] < 0.0 {
                    return Err(bad("times", "sample times must be nonnegative and increasing"));
                }
                if *t.last().unwrap() > self.horizon * (1.0 + 1e-12) {
                    return Err(bad("times", "sample times must not exceed T"));
                }
                for &s in t {
                    let q = s / self.dt;
                    if (q - q.round()).abs() > 1e-6 * q.max(1.0) {
                        return Err(bad("times", format!("{s} is not a multiple of dt")));
                    }
                }
                t.clone()
            }
            None => {
                let n = sim.steps();
                let every = sim.sample_every();
                let mut t: Vec<f64> = (1..)
                    .map(|i| i * every)
                    .take_while(|s| *s < n)
                    .map(|s| s as f64 * self.dt)
                    .collect();
                t.push(self.horizon);
                t
            }
        };
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(ExperimentSpec {
            doc: self,
            sim,
            regime,
            constants,
            times,
            out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gets_defaults() {
        let spec = parse_config("").unwrap();
        assert_eq!(spec.sim.params.alpha, 0.0);
        assert_eq!(spec.doc.command, Command::Simulate);
        assert_eq!(spec.regime, Some(Regime::AdditiveSupercritical));
        assert_eq!(spec.times.last().copied(), Some(1.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config("foo = 1").unwrap_err();
        assert!(matches!(e, Error::Config { .. }), "{e}");
        assert!(e.to_string().contains("foo"));
        assert!(parse_config("[noise]\nbar = 2").is_err());
    }

    #[test]
    fn regime_contradiction_is_named() {
        let e = parse_config("n = 3\nr = 3.0\nmu = 1.0\nbeta = 0.5\nN = 4\neigen_cut = 2.5")
            .unwrap_err();
        assert!(e.to_string().contains("critical case requires"), "{e}");
        let e = parse_config("regime = \"critical\"\nr = 5.0").unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = "command = \"couple\"\nmu = 2.0\ntimes = [0.5, 1.0]\n[noise]\nkind = \"multiplicative\"\ntrace = 0.01\nq1 = 0.5\n";
        let spec = parse_config(text).unwrap();
        let again = parse_config(&spec.doc.to_toml().unwrap()).unwrap();
        assert_eq!(again, spec);
    }
}
