//! Self-describing JSON checkpoints.
//!
//! Coefficients are stored as `[re, im]` pairs per polarization, modes in lexicographic order
//! of their wavevector, so files do not depend on the internal mode ordering. Floats are
//! written in shortest round-trip form, which makes save/restore bit-exact.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, SpectralBasis};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::integrator::EnergyLedger;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoeffs {
    pub k: Vec<i64>,
    pub a: Vec<[f64; 2]>,
}

/// Position of a trajectory in the keyed random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cursor {
    pub seed: u64,
    pub trajectory: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSnapshot {
    pub v: Vec<ModeCoeffs>,
    pub log_phi: f64,
    pub int_h_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub basis: BasisSpec,
    pub cursor: Cursor,
    pub t: f64,
    pub u: Vec<ModeCoeffs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<EnergyLedger>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSnapshot>,
}

pub(crate) fn encode(u: &VelocityField) -> Vec<ModeCoeffs> {
    let basis = u.basis();
    let dim = basis.dim();
    let npol = basis.n_pol();
    let mut order: Vec<usize> = (0..basis.n_modes()).collect();
    order.sort_by_key(|&i| basis.modes()[i].k);
    order
        .into_iter()
        .map(|i| ModeCoeffs {
            k: basis.modes()[i].k[..dim].to_vec(),
            a: (0..npol)
                .map(|p| {
                    let z = u.coeffs()[i * npol + p];
                    [z.re, z.im]
                })
                .collect(),
        })
        .collect()
}

pub(crate) fn decode(basis: &Arc<SpectralBasis>, coeffs: &[ModeCoeffs]) -> Result<VelocityField> {
    let dim = basis.dim();
    let npol = basis.n_pol();
    if coeffs.len() != basis.n_modes() {
        return Err(Error::Checkpoint(format!(
            "{} modes stored, basis has {}",
            coeffs.len(),
            basis.n_modes()
        )));
    }
    let index: HashMap<[i64; 3], usize> =
        basis.modes().iter().enumerate().map(|(i, m)| (m.k, i)).collect();
    let mut out = vec![Complex64::default(); basis.n_slots()];
    let mut seen = vec![false; basis.n_modes()];
    for mc in coeffs {
        if mc.k.len() != dim || mc.a.len() != npol {
            return Err(Error::Checkpoint(format!("malformed entry for mode {:?}", mc.k)));
        }
        let mut k = [0i64; 3];
        k[..dim].copy_from_slice(&mc.k);
        let i = *index
            .get(&k)
            .ok_or_else(|| Error::Checkpoint(format!("mode {:?} not in the basis", mc.k)))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Checkpoint(format!("mode {:?} stored twice", mc.k)));
        }
        for (p, [re, im]) in mc.a.iter().enumerate() {
            out[i * npol + p] = Complex64::new(*re, *im);
        }
    }
    VelocityField::from_coeffs(basis, out)
}

impl Checkpoint {
    pub fn new(u: &VelocityField, cursor: Cursor, t: f64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            basis: u.basis().spec(),
            cursor,
            t,
            u: encode(u),
            ledger: None,
            coupling: None,
        }
    }

    pub fn with_ledger(mut self, ledger: &EnergyLedger) -> Self {
        self.ledger = Some(ledger.clone());
        self
    }

    /// Restores the state onto `basis`, which must match the stored spec.
    pub fn state_on(&self, basis: &Arc<SpectralBasis>) -> Result<VelocityField> {
        if basis.spec() != self.basis {
            return Err(Error::BasisMismatch(format!(
                "checkpoint was written for {:?}, restoring into {:?}",
                self.basis,
                basis.spec()
            )));
        }
        decode(basis, &self.u)
    }

    pub fn state(&self) -> Result<VelocityField> {
        self.state_on(&SpectralBasis::from_spec(self.basis)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: Option<u32>,
        }
        let probe: Probe = serde_json::from_str(text)?;
        match probe.version {
            Some(CHECKPOINT_VERSION) => Ok(serde_json::from_str(text)?),
            Some(v) => Err(Error::Checkpoint(format!(
                "checkpoint version {v} is not supported (expected {CHECKPOINT_VERSION})"
            ))),
            None => Err(Error::Checkpoint("missing version field".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Writes a bare field checkpoint (cursor at step 0).
pub fn write_field(path: &Path, u: &VelocityField, seed: u64) -> Result<()> {
    Checkpoint::new(
        u,
        Cursor {
            seed,
            trajectory: 0,
            step: 0,
        },
        0.0,
    )
    .save(path)
}

pub fn read_field(path: &Path) -> Result<VelocityField> {
    Checkpoint::load(path)?.state()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let basis = SpectralBasis::build(2, 8, 4.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let u = VelocityField::random(&basis, &mut rng, 0.37);
        let cp = Checkpoint::new(
            &u,
            Cursor {
                seed: 1,
                trajectory: 2,
                step: 3,
            },
            0.1,
        );
        let back = Checkpoint::from_json(&cp.to_json().unwrap()).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.state_on(&basis).unwrap().coeffs(), u.coeffs());
        let other = SpectralBasis::build(2, 16, 4.5).unwrap();
        assert!(matches!(back.state_on(&other), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn version_is_checked() {
        let basis = SpectralBasis::build(2, 4, 1.5).unwrap();
        let cp = Checkpoint::new(
            &VelocityField::zeros(&basis),
            Cursor {
                seed: 0,
                trajectory: 0,
                step: 0,
            },
            0.0,
        );
        let text = cp.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Checkpoint(_))));
    }
}
