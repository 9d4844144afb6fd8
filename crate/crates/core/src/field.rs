use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::transform::{self, Workspace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    H,
    V,
    Lp(f64),
}

/// Divergence-free, real, mean-zero velocity state in spectral form.
///
/// Slot `mode * (n − 1) + pol` holds the amplitude on polarization `pol` of `modes()[mode]`.
#[derive(Debug, Clone)]
pub struct VelocityField {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for VelocityField {
    fn eq(&self, other: &Self) -> bool {
        self.basis.same_as(&other.basis) && self.coeffs == other.coeffs
    }
}

impl VelocityField {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        VelocityField {
            basis: basis.clone(),
            coeffs: vec![Complex64::default(); basis.n_slots()],
        }
    }

    /// Wraps raw slot amplitudes, rejecting arrays that violate `a(−k) = conj a(k)`.
    pub fn from_coeffs(basis: &Arc<SpectralBasis>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.n_slots() {
            return Err(Error::BasisMismatch(format!(
                "{} coefficients for a basis with {} slots",
                coeffs.len(),
                basis.n_slots()
            )));
        }
        let u = VelocityField {
            basis: basis.clone(),
            coeffs,
        };
        let scale = u.norm_h().max(f64::MIN_POSITIVE);
        let defect = u.reality_defect();
        if !(defect <= 1e-12 * scale) {
            return Err(Error::InvalidArgument(format!(
                "coefficients are not conjugate-symmetric (defect {defect:e})"
            )));
        }
        Ok(u)
    }

    pub(crate) fn from_coeffs_unchecked(basis: &Arc<SpectralBasis>, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), basis.n_slots());
        VelocityField {
            basis: basis.clone(),
            coeffs,
        }
    }

    /// Field with amplitude `amp` on wavevector `k` (and `conj(amp)` on `−k`).
    pub fn single_mode(
        basis: &Arc<SpectralBasis>,
        k: &[i64],
        pol: usize,
        amp: Complex64,
    ) -> Result<Self> {
        let mode = find_mode(basis, k)?;
        if pol >= basis.n_pol() {
            return Err(Error::InvalidArgument(format!("polarization {pol} out of range")));
        }
        let mut u = Self::zeros(basis);
        let npol = basis.n_pol();
        let conj = basis.modes()[mode].conj;
        u.coeffs[mode * npol + pol] = amp;
        u.coeffs[conj * npol + pol] = amp.conj();
        Ok(u)
    }

    /// Gaussian random field with amplitude decaying like `|k|^{-2}`, scaled to H-norm `scale`.
    pub fn random<R: Rng + ?Sized>(basis: &Arc<SpectralBasis>, rng: &mut R, scale: f64) -> Self {
        let mut u = Self::zeros(basis);
        let npol = basis.n_pol();
        for (i, mode) in basis.modes().iter().enumerate() {
            if !mode.canonical {
                continue;
            }
            let decay = 1.0 / mode.lambda;
            for p in 0..npol {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let a = Complex64::new(re, im) * decay;
                u.coeffs[i * npol + p] = a;
                u.coeffs[mode.conj * npol + p] = a.conj();
            }
        }
        let n = u.norm_h();
        if n > 0.0 {
            u.scale_mut(scale / n);
        }
        u
    }

    /// Random field supported on the forced block, scaled to H-norm `scale`.
    pub fn random_low<R: Rng + ?Sized>(basis: &Arc<SpectralBasis>, rng: &mut R, scale: f64) -> Self {
        let mut u = Self::random(basis, rng, 1.0);
        let (mut low, _) = u.split_low_high();
        let n = low.norm_h();
        if n > 0.0 {
            low.scale_mut(scale / n);
        }
        u = low;
        u
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn norm(&self, kind: Norm) -> Result<f64> {
        match kind {
            Norm::H => Ok(self.norm_h()),
            Norm::V => Ok(self.norm_v_sq().sqrt()),
            Norm::Lp(p) => {
                if !(p >= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "Lp norm needs p ≥ 1, got {p}"
                    )));
                }
                transform::to_physical(self).lp_norm(p)
            }
        }
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm_h(&self) -> f64 {
        self.norm_h_sq().sqrt()
    }

    pub fn norm_v_sq(&self) -> f64 {
        let npol = self.basis.n_pol();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(s, a)| self.basis.modes()[s / npol].lambda * a.norm_sqr())
            .sum()
    }

    pub fn norm_v(&self) -> f64 {
        self.norm_v_sq().sqrt()
    }

    /// L² inner product `(u, v)`.
    pub fn inner(&self, other: &VelocityField) -> f64 {
        debug_assert!(self.basis.same_as(&other.basis));
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn try_inner(&self, other: &VelocityField) -> Result<f64> {
        self.basis.check_same(&other.basis)?;
        Ok(self.inner(other))
    }

    pub fn add(&self, other: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn scaled(&self, s: f64) -> VelocityField {
        let mut out = self.clone();
        out.scale_mut(s);
        out
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|a| *a *= s);
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &VelocityField) {
        debug_assert!(self.basis.same_as(&other.basis));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
    }

    /// Splits into the forced block (`λ_k ≤ λ_{N₀}`) and its complement.
    pub fn split_low_high(&self) -> (VelocityField, VelocityField) {
        let cut = self.basis.n_low_slots();
        let mut low = self.clone();
        let mut high = self.clone();
        low.coeffs[cut..].iter_mut().for_each(|a| *a = Complex64::default());
        high.coeffs[..cut].iter_mut().for_each(|a| *a = Complex64::default());
        (low, high)
    }

    /// H-norm of the part outside the forced block.
    pub fn high_norm(&self) -> f64 {
        let cut = self.basis.n_low_slots();
        self.coeffs[cut..].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Cartesian coefficient vector `Σ_p a_{k,p} e_{k,p}` of mode `mode`.
    pub fn vector_coeff(&self, mode: usize) -> [Complex64; 3] {
        let npol = self.basis.n_pol();
        let m = &self.basis.modes()[mode];
        let mut v = [Complex64::default(); 3];
        for p in 0..npol {
            let a = self.coeffs[mode * npol + p];
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += a * m.polarizations[p][c];
            }
        }
        v
    }

    /// Largest `|k·û(k)| / |k|` over all modes.
    pub fn divergence_defect(&self) -> f64 {
        (0..self.basis.n_modes())
            .map(|i| {
                let v = self.vector_coeff(i);
                let m = &self.basis.modes()[i];
                let d: Complex64 = (0..3).map(|c| v[c] * m.k[c] as f64).sum();
                d.norm() / m.lambda.sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|a(−k) − conj a(k)|`.
    pub fn reality_defect(&self) -> f64 {
        let npol = self.basis.n_pol();
        let mut worst: f64 = 0.0;
        for (i, m) in self.basis.modes().iter().enumerate() {
            for p in 0..npol {
                let d = self.coeffs[m.conj * npol + p] - self.coeffs[i * npol + p].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Real coordinates of the forced block: for each forced slot, `√2·Re a` on the canonical
    /// half and `√2·Im a_k` (of the canonical partner) on the other. Isometric: `Σ d² = ‖u_low‖²`.
    pub fn low_dofs(&self) -> Vec<f64> {
        let basis = &self.basis;
        let npol = basis.n_pol();
        let modes = basis.modes();
        let mut out = Vec::with_capacity(basis.n_low_slots());
        for (i, m) in modes[..basis.n_low()].iter().enumerate() {
            for p in 0..npol {
                let d = if m.canonical {
                    self.coeffs[i * npol + p].re
                } else {
                    self.coeffs[m.conj * npol + p].im
                };
                out.push(std::f64::consts::SQRT_2 * d);
            }
        }
        out
    }

    /// Inverse of [`low_dofs`](Self::low_dofs); high modes are zero.
    pub fn from_low_dofs(basis: &Arc<SpectralBasis>, dofs: &[f64]) -> Result<Self> {
        if dofs.len() != basis.n_low_slots() {
            return Err(Error::BasisMismatch(format!(
                "{} real dofs for a forced block of {} slots",
                dofs.len(),
                basis.n_low_slots()
            )));
        }
        let mut u = Self::zeros(basis);
        u.set_low_dofs(dofs);
        Ok(u)
    }

    /// Overwrites the forced block from real coordinates.
    pub(crate) fn set_low_dofs(&mut self, dofs: &[f64]) {
        let npol = self.basis.n_pol();
        let basis = self.basis.clone();
        let modes = basis.modes();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (i, m) in modes[..basis.n_low()].iter().enumerate() {
            if !m.canonical {
                continue;
            }
            let j = m.conj;
            for p in 0..npol {
                let a = Complex64::new(dofs[i * npol + p], dofs[j * npol + p]) * h;
                self.coeffs[i * npol + p] = a;
                self.coeffs[j * npol + p] = a.conj();
            }
        }
    }

    /// Adds `scale · d` (real forced-block coordinates) into the field.
    pub(crate) fn add_low_dofs(&mut self, dofs: &[f64], scale: f64) {
        let npol = self.basis.n_pol();
        let basis = self.basis.clone();
        let modes = basis.modes();
        let h = std::f64::consts::FRAC_1_SQRT_2 * scale;
        for (i, m) in modes[..basis.n_low()].iter().enumerate() {
            if !m.canonical {
                continue;
            }
            let j = m.conj;
            for p in 0..npol {
                let a = Complex64::new(dofs[i * npol + p], dofs[j * npol + p]) * h;
                self.coeffs[i * npol + p] += a;
                self.coeffs[j * npol + p] += a.conj();
            }
        }
    }

    pub fn lp_norm_with(&self, p: f64, ws: &mut Workspace) -> Result<f64> {
        transform::to_physical_with(self, ws).lp_norm(p)
    }
}

/// Unconstrained per-mode complex vector field (e.g. a gradient or a raw nonlinear product).
#[derive(Debug, Clone)]
pub struct RawField {
    basis: Arc<SpectralBasis>,
    vectors: Vec<[Complex64; 3]>,
}

impl RawField {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        RawField {
            basis: basis.clone(),
            vectors: vec![[Complex64::default(); 3]; basis.n_modes()],
        }
    }

    pub(crate) fn from_vectors_unchecked(
        basis: &Arc<SpectralBasis>,
        vectors: Vec<[Complex64; 3]>,
    ) -> Self {
        RawField {
            basis: basis.clone(),
            vectors,
        }
    }

    /// Sets the vector at `k` and its conjugate at `−k`.
    pub fn set(&mut self, k: &[i64], v: [Complex64; 3]) -> Result<()> {
        let i = find_mode(&self.basis, k)?;
        let j = self.basis.modes()[i].conj;
        self.vectors[i] = v;
        self.vectors[j] = v.map(|c| c.conj());
        Ok(())
    }

    /// Gradient `∇φ` of a scalar with spectral values `phi[mode]`.
    pub fn gradient(basis: &Arc<SpectralBasis>, phi: &[Complex64]) -> Result<Self> {
        if phi.len() != basis.n_modes() {
            return Err(Error::BasisMismatch("scalar length differs from mode count".into()));
        }
        let vectors = basis
            .modes()
            .iter()
            .zip(phi)
            .map(|(m, &f)| {
                let ik = |c: usize| Complex64::new(0.0, m.k[c] as f64) * f;
                [ik(0), ik(1), ik(2)]
            })
            .collect();
        Ok(RawField::from_vectors_unchecked(basis, vectors))
    }

    pub fn vectors(&self) -> &[[Complex64; 3]] {
        &self.vectors
    }

    /// Applies `I − kkᵀ/|k|²` mode by mode, expressed in the polarization basis.
    pub fn leray_project(&self) -> VelocityField {
        let npol = self.basis.n_pol();
        let mut coeffs = vec![Complex64::default(); self.basis.n_slots()];
        for (i, (m, v)) in self.basis.modes().iter().zip(&self.vectors).enumerate() {
            for p in 0..npol {
                let e = &m.polarizations[p];
                coeffs[i * npol + p] = v[0] * e[0] + v[1] * e[1] + v[2] * e[2];
            }
        }
        VelocityField::from_coeffs_unchecked(&self.basis, coeffs)
    }
}

impl From<&VelocityField> for RawField {
    fn from(u: &VelocityField) -> Self {
        let vectors = (0..u.basis.n_modes()).map(|i| u.vector_coeff(i)).collect();
        RawField::from_vectors_unchecked(&u.basis, vectors)
    }
}

pub(crate) fn find_mode(basis: &SpectralBasis, k: &[i64]) -> Result<usize> {
    if k.len() != basis.dim() {
        return Err(Error::InvalidArgument(format!(
            "wavevector {k:?} has wrong dimension for a {}-d basis",
            basis.dim()
        )));
    }
    let mut key = [0i64; 3];
    key[..k.len()].copy_from_slice(k);
    basis
        .modes()
        .iter()
        .position(|m| m.k == key)
        .ok_or_else(|| Error::InvalidArgument(format!("wavevector {k:?} is not retained")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hand_projection_of_unit_mode() {
        let basis = SpectralBasis::build(2, 4, 1.5).unwrap();
        let mut raw = RawField::zeros(&basis);
        raw.set(&[1, 0], [c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let u = raw.leray_project();
        let i = find_mode(&basis, &[1, 0]).unwrap();
        let v = u.vector_coeff(i);
        assert!(v[0].norm() < 1e-15);
        assert!((v[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn norms_of_single_mode() {
        let basis = SpectralBasis::build(2, 8, 1.5).unwrap();
        let u = VelocityField::single_mode(&basis, &[2, 0], 0, c(0.3, 0.4)).unwrap();
        // both ±k carry |a| = 0.5
        let a = 0.5 * 2f64.sqrt();
        assert!((u.norm_h() - a).abs() < 1e-15);
        assert!((u.norm_v() - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn low_dofs_are_isometric() {
        let basis = SpectralBasis::build(2, 8, 4.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = VelocityField::random(&basis, &mut rng, 1.0);
        let (low, _) = u.split_low_high();
        let d = u.low_dofs();
        let s: f64 = d.iter().map(|x| x * x).sum();
        assert!((s - low.norm_h_sq()).abs() < 1e-14);
        let back = VelocityField::from_low_dofs(&basis, &d).unwrap();
        assert!(back.sub(&low).norm_h() < 1e-15);
    }

    #[test]
    fn from_coeffs_rejects_non_real() {
        let basis = SpectralBasis::build(2, 4, 1.5).unwrap();
        let mut a = vec![Complex64::default(); basis.n_slots()];
        a[0] = c(1.0, 0.0);
        assert!(VelocityField::from_coeffs(&basis, a).is_err());
    }
}
