//! Divergence-free Fourier eigenbasis of the Stokes operator on the periodic box `[0, 2π)^n`.
//!
//! Retained wavevectors are `k ∈ ℤⁿ \ {0}` with `|k_i| ≤ N/2`. Each wavevector carries
//! `n − 1` unit polarization vectors orthogonal to `k`; a velocity state is stored as one
//! complex amplitude per (mode, polarization) slot. The physical field is
//!
//! ```text
//! u(x) = (2π)^{-n/2} Σ_k Σ_p a_{k,p} e_{k,p} e^{i k·x}
//! ```
//!
//! so the coefficient ℓ² norm equals the L² norm. Polarizations are chosen on the canonical
//! half-space (first nonzero component positive) and copied to `−k`, which makes the reality
//! condition simply `a_{−k,p} = conj(a_{k,p})`.
//!
//! Modes are ordered lexicographically by `(λ_k, k)`; the forced (low) block is therefore a
//! prefix of the slot array.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters that fully determine a basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub dim: usize,
    pub resolution: usize,
    pub eigen_cut: f64,
}

#[derive(Debug, Clone)]
pub struct Mode {
    pub k: [i64; 3],
    pub lambda: f64,
    /// Index of the mode carrying `−k`.
    pub conj: usize,
    /// True on the half-space where the first nonzero component of `k` is positive.
    pub canonical: bool,
    pub polarizations: [[f64; 3]; 2],
    pub(crate) grid_index: usize,
}

pub struct SpectralBasis {
    spec: BasisSpec,
    modes: Vec<Mode>,
    n_low: usize,
    lambda_n0: f64,
    grid: usize,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
    // rows (all but the last grid axis) whose coordinates lie inside the resolved band
    active_rows: Vec<usize>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("spec", &self.spec)
            .field("modes", &self.modes.len())
            .field("n_low", &self.n_low)
            .field("lambda_n0", &self.lambda_n0)
            .field("grid", &self.grid)
            .finish()
    }
}

impl SpectralBasis {
    /// Builds the basis for dimension `dim`, resolution `resolution` (even, ≥ 4) and forcing
    /// cutoff `eigen_cut`: modes with `λ_k ≤ eigen_cut` form the forced block.
    pub fn build(dim: usize, resolution: usize, eigen_cut: f64) -> Result<Arc<Self>> {
        Self::from_spec(BasisSpec {
            dim,
            resolution,
            eigen_cut,
        })
    }

    pub fn from_spec(spec: BasisSpec) -> Result<Arc<Self>> {
        let BasisSpec {
            dim,
            resolution,
            eigen_cut,
        } = spec;
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidBasis(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if resolution < 4 || resolution % 2 != 0 {
            return Err(Error::InvalidBasis(format!(
                "resolution must be even and at least 4, got {resolution}"
            )));
        }
        let half = (resolution / 2) as i64;
        let band = (half * half) as f64;
        if !eigen_cut.is_finite() || eigen_cut >= band {
            return Err(Error::InvalidBasis(format!(
                "eigenvalue cutoff {eigen_cut} must lie strictly inside the resolved band (< {band})"
            )));
        }
        if eigen_cut < 1.0 {
            return Err(Error::InvalidBasis(format!(
                "eigenvalue cutoff {eigen_cut} is below λ₁ = 1; the forced block would be empty"
            )));
        }

        let grid = 2 * resolution;
        let mut raw: Vec<[i64; 3]> = Vec::new();
        let range = -half..=half;
        match dim {
            2 => {
                for k0 in range.clone() {
                    for k1 in range.clone() {
                        if k0 != 0 || k1 != 0 {
                            raw.push([k0, k1, 0]);
                        }
                    }
                }
            }
            _ => {
                for k0 in range.clone() {
                    for k1 in range.clone() {
                        for k2 in range.clone() {
                            if k0 != 0 || k1 != 0 || k2 != 0 {
                                raw.push([k0, k1, k2]);
                            }
                        }
                    }
                }
            }
        }
        let norm2 = |k: &[i64; 3]| k.iter().map(|c| c * c).sum::<i64>();
        raw.sort_by(|a, b| norm2(a).cmp(&norm2(b)).then_with(|| a.cmp(b)));

        let mut modes: Vec<Mode> = raw
            .iter()
            .map(|k| {
                let canonical = is_canonical(k);
                let rep = if canonical { *k } else { [-k[0], -k[1], -k[2]] };
                Mode {
                    k: *k,
                    lambda: norm2(k) as f64,
                    conj: usize::MAX,
                    canonical,
                    polarizations: polarizations(dim, &rep),
                    grid_index: grid_index(dim, grid, k),
                }
            })
            .collect();
        let index_of = |k: &[i64; 3]| raw.binary_search_by(|p| {
            norm2(p).cmp(&norm2(k)).then_with(|| p.cmp(k))
        });
        for m in modes.iter_mut() {
            let neg = [-m.k[0], -m.k[1], -m.k[2]];
            m.conj = index_of(&neg).expect("lattice is symmetric");
        }

        let n_low = modes.iter().take_while(|m| m.lambda <= eigen_cut).count();
        let lambda_n0 = modes[n_low - 1].lambda;

        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(grid);
        let fft_inverse = planner.plan_fft_inverse(grid);

        let in_band = |c: usize| {
            let f = if c <= grid / 2 { c as i64 } else { c as i64 - grid as i64 };
            f.abs() <= half
        };
        let active_rows = (0..grid.pow(dim as u32 - 1))
            .filter(|&row| {
                let mut rest = row;
                (0..dim - 1).all(|_| {
                    let ok = in_band(rest % grid);
                    rest /= grid;
                    ok
                })
            })
            .collect();

        Ok(Arc::new(SpectralBasis {
            spec,
            modes,
            n_low,
            lambda_n0,
            grid,
            fft_forward,
            fft_inverse,
            active_rows,
        }))
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn resolution(&self) -> usize {
        self.spec.resolution
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Polarizations per mode (`n − 1`).
    pub fn n_pol(&self) -> usize {
        self.spec.dim - 1
    }

    /// Number of complex coefficient slots (`modes × polarizations`).
    pub fn n_slots(&self) -> usize {
        self.modes.len() * self.n_pol()
    }

    /// `N₀`: number of forced modes.
    pub fn n_low(&self) -> usize {
        self.n_low
    }

    pub fn n_low_slots(&self) -> usize {
        self.n_low * self.n_pol()
    }

    /// Largest forced eigenvalue `λ_{N₀}`.
    pub fn lambda_n0(&self) -> f64 {
        self.lambda_n0
    }

    /// First eigenvalue; equal to 1 on the 2π box.
    pub fn lambda_1(&self) -> f64 {
        self.modes[0].lambda
    }

    pub fn lambda_max(&self) -> f64 {
        self.modes.last().map(|m| m.lambda).unwrap_or(0.0)
    }

    /// Eigenvalue of the mode carrying `slot`.
    #[inline]
    pub fn slot_lambda(&self, slot: usize) -> f64 {
        self.modes[slot / self.n_pol()].lambda
    }

    /// Grid points per axis of the oversampled collocation grid (`M = 2N`).
    pub fn grid_size(&self) -> usize {
        self.grid
    }

    pub fn grid_points(&self) -> usize {
        self.grid.pow(self.spec.dim as u32)
    }

    /// Quadrature weight `(2π/M)^n` of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (2.0 * PI / self.grid as f64).powi(self.spec.dim as i32)
    }

    pub(crate) fn same_as(&self, other: &SpectralBasis) -> bool {
        std::ptr::eq(self, other) || self.spec == other.spec
    }

    pub(crate) fn check_same(&self, other: &SpectralBasis) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::BasisMismatch(format!(
                "{:?} vs {:?}",
                self.spec, other.spec
            )))
        }
    }

    /// In-place n-dimensional FFT on an `M^n` array (last axis contiguous). Unnormalized in
    /// both directions. Only band-limited data is ever synthesized and only the band is read
    /// back after analysis, so the contiguous pass skips rows outside the band.
    pub(crate) fn fft_nd(&self, data: &mut [Complex64], inverse: bool, work: &mut FftWork) {
        let m = self.grid;
        let plan = if inverse {
            &self.fft_inverse
        } else {
            &self.fft_forward
        };
        let need = plan.get_inplace_scratch_len();
        if work.scratch.len() < need {
            work.scratch.resize(need, Complex64::default());
        }
        if work.lines.len() < data.len() {
            work.lines.resize(data.len(), Complex64::default());
        }
        let dim = self.spec.dim;
        let rows = |data: &mut [Complex64], scratch: &mut [Complex64]| {
            for &row in &self.active_rows {
                plan.process_with_scratch(&mut data[row * m..(row + 1) * m], scratch);
            }
        };
        if inverse {
            rows(data, &mut work.scratch[..need]);
        }
        for axis in 0..dim - 1 {
            let stride = m.pow((dim - 1 - axis) as u32);
            let outer = data.len() / (m * stride);
            let lines = &mut work.lines[..data.len()];
            for o in 0..outer {
                let block = &data[o * m * stride..(o + 1) * m * stride];
                let out = &mut lines[o * m * stride..(o + 1) * m * stride];
                for (j, src) in block.chunks_exact(stride).enumerate() {
                    for (inner, z) in src.iter().enumerate() {
                        out[inner * m + j] = *z;
                    }
                }
            }
            plan.process_with_scratch(lines, &mut work.scratch[..need]);
            for o in 0..outer {
                let block = &mut data[o * m * stride..(o + 1) * m * stride];
                let src = &lines[o * m * stride..(o + 1) * m * stride];
                for (j, dst) in block.chunks_exact_mut(stride).enumerate() {
                    for (inner, z) in dst.iter_mut().enumerate() {
                        *z = src[inner * m + j];
                    }
                }
            }
        }
        if !inverse {
            rows(data, &mut work.scratch[..need]);
        }
    }
}

/// Reusable FFT scratch space.
#[derive(Default)]
pub(crate) struct FftWork {
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

fn is_canonical(k: &[i64; 3]) -> bool {
    for &c in k {
        if c != 0 {
            return c > 0;
        }
    }
    false
}

fn grid_index(dim: usize, m: usize, k: &[i64; 3]) -> usize {
    let m_i = m as i64;
    let mut idx = 0usize;
    for c in k.iter().take(dim) {
        idx = idx * m + c.rem_euclid(m_i) as usize;
    }
    idx
}

fn polarizations(dim: usize, k: &[i64; 3]) -> [[f64; 3]; 2] {
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let norm = kf.iter().map(|c| c * c).sum::<f64>().sqrt();
    if dim == 2 {
        return [[-kf[1] / norm, kf[0] / norm, 0.0], [0.0; 3]];
    }
    // reference axis least aligned with k
    let mut axis = 0;
    for i in 1..3 {
        if kf[i].abs() < kf[axis].abs() {
            axis = i;
        }
    }
    let mut reference = [0.0; 3];
    reference[axis] = 1.0;
    let e1 = normalize(cross(&kf, &reference));
    let e2 = cross(&kf, &e1).map(|c| c / norm);
    [e1, e2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.map(|c| c / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_box_forces_unit_shell() {
        let b = SpectralBasis::build(2, 4, 1.5).unwrap();
        assert_eq!(b.lambda_1(), 1.0);
        assert_eq!(b.n_low(), 4);
        assert_eq!(b.lambda_n0(), 1.0);
        let mut low: Vec<[i64; 3]> = b.modes()[..4].iter().map(|m| m.k).collect();
        low.sort();
        assert_eq!(low, vec![[-1, 0, 0], [0, -1, 0], [0, 1, 0], [1, 0, 0]]);
    }

    #[test]
    fn forced_count_matches_lattice_enumeration() {
        let b = SpectralBasis::build(2, 8, 4.5).unwrap();
        let mut count = 0;
        for a in -4i64..=4 {
            for c in -4i64..=4 {
                let l = a * a + c * c;
                if l > 0 && l <= 4 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 12);
        assert_eq!(b.n_low(), 12);
        assert_eq!(b.lambda_n0(), 4.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SpectralBasis::build(2, 4, 10.0).is_err());
        assert!(SpectralBasis::build(2, 4, 4.0).is_err());
        assert!(SpectralBasis::build(2, 7, 1.5).is_err());
        assert!(SpectralBasis::build(4, 8, 1.5).is_err());
        assert!(SpectralBasis::build(2, 8, 0.5).is_err());
    }

    #[test]
    fn modes_sorted_and_paired() {
        for (dim, n) in [(2, 8), (3, 4)] {
            let b = SpectralBasis::build(dim, n, 2.5).unwrap();
            let modes = b.modes();
            for w in modes.windows(2) {
                assert!(w[0].lambda <= w[1].lambda);
            }
            for (i, m) in modes.iter().enumerate() {
                assert_ne!(m.k, [0, 0, 0]);
                let c = &modes[m.conj];
                assert_eq!(c.k, [-m.k[0], -m.k[1], -m.k[2]]);
                assert_eq!(c.conj, i);
                assert_ne!(m.canonical, c.canonical);
                for p in 0..b.n_pol() {
                    let e = m.polarizations[p];
                    let dot: f64 = (0..3).map(|j| e[j] * m.k[j] as f64).sum();
                    assert!(dot.abs() < 1e-14);
                    let n2: f64 = e.iter().map(|x| x * x).sum();
                    assert!((n2 - 1.0).abs() < 1e-14);
                    assert_eq!(e, c.polarizations[p]);
                }
                if dim == 3 {
                    let (e1, e2) = (m.polarizations[0], m.polarizations[1]);
                    let dot: f64 = (0..3).map(|j| e1[j] * e2[j]).sum();
                    assert!(dot.abs() < 1e-14);
                }
            }
        }
    }
}
