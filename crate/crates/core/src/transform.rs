//! Spectral ↔ physical transforms on the oversampled collocation grid.
//!
//! The grid has `M = 2N` points per axis at `x_j = 2πj/M`, last axis contiguous. With the
//! coefficient convention of [`crate::basis`], synthesis is `(2π)^{-n/2}·IFFT` and analysis is
//! `(2π)^{n/2}/Mⁿ·FFT`. Two real fields are packed into one complex FFT in both directions.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::basis::{FftWork, SpectralBasis};
use crate::error::{Error, Result};
use crate::field::VelocityField;

/// Real velocity samples on the collocation grid, stored component-major.
#[derive(Debug, Clone)]
pub struct PhysicalField {
    basis: Arc<SpectralBasis>,
    values: Vec<f64>,
}

impl PhysicalField {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        PhysicalField {
            basis: basis.clone(),
            values: vec![0.0; basis.dim() * basis.grid_points()],
        }
    }

    pub fn from_values(basis: &Arc<SpectralBasis>, values: Vec<f64>) -> Result<Self> {
        let want = basis.dim() * basis.grid_points();
        if values.len() != want {
            return Err(Error::BasisMismatch(format!(
                "physical field has {} samples, grid expects {want}",
                values.len()
            )));
        }
        Ok(PhysicalField {
            basis: basis.clone(),
            values,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let np = self.basis.grid_points();
        &self.values[c * np..(c + 1) * np]
    }

    /// Grid coordinates of flat point index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.basis.grid_size();
        let h = 2.0 * PI / m as f64;
        let mut x = [0.0; 3];
        let mut rest = idx;
        for axis in (0..self.basis.dim()).rev() {
            x[axis] = (rest % m) as f64 * h;
            rest /= m;
        }
        x
    }

    /// Pointwise Euclidean magnitude `|u(x_j)|`.
    pub fn magnitudes(&self) -> Vec<f64> {
        let np = self.basis.grid_points();
        (0..np)
            .map(|j| {
                (0..self.basis.dim())
                    .map(|c| self.values[c * np + j].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitudes().into_iter().fold(0.0, f64::max)
    }

    /// `(∫|u|^p dx)^{1/p}` by grid quadrature.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("Lp norm needs p ≥ 1, got {p}")));
        }
        let s: f64 = self.magnitudes().into_iter().map(|m| m.powf(p)).sum();
        Ok((s * self.basis.cell_volume()).powf(1.0 / p))
    }
}

/// Per-thread buffers for transforms and nonlinear operator evaluation.
pub struct Workspace {
    basis: Arc<SpectralBasis>,
    fft: FftWork,
    pub(crate) packed: Vec<Complex64>,
    pub(crate) grids: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new(basis: &Arc<SpectralBasis>) -> Self {
        Workspace {
            basis: basis.clone(),
            fft: FftWork::default(),
            packed: vec![Complex64::default(); basis.grid_points()],
            grids: Vec::new(),
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub(crate) fn ensure_grids(&mut self, count: usize) {
        let np = self.basis.grid_points();
        while self.grids.len() < count {
            self.grids.push(vec![0.0; np]);
        }
    }

    /// Synthesizes two real scalar fields from per-mode spectral values `f(i)` and `g(i)`.
    pub(crate) fn synth_pair<F, G>(&mut self, f: F, g: G, out_a: &mut [f64], out_b: &mut [f64])
    where
        F: Fn(usize) -> Complex64,
        G: Fn(usize) -> Complex64,
    {
        let basis = &*self.basis;
        let scale = (2.0 * PI).powf(-(basis.dim() as f64) / 2.0);
        let buf = &mut self.packed;
        buf.iter_mut().for_each(|z| *z = Complex64::default());
        let i_unit = Complex64::new(0.0, 1.0);
        for (i, mode) in basis.modes().iter().enumerate() {
            buf[mode.grid_index] = (f(i) + i_unit * g(i)) * scale;
        }
        basis.fft_nd(buf, true, &mut self.fft);
        for ((a, b), z) in out_a.iter_mut().zip(out_b.iter_mut()).zip(buf.iter()) {
            *a = z.re;
            *b = z.im;
        }
    }

    /// Analyzes two real grid fields; calls `sink(i, F_i, G_i)` for every mode.
    pub(crate) fn analyze_pair<S>(&mut self, a: &[f64], b: &[f64], mut sink: S)
    where
        S: FnMut(usize, Complex64, Complex64),
    {
        let basis = &*self.basis;
        let scale = (2.0 * PI).powf(basis.dim() as f64 / 2.0) / basis.grid_points() as f64;
        let buf = &mut self.packed;
        for ((z, &x), &y) in buf.iter_mut().zip(a).zip(b) {
            *z = Complex64::new(x, y);
        }
        basis.fft_nd(buf, false, &mut self.fft);
        let modes = basis.modes();
        for (i, mode) in modes.iter().enumerate() {
            let h = buf[mode.grid_index];
            let hc = buf[modes[mode.conj].grid_index].conj();
            let f = (h + hc) * (0.5 * scale);
            let g = (h - hc) * Complex64::new(0.0, -0.5 * scale);
            sink(i, f, g);
        }
    }

    /// Writes the `n` velocity components of `u` into `grids[first..first + n]`.
    pub(crate) fn synth_velocity(&mut self, u: &VelocityField, first: usize) {
        let dim = self.basis.dim();
        self.ensure_grids(first + dim + 1);
        let npol = dim - 1;
        let basis = self.basis.clone();
        let a = u.coeffs();
        let scale = (2.0 * PI).powf(-(dim as f64) / 2.0);
        let i_unit = Complex64::new(0.0, 1.0);
        let fill = |buf: &mut [Complex64], c0: usize, c1: Option<usize>| {
            buf.iter_mut().for_each(|z| *z = Complex64::default());
            for (i, m) in basis.modes().iter().enumerate() {
                let mut f = Complex64::default();
                let mut g = Complex64::default();
                for p in 0..npol {
                    let ap = a[i * npol + p];
                    f += ap * m.polarizations[p][c0];
                    if let Some(c1) = c1 {
                        g += ap * m.polarizations[p][c1];
                    }
                }
                buf[m.grid_index] = (f + i_unit * g) * scale;
            }
        };
        fill(&mut self.packed, 0, Some(1));
        self.basis.fft_nd(&mut self.packed, true, &mut self.fft);
        unpack(&self.packed, &mut self.grids, first, first + 1);
        if dim == 3 {
            fill(&mut self.packed, 2, None);
            self.basis.fft_nd(&mut self.packed, true, &mut self.fft);
            unpack(&self.packed, &mut self.grids, first + 2, first + 3);
        }
    }

    /// Projects an `n`-component grid vector field held in `grids[first..first + n]` back onto
    /// the divergence-free basis.
    pub(crate) fn analyze_projected(&mut self, first: usize) -> VelocityField {
        let basis = self.basis.clone();
        let dim = basis.dim();
        let npol = basis.n_pol();
        self.ensure_grids(first + dim + 1);
        let mut coeffs = vec![Complex64::default(); basis.n_slots()];
        // projection onto the polarizations is the Leray projection
        let ga = std::mem::take(&mut self.grids[first]);
        let gb = std::mem::take(&mut self.grids[first + 1]);
        self.analyze_pair(&ga, &gb, |i, f, g| {
            let m = &basis.modes()[i];
            for p in 0..npol {
                let e = &m.polarizations[p];
                coeffs[i * npol + p] = f * e[0] + g * e[1];
            }
        });
        self.grids[first] = ga;
        self.grids[first + 1] = gb;
        if dim == 3 {
            let gc = std::mem::take(&mut self.grids[first + 2]);
            let mut zero = std::mem::take(&mut self.grids[first + 3]);
            zero.iter_mut().for_each(|x| *x = 0.0);
            self.analyze_pair(&gc, &zero, |i, f, _| {
                let m = &basis.modes()[i];
                for p in 0..npol {
                    coeffs[i * npol + p] += f * m.polarizations[p][2];
                }
            });
            self.grids[first + 2] = gc;
            self.grids[first + 3] = zero;
        }
        VelocityField::from_coeffs_unchecked(&basis, coeffs)
    }
}

fn unpack(buf: &[Complex64], grids: &mut [Vec<f64>], a: usize, b: usize) {
    let (lo, hi) = grids.split_at_mut(b);
    for ((x, y), z) in lo[a].iter_mut().zip(hi[0].iter_mut()).zip(buf) {
        *x = z.re;
        *y = z.im;
    }
}

pub fn to_physical(u: &VelocityField) -> PhysicalField {
    let mut ws = Workspace::new(u.basis());
    to_physical_with(u, &mut ws)
}

pub fn to_physical_with(u: &VelocityField, ws: &mut Workspace) -> PhysicalField {
    let dim = u.basis().dim();
    ws.synth_velocity(u, 0);
    let mut values = Vec::with_capacity(dim * u.basis().grid_points());
    for c in 0..dim {
        values.extend_from_slice(&ws.grids[c]);
    }
    PhysicalField {
        basis: u.basis().clone(),
        values,
    }
}

/// Analysis followed by Leray projection; the identity on fields produced by [`to_physical`].
pub fn to_spectral(phys: &PhysicalField) -> VelocityField {
    let mut ws = Workspace::new(phys.basis());
    to_spectral_with(phys, &mut ws)
}

pub fn to_spectral_with(phys: &PhysicalField, ws: &mut Workspace) -> VelocityField {
    let dim = phys.basis.dim();
    ws.ensure_grids(dim);
    for c in 0..dim {
        ws.grids[c].copy_from_slice(phys.component(c));
    }
    ws.analyze_projected(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_profile() {
        let basis = SpectralBasis::build(2, 8, 1.5).unwrap();
        let a = 0.7;
        let u = VelocityField::single_mode(&basis, &[1, 0], 0, Complex64::new(a, 0.0)).unwrap();
        let phys = to_physical(&u);
        // polarization of (1,0) is (0,1); profile 2a cos(x)/(2π)
        let expected_max = 2.0 * a / (2.0 * PI);
        assert!((phys.max_abs() - expected_max).abs() < 1e-13);
        for j in 0..basis.grid_points() {
            let x = phys.point(j);
            assert!(phys.component(0)[j].abs() < 1e-14);
            assert!((phys.component(1)[j] - expected_max * x[0].cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_field_gives_zero_grid() {
        let basis = SpectralBasis::build(3, 4, 1.5).unwrap();
        let phys = to_physical(&VelocityField::zeros(&basis));
        assert!(phys.values().iter().all(|&v| v == 0.0));
    }
}
