//! The Stokes operator `A`, the Leray-projected advection `B(u, v)`, the Forchheimer damping
//! `C(u) = P(|u|^{r−1}u)`, their sum `G`, and the monotonicity diagnostics.
//!
//! `B` and `C` are evaluated pseudo-spectrally on the `2N` grid. Quadratic products are exact
//! there, so the trilinear identities hold to rounding; the power nonlinearity is not
//! band-limited for general `r` and carries a (small) quadrature error.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::transform::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub mu: f64,
    pub beta: f64,
    pub r: f64,
    #[serde(default)]
    pub alpha: f64,
}

impl PhysParams {
    pub fn new(mu: f64, beta: f64, r: f64) -> Result<Self> {
        let p = PhysParams {
            mu,
            beta,
            r,
            alpha: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("μ must be positive, got {}", self.mu)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "β must be nonnegative, got {}",
                self.beta
            )));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be ≥ 1, got {}", self.r)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "α must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Monotonicity shift `η = (r−3)/(2μ(r−1)) · (2/(βμ(r−1)))^{2/(r−3)}` for `r > 3`.
    pub fn eta(&self) -> Result<f64> {
        if !(self.r > 3.0) || !(self.beta > 0.0) {
            return Err(Error::Hypothesis(format!(
                "the supercritical shift needs r > 3 and β > 0 (r = {}, β = {})",
                self.r, self.beta
            )));
        }
        let (mu, beta, r) = (self.mu, self.beta, self.r);
        Ok((r - 3.0) / (2.0 * mu * (r - 1.0)) * (2.0 / (beta * mu * (r - 1.0))).powf(2.0 / (r - 3.0)))
    }

    /// `η̂ = 2η`, the shift used in the coupling estimates; zero at `r = 3`.
    pub fn eta_hat(&self) -> Result<f64> {
        if self.r == 3.0 {
            return Ok(0.0);
        }
        Ok(2.0 * self.eta()?)
    }
}

pub fn apply_a(u: &VelocityField) -> VelocityField {
    let basis = u.basis().clone();
    let npol = basis.n_pol();
    let coeffs = u
        .coeffs()
        .iter()
        .enumerate()
        .map(|(s, a)| a * basis.modes()[s / npol].lambda)
        .collect();
    VelocityField::from_coeffs_unchecked(&basis, coeffs)
}

pub fn apply_b(u: &VelocityField, v: &VelocityField) -> Result<VelocityField> {
    u.basis().check_same(v.basis())?;
    let mut ws = Workspace::new(u.basis());
    Ok(apply_b_with(u, v, &mut ws))
}

pub fn apply_b_with(u: &VelocityField, v: &VelocityField, ws: &mut Workspace) -> VelocityField {
    advect(ws, u, v, 0);
    ws.analyze_projected(0)
}

pub fn apply_c(u: &VelocityField, r: f64) -> Result<VelocityField> {
    let mut ws = Workspace::new(u.basis());
    apply_c_with(u, r, &mut ws)
}

pub fn apply_c_with(u: &VelocityField, r: f64, ws: &mut Workspace) -> Result<VelocityField> {
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("r must be ≥ 1, got {r}")));
    }
    if r == 1.0 {
        return Ok(u.clone());
    }
    let dim = u.basis().dim();
    ws.synth_velocity(u, 0);
    let np = u.basis().grid_points();
    let pow = PowerLaw::new(r);
    for j in 0..np {
        let s: f64 = (0..dim).map(|c| ws.grids[c][j].powi(2)).sum();
        let f = pow.factor(s);
        for c in 0..dim {
            ws.grids[c][j] *= f;
        }
    }
    Ok(ws.analyze_projected(0))
}

/// `G(u) = μAu + B(u, u) + βC(u) + αu`.
pub fn apply_g(u: &VelocityField, p: &PhysParams) -> Result<VelocityField> {
    p.validate()?;
    let mut eval = Nonlinear::new(u.basis());
    let out = eval.eval(u, p, true);
    let mut g = out.term;
    g.axpy(p.mu, &apply_a(u));
    if p.alpha > 0.0 {
        g.axpy(p.alpha, u);
    }
    Ok(g)
}

/// `b(u, v, w) = ⟨B(u, v), w⟩`.
pub fn trilinear(u: &VelocityField, v: &VelocityField, w: &VelocityField) -> Result<f64> {
    u.basis().check_same(w.basis())?;
    Ok(apply_b(u, v)?.inner(w))
}

/// Discrete dual norm `sup_{w ≠ 0} ⟨f, w⟩/‖w‖_V` over the resolved band.
pub fn dual_norm(f: &VelocityField) -> f64 {
    let basis = f.basis();
    let npol = basis.n_pol();
    f.coeffs()
        .iter()
        .enumerate()
        .map(|(s, a)| a.norm_sqr() / basis.modes()[s / npol].lambda)
        .sum::<f64>()
        .sqrt()
}

/// `|u|^{r−1}` as a function of `s = |u|²`, with integer exponents kept exact.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowerLaw {
    half: f64,
    int_half: Option<i32>,
}

impl PowerLaw {
    pub(crate) fn new(r: f64) -> Self {
        let half = (r - 1.0) / 2.0;
        let int_half = if half.fract() == 0.0 && half < 64.0 {
            Some(half as i32)
        } else {
            None
        };
        PowerLaw { half, int_half }
    }

    #[inline]
    pub(crate) fn factor(&self, s: f64) -> f64 {
        match self.int_half {
            Some(0) => 1.0,
            Some(1) => s,
            Some(2) => s * s,
            Some(k) => s.powi(k),
            None if s == 0.0 => 0.0,
            None => s.powf(self.half),
        }
    }
}

/// Writes the `n` components of `(u·∇)v` into `ws.grids[first..first + n]`.
fn advect(ws: &mut Workspace, u: &VelocityField, v: &VelocityField, first: usize) {
    let basis = u.basis().clone();
    let dim = basis.dim();
    let np = basis.grid_points();
    // u components, then ∂_j v_c at index dim + c*dim + j
    let mut scalars: Vec<Vec<Complex64>> = Vec::with_capacity(dim + dim * dim);
    let uvec: Vec<[Complex64; 3]> = (0..basis.n_modes()).map(|i| u.vector_coeff(i)).collect();
    let vvec: Vec<[Complex64; 3]> = (0..basis.n_modes()).map(|i| v.vector_coeff(i)).collect();
    for c in 0..dim {
        scalars.push(uvec.iter().map(|x| x[c]).collect());
    }
    for c in 0..dim {
        for j in 0..dim {
            scalars.push(
                basis
                    .modes()
                    .iter()
                    .zip(&vvec)
                    .map(|(m, x)| Complex64::new(0.0, m.k[j] as f64) * x[c])
                    .collect(),
            );
        }
    }
    let base = first + dim;
    synth_scalars(ws, &scalars, base);
    ws.ensure_grids(base + scalars.len());
    for c in 0..dim {
        let mut out = std::mem::take(&mut ws.grids[first + c]);
        out.resize(np, 0.0);
        for (pt, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += ws.grids[base + j][pt] * ws.grids[base + dim + c * dim + j][pt];
            }
            *o = acc;
        }
        ws.grids[first + c] = out;
    }
}

/// Synthesizes each per-mode scalar in `scalars` into `ws.grids[first + i]`.
fn synth_scalars(ws: &mut Workspace, scalars: &[Vec<Complex64>], first: usize) {
    ws.ensure_grids(first + scalars.len() + 1);
    let mut i = 0;
    while i < scalars.len() {
        let mut ga = std::mem::take(&mut ws.grids[first + i]);
        if i + 1 < scalars.len() {
            let mut gb = std::mem::take(&mut ws.grids[first + i + 1]);
            let (f, g) = (&scalars[i], &scalars[i + 1]);
            ws.synth_pair(|m| f[m], |m| g[m], &mut ga, &mut gb);
            ws.grids[first + i + 1] = gb;
        } else {
            let mut gb = std::mem::take(&mut ws.grids[first + i + 1]);
            let f = &scalars[i];
            ws.synth_pair(|m| f[m], |_| Complex64::default(), &mut ga, &mut gb);
            ws.grids[first + i + 1] = gb;
        }
        ws.grids[first + i] = ga;
        i += 2;
    }
}

/// Result of one nonlinear evaluation.
#[derive(Debug, Clone)]
pub struct NonlinearOut {
    /// `B(u, u) + βC(u)` (advection omitted when disabled).
    pub term: VelocityField,
    /// `‖u‖^{r+1}_{L^{r+1}}` by grid quadrature.
    pub lr1: f64,
    /// `max_x |u(x)|` on the grid.
    pub max_abs: f64,
}

/// Reusable evaluator of the explicit part of the dynamics.
pub struct Nonlinear {
    ws: Workspace,
}

impl Nonlinear {
    pub fn new(basis: &Arc<SpectralBasis>) -> Self {
        Nonlinear {
            ws: Workspace::new(basis),
        }
    }

    pub fn workspace(&mut self) -> &mut Workspace {
        &mut self.ws
    }

    pub fn eval(&mut self, u: &VelocityField, p: &PhysParams, advection: bool) -> NonlinearOut {
        let basis = u.basis().clone();
        let dim = basis.dim();
        let np = basis.grid_points();
        let pow = PowerLaw::new(p.r);
        let cell = basis.cell_volume();
        let ws = &mut self.ws;

        if dim == 2 {
            // rotational form: (u·∇)u = ω(−u₂, u₁) + ∇(|u|²/2), the gradient is projected out
            ws.synth_velocity(u, 0);
            if advection {
                ws.ensure_grids(4);
                let a = u.coeffs();
                // polarizations are shared by ±k, so the curl flips sign on the non-canonical half
                let omega = |i: usize| {
                    let m = &basis.modes()[i];
                    let s = if m.canonical { 1.0 } else { -1.0 };
                    Complex64::new(0.0, s * m.lambda.sqrt()) * a[i]
                };
                let mut g2 = std::mem::take(&mut ws.grids[2]);
                let mut g3 = std::mem::take(&mut ws.grids[3]);
                ws.synth_pair(omega, |_| Complex64::default(), &mut g2, &mut g3);
                ws.grids[2] = g2;
                ws.grids[3] = g3;
            }
            let mut lr1 = 0.0;
            let mut max_s: f64 = 0.0;
            let (head, tail) = ws.grids.split_at_mut(2);
            let (g0, g1) = head.split_at_mut(1);
            let (u1, u2) = (&mut g0[0], &mut g1[0]);
            for j in 0..np {
                let (a, b) = (u1[j], u2[j]);
                let s = a * a + b * b;
                max_s = max_s.max(s);
                let f = pow.factor(s);
                lr1 += f * s;
                let mut n1 = p.beta * f * a;
                let mut n2 = p.beta * f * b;
                if advection {
                    let w = tail[0][j];
                    n1 -= w * b;
                    n2 += w * a;
                }
                u1[j] = n1;
                u2[j] = n2;
            }
            return NonlinearOut {
                term: ws.analyze_projected(0),
                lr1: lr1 * cell,
                max_abs: max_s.sqrt(),
            };
        }

        // 3D: advective form
        if advection {
            advect(ws, u, u, 0);
        } else {
            ws.ensure_grids(dim);
            for c in 0..dim {
                ws.grids[c].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        ws.synth_velocity(u, dim);
        let mut lr1 = 0.0;
        let mut max_s: f64 = 0.0;
        for j in 0..np {
            let s: f64 = (0..dim).map(|c| ws.grids[dim + c][j].powi(2)).sum();
            max_s = max_s.max(s);
            let f = pow.factor(s);
            lr1 += f * s;
            if p.beta > 0.0 {
                for c in 0..dim {
                    let uc = ws.grids[dim + c][j];
                    ws.grids[c][j] += p.beta * f * uc;
                }
            }
        }
        NonlinearOut {
            term: ws.analyze_projected(0),
            lr1: lr1 * cell,
            max_abs: max_s.sqrt(),
        }
    }

    /// `‖u‖^{r+1}_{L^{r+1}}` by grid quadrature.
    pub fn lr1(&mut self, u: &VelocityField, r: f64) -> f64 {
        self_lr1(u, r, &mut self.ws)
    }
}

fn self_lr1(u: &VelocityField, r: f64, ws: &mut Workspace) -> f64 {
    let basis = u.basis().clone();
    let dim = basis.dim();
    let pow = PowerLaw::new(r);
    ws.synth_velocity(u, 0);
    let mut acc = 0.0;
    for j in 0..basis.grid_points() {
        let s: f64 = (0..dim).map(|c| ws.grids[c][j].powi(2)).sum();
        acc += pow.factor(s) * s;
    }
    acc * basis.cell_volume()
}

/// Which monotonicity statement applies to a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonotoneRegime {
    /// `r > 3`: `G + ηI` is monotone for any `μ, β > 0`.
    Supercritical,
    /// `r = 3`, `2βμ ≥ 1`: `G` is globally monotone.
    Critical,
    /// `n = 2`, `r ∈ [1, 3]`: local monotonicity on an `L⁴` ball.
    LocalL4,
}

impl MonotoneRegime {
    pub fn select(dim: usize, p: &PhysParams) -> Result<Self> {
        if p.r > 3.0 && p.beta > 0.0 {
            Ok(MonotoneRegime::Supercritical)
        } else if p.r == 3.0 && 2.0 * p.beta * p.mu >= 1.0 {
            Ok(MonotoneRegime::Critical)
        } else if dim == 2 && p.r <= 3.0 {
            Ok(MonotoneRegime::LocalL4)
        } else {
            Err(Error::Hypothesis(format!(
                "no monotonicity statement covers n = {dim}, r = {}, βμ = {}",
                p.r,
                p.beta * p.mu
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub regime: MonotoneRegime,
    pub eta: f64,
    /// `⟨G(u) − G(v), u − v⟩`.
    pub pairing: f64,
    /// `pairing + η‖u − v‖²_H`; nonnegative by the theorem.
    pub residual: f64,
    /// `(‖u‖_H + ‖v‖_H)²`, the scale for tolerances.
    pub scale: f64,
}

/// `⟨G(u) − G(v), u − v⟩ + η‖u − v‖²_H` with `η` chosen by [`MonotoneRegime::select`].
pub fn monotonicity_residual(u: &VelocityField, v: &VelocityField, p: &PhysParams) -> Result<f64> {
    Ok(monotonicity_report(u, v, p)?.residual)
}

pub fn monotonicity_report(
    u: &VelocityField,
    v: &VelocityField,
    p: &PhysParams,
) -> Result<MonotonicityReport> {
    u.basis().check_same(v.basis())?;
    let regime = MonotoneRegime::select(u.basis().dim(), p)?;
    let eta = match regime {
        MonotoneRegime::Supercritical => p.eta()?,
        MonotoneRegime::Critical => 0.0,
        MonotoneRegime::LocalL4 => {
            let mut ws = Workspace::new(u.basis());
            let radius = u.lp_norm_with(4.0, &mut ws)?.max(v.lp_norm_with(4.0, &mut ws)?);
            27.0 / (32.0 * p.mu.powi(3)) * radius.powi(4)
        }
    };
    let w = u.sub(v);
    let pairing = apply_g(u, p)?.sub(&apply_g(v, p)?).inner(&w);
    Ok(MonotonicityReport {
        regime,
        eta,
        pairing,
        residual: pairing + eta * w.norm_h_sq(),
        scale: (u.norm_h() + v.norm_h()).powi(2),
    })
}

/// Grid-quadrature pieces of the damping monotonicity inequalities for `w = u − v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingMonotonicity {
    /// `⟨C(u) − C(v), u − v⟩`.
    pub pairing: f64,
    /// `2^{1−r}‖u − v‖^{r+1}_{L^{r+1}}`.
    pub power_bound: f64,
    /// `½‖|u|^{(r−1)/2}w‖² + ½‖|v|^{(r−1)/2}w‖²`.
    pub weighted_bound: f64,
}

pub fn damping_monotonicity(
    u: &VelocityField,
    v: &VelocityField,
    r: f64,
) -> Result<DampingMonotonicity> {
    u.basis().check_same(v.basis())?;
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("r must be ≥ 1, got {r}")));
    }
    let basis = u.basis().clone();
    let dim = basis.dim();
    let mut ws = Workspace::new(&basis);
    ws.synth_velocity(u, 0);
    ws.synth_velocity(v, dim + 1);
    let pow = PowerLaw::new(r);
    let (mut pairing, mut power, mut weighted) = (0.0, 0.0, 0.0);
    for j in 0..basis.grid_points() {
        let (mut su, mut sv, mut sw, mut cross) = (0.0, 0.0, 0.0, 0.0);
        for c in 0..dim {
            let a = ws.grids[c][j];
            let b = ws.grids[dim + 1 + c][j];
            su += a * a;
            sv += b * b;
            sw += (a - b) * (a - b);
            cross += a * b;
        }
        let (fu, fv) = (pow.factor(su), pow.factor(sv));
        // (|u|^{r−1}u − |v|^{r−1}v)·(u − v)
        pairing += fu * (su - cross) - fv * (cross - sv);
        power += sw.powf((r + 1.0) / 2.0);
        weighted += 0.5 * (fu + fv) * sw;
    }
    let cell = basis.cell_volume();
    Ok(DampingMonotonicity {
        pairing: pairing * cell,
        power_bound: 2f64.powf(1.0 - r) * power * cell,
        weighted_bound: weighted * cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eta_arithmetic() {
        let p = PhysParams::new(1.0, 1.0, 5.0).unwrap();
        assert!((p.eta().unwrap() - 0.125).abs() < 1e-15);
        assert!((p.eta_hat().unwrap() - 0.25).abs() < 1e-15);
        assert!(PhysParams::new(1.0, 1.0, 2.0).unwrap().eta().is_err());
    }

    #[test]
    fn rotational_form_matches_advective_form() {
        for (dim, n) in [(2, 8), (3, 4)] {
            let basis = SpectralBasis::build(dim, n, 2.5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let u = VelocityField::random(&basis, &mut rng, 1.0);
            let direct = apply_b(&u, &u).unwrap();
            let p = PhysParams::new(1.0, 0.0, 3.0).unwrap();
            let fused = Nonlinear::new(&basis).eval(&u, &p, true).term;
            assert!(direct.sub(&fused).norm_h() < 1e-12 * direct.norm_h().max(1.0));
        }
    }

    #[test]
    fn fused_damping_matches_apply_c() {
        let basis = SpectralBasis::build(2, 8, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = VelocityField::random(&basis, &mut rng, 2.0);
        let p = PhysParams::new(1.0, 0.7, 2.5).unwrap();
        let out = Nonlinear::new(&basis).eval(&u, &p, false);
        let c = apply_c(&u, 2.5).unwrap().scaled(0.7);
        assert!(out.term.sub(&c).norm_h() < 1e-12 * c.norm_h());
        let lr1 = u.norm(crate::field::Norm::Lp(3.5)).unwrap().powf(3.5);
        assert!((out.lr1 - lr1).abs() < 1e-10 * lr1);
    }
}
