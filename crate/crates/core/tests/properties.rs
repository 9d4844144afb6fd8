use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scbf::operators::{apply_a, apply_b, monotonicity_report, trilinear};
use scbf::transform::{to_physical, to_spectral};
use scbf::{NoiseSpec, PhysParams, SpectralBasis, VelocityField};

fn basis2() -> Arc<SpectralBasis> {
    SpectralBasis::build(2, 8, 4.5).unwrap()
}

fn basis3() -> Arc<SpectralBasis> {
    SpectralBasis::build(3, 4, 2.5).unwrap()
}

fn field(basis: &Arc<SpectralBasis>, seed: u64, scale: f64) -> VelocityField {
    VelocityField::random(basis, &mut ChaCha8Rng::seed_from_u64(seed), scale)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn advection_conserves_energy(s in any::<u64>(), a in 1e-3f64..1e2, b in 1e-3f64..1e2, three in any::<bool>()) {
        let basis = if three { basis3() } else { basis2() };
        let u = field(&basis, s, a);
        let v = field(&basis, s.wrapping_add(1), b);
        let tol = 1e-10 * u.norm_v() * v.norm_v() * v.norm_h();
        prop_assert!(trilinear(&u, &v, &v).unwrap().abs() <= tol);
    }

    #[test]
    fn advection_is_antisymmetric(s in any::<u64>()) {
        let basis = basis2();
        let (u, v, w) = (field(&basis, s, 1.0), field(&basis, s ^ 1, 2.0), field(&basis, s ^ 2, 0.5));
        let tol = 1e-10 * u.norm_v() * v.norm_v() * w.norm_v();
        prop_assert!(close(trilinear(&u, &v, &w).unwrap(), -trilinear(&u, &w, &v).unwrap(), tol));
    }

    #[test]
    fn advection_output_is_solenoidal_and_real(s in any::<u64>()) {
        let basis = basis3();
        let b = apply_b(&field(&basis, s, 1.0), &field(&basis, s ^ 7, 1.0)).unwrap();
        prop_assert!(b.divergence_defect() <= 1e-12 * b.norm_v().max(1.0));
        prop_assert!(b.reality_defect() <= 1e-12 * b.norm_h().max(1.0));
    }

    #[test]
    fn stokes_pairing_and_poincare(s in any::<u64>(), a in 1e-6f64..1e6) {
        let basis = basis2();
        let u = field(&basis, s, a);
        let au = apply_a(&u).inner(&u);
        prop_assert!(close(au, u.norm_v_sq(), 1e-12 * u.norm_v_sq()));
        prop_assert!(u.norm_v_sq() >= basis.lambda_1() * u.norm_h_sq() * (1.0 - 1e-12));
    }

    #[test]
    fn transform_round_trip(s in any::<u64>(), a in 1e-3f64..1e3) {
        let basis = basis2();
        let u = field(&basis, s, a);
        let back = to_spectral(&to_physical(&u));
        prop_assert!(back.sub(&u).norm_h() <= 1e-12 * a);
    }

    #[test]
    fn supercritical_operator_is_monotone_after_shift(s in any::<u64>(), a in 1e-2f64..10.0, b in 1e-2f64..10.0) {
        let basis = basis2();
        let p = PhysParams::new(1.0, 1.0, 5.0).unwrap();
        let rep = monotonicity_report(&field(&basis, s, a), &field(&basis, s ^ 3, b), &p).unwrap();
        prop_assert!(rep.residual >= -1e-9 * rep.scale * (1.0 + rep.eta));
    }

    #[test]
    fn noise_is_linear_and_invertible_on_forced_block(s in any::<u64>(), q1 in 0.0f64..2.0, gain_at in 0.0f64..5.0) {
        let basis = basis2();
        let noise = NoiseSpec::multiplicative_trace(0.01, 1.0, q1).build(&basis).unwrap().unwrap();
        let state = field(&basis, s ^ 11, gain_at);
        let w1 = field(&basis, s, 1.0);
        let w2 = field(&basis, s ^ 5, 1.0);
        let lhs = noise.apply(&w1.add(&w2), Some(&state)).unwrap();
        let rhs = noise.apply(&w1, Some(&state)).unwrap().add(&noise.apply(&w2, Some(&state)).unwrap());
        prop_assert!(lhs.sub(&rhs).norm_h() <= 1e-14 * lhs.norm_h().max(1e-300));
        let (low, _) = w1.split_low_high();
        let round = noise
            .inverse_on_low(&noise.apply(&low, Some(&state)).unwrap(), Some(&state))
            .unwrap();
        prop_assert!(round.sub(&low).norm_h() <= 1e-12 * low.norm_h());
        // ‖σ(u)‖²_HS = g(u)²·Tr
        let g = 1.0 + q1 * state.norm_h().tanh();
        prop_assert!(close(noise.trace_at(Some(&state)).unwrap(), g * g * 0.01, 1e-15));
    }
}
