use num_complex::Complex64 as C64;
use proptest::prelude::*;
use vorwave_core::fields::*;

fn field(n: usize, coeffs: &[(f64, f64)]) -> RealField {
    let mut f = RealField::zeros(n);
    f.set_mode(0, C64::new(coeffs[0].0, 0.0));
    for (k, &(re, im)) in coeffs.iter().enumerate().skip(1) {
        f.set_mode(k as i64, C64::new(re, im));
    }
    f
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n + 1)
}

proptest! {
    #[test]
    fn product_is_truncated_convolution(n in 1usize..=8, a in coeffs(8), b in coeffs(8)) {
        let f = field(n, &a[..=n]);
        let g = field(n, &b[..=n]);
        let fg = f.product(&g);
        let n = n as i64;
        for k in -n..=n {
            let mut want = C64::new(0.0, 0.0);
            for p in -n..=n {
                want += f.coeff(p) * g.coeff(k - p);
            }
            prop_assert!((fg.coeff(k) - want).norm() < 1e-13, "k = {k}");
        }
    }

    #[test]
    fn real_fields_stay_conjugate_symmetric(n in 1usize..=8, a in coeffs(8), b in coeffs(8)) {
        let f = field(n, &a[..=n]);
        let g = field(n, &b[..=n]);
        let h = f.product(&g).map_pointwise(|v| v.sin()).dx().hilbert();
        prop_assert!(h.conj_symmetry_defect() < 1e-14);
        for k in 1..=n as i64 {
            prop_assert!((h.coeff(k) - h.coeff(-k).conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn antiderivative_inverts_derivative_off_mean(n in 1usize..=8, a in coeffs(8)) {
        let f = field(n, &a[..=n]);
        let back = f.dx().dx_inverse();
        prop_assert!(back.minus(&f.drop_mean()).max_coeff() < 1e-14);
    }

    #[test]
    fn translation_commutes_with_multipliers(n in 1usize..=8, a in coeffs(8), s in -3.0f64..3.0) {
        let f = field(n, &a[..=n]);
        let lhs = f.translate(s).hilbert();
        let rhs = f.hilbert().translate(s);
        prop_assert!(lhs.minus(&rhs).max_coeff() < 1e-14);
    }

    #[test]
    fn profile_embedding_round_trips(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, d in -1.0f64..1.0) {
        let jvec = [1, -2];
        let p = TravelingProfile::from_fn(&jvec, 2, 6, |psi| {
            c1 * psi[0].cos() + c2 * (psi[0] + psi[1]).sin() + d * (2.0 * psi[1]).cos()
        });
        let u = p.embed();
        prop_assert!(u.traveling_defect(&jvec) < 1e-14);
        let back = TravelingProfile::extract(&u, &jvec, 1e-12).unwrap();
        prop_assert!(back.max_diff(&p) < 1e-14);
        // u(φ, x) = U(φ − ȷ⃗x).
        let (phi, x) = ([0.3, -1.1], 0.7);
        let psi = [phi[0] - x, phi[1] + 2.0 * x];
        prop_assert!((u.eval(&phi, x) - p.eval(&psi)).abs() < 1e-13);
    }
}
