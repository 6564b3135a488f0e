use vorwave_core::dispersion::{Depth, WavePhysics};
use vorwave_core::dno::{g_eta_apply, shape_derivative_check, DnoConfig};
use vorwave_core::fields::{RealField, Spectral};

fn surface(n: usize, amp: f64) -> RealField {
    RealField::from_fn(n, |x| amp * (x.cos() + 0.5 * (2.0 * x + 0.3).sin() - 0.2 * (3.0 * x).cos()))
}

fn potential(n: usize) -> RealField {
    RealField::from_fn(n, |x| x.sin() + 0.4 * (2.0 * x).cos() - 0.1 * (5.0 * x + 1.0).sin())
}

fn fluids() -> Vec<WavePhysics> {
    vec![
        WavePhysics::new(1.0, 1.0, 0.5, Depth::Infinite).unwrap(),
        WavePhysics::new(1.0, 1.0, 0.5, Depth::Finite(1.3)).unwrap(),
    ]
}

#[test]
fn shape_derivative_matches_centered_difference() {
    for p in fluids() {
        let eta = surface(64, 1e-2);
        let etahat = RealField::from_fn(64, |x| (x - 0.4).cos() + 0.3 * (3.0 * x).sin());
        let psi = potential(64);
        let cfg = DnoConfig::with_order(4);
        let chk = shape_derivative_check(&p, &eta, &etahat, &psi, &cfg, 1e-5).unwrap();
        assert!(chk.err < 1e-6, "err {}", chk.err);
    }
}

#[test]
fn shape_derivative_improves_with_order() {
    let p = fluids()[0];
    let eta = surface(64, 5e-2);
    let etahat = RealField::cos_mode(64, 2, 1.0);
    let psi = potential(64);
    let errs: Vec<f64> = (1..=5)
        .map(|k| shape_derivative_check(&p, &eta, &etahat, &psi, &DnoConfig::with_order(k), 1e-5).unwrap().err)
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
}

#[test]
fn operator_is_symmetric() {
    for p in fluids() {
        let eta = surface(64, 1e-2);
        let a = potential(64);
        let b = RealField::from_fn(64, |x| (3.0 * x).cos() - 0.7 * (x + 2.0).sin());
        let cfg = DnoConfig::with_order(4);
        let ga = g_eta_apply(&p, &eta, &a, &cfg).unwrap();
        let gb = g_eta_apply(&p, &eta, &b, &cfg).unwrap();
        let d = (ga.inner(&b) - a.inner(&gb)).abs();
        assert!(d < 1e-9, "asymmetry {d}");
    }
}

#[test]
fn translation_and_reversal_covariance() {
    let s = 2.0 * std::f64::consts::PI / 7.0;
    for p in fluids() {
        let eta = surface(64, 1e-2);
        let psi = potential(64);
        let cfg = DnoConfig::with_order(4);
        let g = g_eta_apply(&p, &eta, &psi, &cfg).unwrap();
        let moved = g_eta_apply(&p, &eta.translate(s), &psi.translate(s), &cfg).unwrap();
        assert!(moved.minus(&g.translate(s)).max_abs() < 1e-10);
        let rev = g_eta_apply(&p, &eta.reflect(), &psi.reflect(), &cfg).unwrap();
        assert!(rev.minus(&g.reflect()).max_abs() < 1e-10);
    }
}
