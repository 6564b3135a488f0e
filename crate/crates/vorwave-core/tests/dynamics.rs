use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::time::Instant;
use vorwave_core::dispersion::{Depth, WavePhysics};
use vorwave_core::dynamics::*;

fn fluid() -> WavePhysics {
    WavePhysics::new(1.0, 1.0, 0.5, Depth::Finite(2.0)).unwrap()
}

/// Linear right-moving wave in modes 1 and 2, real diagonal coefficients (reversible).
fn seed(p: &WavePhysics, n: usize, amp: f64) -> State {
    let mut z = ZModes::zeros(n);
    z.set(1, C64::new(amp, 0.0));
    z.set(-2, C64::new(0.5 * amp, 0.0));
    wahlen_backward(p, &from_z(p, &z))
}

#[test]
fn conservation_over_ten_periods() {
    let p = fluid();
    let s0 = seed(&p, 64, 1e-3);
    assert!(is_reversible(&s0, 1e-14));
    let t_end = 10.0 * 2.0 * PI / p.big_omega(1);
    let mut cfg = IntegratorConfig::new(0.01, t_end);
    cfg.check_reversibility = true;
    let start = Instant::now();
    let (_, rep) = integrate(&p, &s0, &cfg).unwrap();
    println!("{rep:?} in {:?}", start.elapsed());
    assert!(rep.h_rel_drift < 1e-8);
    assert!(rep.momentum_drift < 1e-10);
    assert_eq!(rep.mean_eta_drift, 0.0);
    assert!(rep.reversibility_defect.unwrap() < 1e-8);
}
