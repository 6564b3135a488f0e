//! Steady traveling waves computed directly in the frame moving with the wave.
//!
//! For `η(t, x) = E(x − ct)`, `ψ(t, x) = Ψ(x − ct)` the evolution equations
//! become `−cE' = X_η(E, Ψ)` and `−cΨ' = X_ψ(E, Ψ)` up to the Bernoulli
//! constant. Reversible waves have `E` even and `Ψ` odd, so the unknowns are
//! the cosine coefficients of `E`, the sine coefficients of `Ψ` and `c`, with
//! the amplitude fixed by the diagonal coordinate `z_1`.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use vorwave_core::dispersion::WavePhysics;
use vorwave_core::dno::DnoConfig;
use vorwave_core::dynamics::{from_z, to_z, vector_field, wahlen_backward, wahlen_forward, State, ZModes};

pub struct SteadyWave {
    pub state: State,
    pub speed: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn unpack(n: usize, x: &[f64]) -> (State, f64) {
    let mut s = State::zeros(n);
    for k in 1..=n {
        s.eta.set_mode(k as i64, C64::new(x[k - 1], 0.0));
        s.psi.set_mode(k as i64, C64::new(0.0, x[n + k - 1]));
    }
    (s, x[2 * n])
}

fn residual(p: &WavePhysics, dno: &DnoConfig, target: f64, n: usize, x: &[f64]) -> Vec<f64> {
    let (s, c) = unpack(n, x);
    let f = vector_field(p, &s, dno).expect("vector field");
    let mut out = Vec::with_capacity(2 * n + 1);
    for k in 1..=n as i64 {
        // −cE' has coefficient −c·ik·E_k.
        let lhs = C64::new(0.0, -c * k as f64) * s.eta.coeff(k);
        out.push((lhs - f.eta.coeff(k)).im);
    }
    for k in 1..=n as i64 {
        let lhs = C64::new(0.0, -c * k as f64) * s.psi.coeff(k);
        out.push((lhs - f.psi.coeff(k)).re);
    }
    out.push(to_z(p, &wahlen_forward(p, &s)).get(1).re - target);
    out
}

/// Right-moving wave of wavenumber 1 with `z_1 = amplitude` at `t = 0`.
pub fn steady_wave(p: &WavePhysics, amplitude: f64, n: usize, dno: &DnoConfig) -> SteadyWave {
    let mut z = ZModes::zeros(n);
    z.set(1, C64::new(amplitude, 0.0));
    let lin = wahlen_backward(p, &from_z(p, &z));
    let mut x = vec![0.0; 2 * n + 1];
    for k in 1..=n {
        x[k - 1] = lin.eta.coeff(k as i64).re;
        x[n + k - 1] = lin.psi.coeff(k as i64).im;
    }
    x[2 * n] = p.big_omega(1);
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let mut r = residual(p, dno, amplitude, n, &x);
    let mut iterations = 0;
    while sup(&r) > 1e-15 && iterations < 12 {
        let h = 1e-7 * amplitude.max(1e-3);
        let dim = x.len();
        let mut jac = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (residual(p, dno, amplitude, n, &xp), residual(p, dno, amplitude, n, &xm));
            for r in 0..dim {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let dx = jac
            .lu()
            .solve(&DVector::from_iterator(dim, r.iter().map(|v| -v)))
            .expect("oracle Jacobian is regular");
        let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + d).collect();
        let rt = residual(p, dno, amplitude, n, &trial);
        if sup(&rt) >= sup(&r) {
            break;
        }
        x = trial;
        r = rt;
        iterations += 1;
    }
    let (state, speed) = unpack(n, &x);
    SteadyWave {
        state,
        speed,
        residual: sup(&r),
        iterations,
    }
}
