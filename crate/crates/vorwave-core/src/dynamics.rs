//! Water-wave vector field with constant vorticity, its conserved
//! quantities, the Wahlén gauge and a validation time integrator.
//!
//! In the variables `(η, ψ)`:
//!
//! ```text
//! η_t = G(η)ψ + γηη_x
//! ψ_t = −gη − ψ_x²/2 + (η_xψ_x + G(η)ψ)²/(2(1+η_x²)) + κ(η_x/√(1+η_x²))_x
//!       + γηψ_x + γ∂_x^{-1}G(η)ψ
//! ```
//!
//! The Wahlén variable `ζ = ψ − (γ/2)∂_x^{-1}η` makes the Poisson structure
//! canonical. The flat linear flow is diagonal in
//! `z_j = (M_j^{-1}η_j + iM_jζ_j)/√2`, where it reads `ż_j = −iΩ_j z_j`.

use crate::dispersion::WavePhysics;
use crate::dno::{g_eta_apply, DnoConfig, DnoError};
use crate::fields::{RealField, Spectral};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Dno(#[from] DnoError),
    #[error("time step {dt:.3e} violates the explicit stability limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("solution blew up at t = {t:.4}")]
    BlowUp { t: f64 },
    #[error("invalid integrator settings: {0}")]
    BadConfig(String),
    #[error("implicit midpoint iteration did not converge at t = {t:.4}")]
    NoConvergence { t: f64 },
}

/// Surface elevation and velocity potential trace. Both means are zero:
/// `η` by mass conservation, `ψ` as the representative of its class modulo
/// constants.
#[derive(Clone, Debug)]
pub struct State {
    pub eta: RealField,
    pub psi: RealField,
}

/// Elevation and Wahlén variable `ζ`.
#[derive(Clone, Debug)]
pub struct WahlenState {
    pub eta: RealField,
    pub zeta: RealField,
}

impl State {
    /// Drops the means of both components.
    pub fn new(eta: RealField, psi: RealField) -> State {
        State {
            eta: eta.drop_mean(),
            psi: psi.drop_mean(),
        }
    }

    pub fn zeros(n_modes: usize) -> State {
        State {
            eta: RealField::zeros(n_modes),
            psi: RealField::zeros(n_modes),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.eta.n_modes()
    }

    /// Reversibility involution `(η, ψ) ↦ (η^∨, −ψ^∨)`.
    pub fn involution(&self) -> State {
        State {
            eta: self.eta.reflect(),
            psi: -&self.psi.reflect(),
        }
    }

    pub fn translate(&self, shift: f64) -> State {
        State {
            eta: self.eta.translate(shift),
            psi: self.psi.translate(shift),
        }
    }

    /// Normalized L² distance.
    pub fn distance(&self, other: &State) -> f64 {
        let a = self.eta.minus(&other.eta).norm();
        let b = self.psi.minus(&other.psi).norm();
        (a * a + b * b).sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.eta.norm().powi(2) + self.psi.norm().powi(2)).sqrt()
    }
}

impl WahlenState {
    pub fn involution(&self) -> WahlenState {
        WahlenState {
            eta: self.eta.reflect(),
            zeta: -&self.zeta.reflect(),
        }
    }

    pub fn translate(&self, shift: f64) -> WahlenState {
        WahlenState {
            eta: self.eta.translate(shift),
            zeta: self.zeta.translate(shift),
        }
    }
}

/// `ζ = ψ − (γ/2)∂_x^{-1}η`.
pub fn wahlen_forward(p: &WavePhysics, s: &State) -> WahlenState {
    WahlenState {
        eta: s.eta.clone(),
        zeta: s.psi.minus(&s.eta.dx_inverse().scale(0.5 * p.gamma)),
    }
}

/// `ψ = ζ + (γ/2)∂_x^{-1}η`.
pub fn wahlen_backward(p: &WavePhysics, w: &WahlenState) -> State {
    State {
        eta: w.eta.clone(),
        psi: w.zeta.plus(&w.eta.dx_inverse().scale(0.5 * p.gamma)),
    }
}

/// `(η_t, ψ_t)` on any spectral container.
pub fn vector_field_generic<F: Spectral>(
    p: &WavePhysics,
    eta: &F,
    psi: &F,
    cfg: &DnoConfig,
) -> Result<(F, F), DnoError> {
    let g = g_eta_apply(p, eta, psi, cfg)?;
    let eta_x = eta.dx();
    let psi_x = psi.dx();
    let deta = g.plus(&eta.product(&eta_x).scale(p.gamma)).drop_mean();
    let num = eta_x.product(&psi_x).plus(&g);
    let inv = eta_x.map_pointwise(|s| 0.5 / (1.0 + s * s));
    let curvature = eta_x.map_pointwise(|s| s / (1.0 + s * s).sqrt()).dx();
    let dpsi = eta
        .scale(-p.g)
        .minus(&psi_x.product(&psi_x).scale(0.5))
        .plus(&num.product(&num).product(&inv))
        .plus(&curvature.scale(p.kappa))
        .plus(&eta.product(&psi_x).scale(p.gamma))
        .plus(&g.dx_inverse().scale(p.gamma))
        .drop_mean();
    Ok((deta, dpsi))
}

/// `(η_t, ζ_t)` with `ζ_t = ψ_t − (γ/2)∂_x^{-1}η_t`.
pub fn wahlen_field_generic<F: Spectral>(
    p: &WavePhysics,
    eta: &F,
    zeta: &F,
    cfg: &DnoConfig,
) -> Result<(F, F), DnoError> {
    let psi = zeta.plus(&eta.dx_inverse().scale(0.5 * p.gamma));
    let (deta, dpsi) = vector_field_generic(p, eta, &psi, cfg)?;
    let dzeta = dpsi.minus(&deta.dx_inverse().scale(0.5 * p.gamma));
    Ok((deta, dzeta))
}

pub fn vector_field(p: &WavePhysics, s: &State, cfg: &DnoConfig) -> Result<State, DnoError> {
    let (eta, psi) = vector_field_generic(p, &s.eta, &s.psi, cfg)?;
    Ok(State { eta, psi })
}

/// `H = ½∫(ψG(η)ψ + gη²) + κ∫√(1+η_x²) + (γ/2)∫(−ψ_xη² + (γ/3)η³)`.
pub fn hamiltonian(p: &WavePhysics, s: &State, cfg: &DnoConfig) -> Result<f64, DnoError> {
    let g = g_eta_apply(p, &s.eta, &s.psi, cfg)?;
    let eta2 = s.eta.product(&s.eta);
    let kinetic = 0.5 * (s.psi.product(&g).integral() + p.g * eta2.integral());
    let arc = s.eta.dx().map_pointwise(|v| (1.0 + v * v).sqrt()).integral();
    let vort = s.psi.dx().scale(-1.0).plus(&s.eta.scale(p.gamma / 3.0)).product(&eta2).integral();
    Ok(kinetic + p.kappa * arc + 0.5 * p.gamma * vort)
}

/// Horizontal momentum `∫ζη_x dx`.
pub fn momentum(w: &WahlenState) -> f64 {
    w.zeta.product(&w.eta.dx()).integral()
}

/// Flat linear Wahlén system: `η_t = G(0)ζ + (γ/2)∂_x^{-1}G(0)η`,
/// `ζ_t = −Lη + (γ/2)∂_x^{-1}G(0)ζ` with `L = κD² + g + (γ²/4)G(0)D^{-2}`.
pub fn linear_flat_generic<F: Spectral>(p: &WavePhysics, eta: &F, zeta: &F) -> (F, F) {
    let shift = |k: i64| C64::new(0.0, -p.vorticity_shift(k));
    let g0 = |k: i64| C64::new(p.g0(k), 0.0);
    let l = |k: i64| {
        if k == 0 {
            C64::new(0.0, 0.0)
        } else {
            let kf = k as f64;
            C64::new(p.kappa * kf * kf + p.g + 0.25 * p.gamma * p.gamma * p.g0(k) / (kf * kf), 0.0)
        }
    };
    (
        zeta.apply_multiplier(g0).plus(&eta.apply_multiplier(shift)),
        eta.apply_multiplier(l).scale(-1.0).plus(&zeta.apply_multiplier(shift)),
    )
}

pub fn linear_flat_apply(p: &WavePhysics, w: &WahlenState) -> WahlenState {
    let (eta, zeta) = linear_flat_generic(p, &w.eta, &w.zeta);
    WahlenState { eta, zeta }
}

/// Diagonal coordinates of the flat linear flow, `z_j` for `|j| ≤ n_modes`
/// (`z_0 = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct ZModes {
    pub n_modes: usize,
    pub z: Vec<C64>,
}

impl ZModes {
    pub fn zeros(n_modes: usize) -> ZModes {
        ZModes {
            n_modes,
            z: vec![C64::new(0.0, 0.0); 2 * n_modes + 1],
        }
    }

    pub fn get(&self, j: i64) -> C64 {
        let n = self.n_modes as i64;
        if j.abs() > n {
            C64::new(0.0, 0.0)
        } else {
            self.z[(j + n) as usize]
        }
    }

    pub fn set(&mut self, j: i64, v: C64) {
        let n = self.n_modes as i64;
        if j != 0 && j.abs() <= n {
            self.z[(j + n) as usize] = v;
        }
    }

    fn axpy(&self, a: C64, x: &ZModes) -> ZModes {
        ZModes {
            n_modes: self.n_modes,
            z: self.z.iter().zip(&x.z).map(|(u, v)| u + a * v).collect(),
        }
    }

    /// `e^{−iΩ_j t} z_j`.
    pub fn rotate(&self, p: &WavePhysics, t: f64) -> ZModes {
        let n = self.n_modes as i64;
        ZModes {
            n_modes: self.n_modes,
            z: self
                .z
                .iter()
                .enumerate()
                .map(|(i, v)| v * C64::from_polar(1.0, -p.big_omega(i as i64 - n) * t))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.z.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// `z_j = (M_j^{-1}η_j + iM_jζ_j)/√2`.
pub fn to_z(p: &WavePhysics, w: &WahlenState) -> ZModes {
    let n = w.eta.n_modes();
    let mut out = ZModes::zeros(n);
    for j in (-(n as i64)..=n as i64).filter(|&j| j != 0) {
        let m = p.m(j);
        let v = (w.eta.coeff(j) / m + C64::new(0.0, m) * w.zeta.coeff(j)) * FRAC_1_SQRT_2;
        out.set(j, v);
    }
    out
}

/// Inverse of [`to_z`]: `η_j = M_j(z_j + conj z_{−j})/√2`,
/// `ζ_j = −iM_j^{-1}(z_j − conj z_{−j})/√2`. Both means are zero.
pub fn from_z(p: &WavePhysics, z: &ZModes) -> WahlenState {
    let n = z.n_modes;
    let mut eta = RealField::zeros(n);
    let mut zeta = RealField::zeros(n);
    for j in 1..=n as i64 {
        let m = p.m(j);
        let (a, b) = (z.get(j), z.get(-j).conj());
        eta.set_mode(j, (a + b) * (m * FRAC_1_SQRT_2));
        zeta.set_mode(j, (a - b) * C64::new(0.0, -FRAC_1_SQRT_2 / m));
    }
    WahlenState { eta, zeta }
}

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Integrating-factor RK4 when the linear part is stiff, plain RK4 otherwise.
    Auto,
    Rk4,
    /// RK4 on the interaction picture: the linear flow is exact.
    Lawson,
    /// Implicit midpoint on the interaction picture; symplectic.
    ImplicitMidpoint,
}

/// Largest `dt·max|Ω_j|` for which explicit RK4 is stable on the linear part.
pub const RK4_STABILITY: f64 = 2.8;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub dno: DnoConfig,
    /// Record diagnostics every this many steps.
    pub sample_every: usize,
    /// Also integrate backward to measure the reversibility defect.
    pub check_reversibility: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt,
            t_end,
            scheme: Scheme::Auto,
            dno: DnoConfig::default(),
            sample_every: 10,
            check_reversibility: false,
        }
    }
}

/// Diagnostics at one time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sample {
    pub t: f64,
    pub hamiltonian: f64,
    pub momentum: f64,
    pub mean_eta: f64,
}

/// Conservation and symmetry monitors of one run.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    pub t_end: f64,
    pub h_initial: f64,
    /// `max_t |H(t) − H(0)|/|H(0)|`.
    pub h_rel_drift: f64,
    /// Same drift measured against `H − 2πκ`, the energy above the flat state.
    pub excess_energy_rel_drift: f64,
    pub momentum_drift: f64,
    pub mean_eta_drift: f64,
    /// `‖u(−t_end) − S u(t_end)‖`, when requested for reversible data.
    pub reversibility_defect: Option<f64>,
}

/// Sampled trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_state: State,
    pub final_z: ZModes,
}

struct Stepper<'a> {
    p: &'a WavePhysics,
    cfg: &'a DnoConfig,
}

impl Stepper<'_> {
    /// Nonlinear part of the field in diagonal coordinates.
    fn nonlinear(&self, z: &ZModes) -> Result<ZModes, DnoError> {
        let w = from_z(self.p, z);
        let (deta, dzeta) = wahlen_field_generic(self.p, &w.eta, &w.zeta, self.cfg)?;
        let full = to_z(
            self.p,
            &WahlenState {
                eta: deta,
                zeta: dzeta,
            },
        );
        let n = z.n_modes as i64;
        let mut out = full;
        for (i, v) in out.z.iter_mut().enumerate() {
            let j = i as i64 - n;
            *v += C64::new(0.0, self.p.big_omega(j)) * z.z[i];
        }
        Ok(out)
    }

    fn full(&self, z: &ZModes) -> Result<ZModes, DnoError> {
        let mut out = self.nonlinear(z)?;
        let n = z.n_modes as i64;
        for (i, v) in out.z.iter_mut().enumerate() {
            *v -= C64::new(0.0, self.p.big_omega(i as i64 - n)) * z.z[i];
        }
        Ok(out)
    }

    fn rk4(&self, z: &ZModes, h: f64) -> Result<ZModes, DnoError> {
        let one = C64::new(1.0, 0.0);
        let k1 = self.full(z)?;
        let k2 = self.full(&z.axpy(one * (0.5 * h), &k1))?;
        let k3 = self.full(&z.axpy(one * (0.5 * h), &k2))?;
        let k4 = self.full(&z.axpy(one * h, &k3))?;
        let s = k1.axpy(one * 2.0, &k2).axpy(one * 2.0, &k3).axpy(one, &k4);
        Ok(z.axpy(one * (h / 6.0), &s))
    }

    fn lawson(&self, z: &ZModes, h: f64) -> Result<ZModes, DnoError> {
        let one = C64::new(1.0, 0.0);
        let p = self.p;
        let k1 = self.nonlinear(z)?;
        let k2 = self.nonlinear(&z.axpy(one * (0.5 * h), &k1).rotate(p, 0.5 * h))?;
        let zh = z.rotate(p, 0.5 * h);
        let k3 = self.nonlinear(&zh.axpy(one * (0.5 * h), &k2))?;
        let k4 = self.nonlinear(&z.rotate(p, h).axpy(one * h, &k3.rotate(p, 0.5 * h)))?;
        let mid = k2.axpy(one, &k3).rotate(p, 0.5 * h);
        let s = k1.rotate(p, h).axpy(one * 2.0, &mid).axpy(one, &k4);
        Ok(z.rotate(p, h).axpy(one * (h / 6.0), &s))
    }

    fn midpoint(&self, z: &ZModes, h: f64, t: f64) -> Result<ZModes, DynamicsError> {
        // Interaction picture v = e^{iΩs}z over the step.
        let one = C64::new(1.0, 0.0);
        let p = self.p;
        let mut v1 = self.lawson(z, h)?.rotate(p, -h);
        let scale = z.max_abs().max(f64::MIN_POSITIVE);
        for _ in 0..60 {
            let mid = z.axpy(one, &v1).rotate(p, 0.5 * h);
            let mid = ZModes {
                n_modes: mid.n_modes,
                z: mid.z.iter().map(|v| v * 0.5).collect(),
            };
            let f = self.nonlinear(&mid)?.rotate(p, -0.5 * h);
            let next = z.axpy(one * h, &f);
            let change = next.axpy(-one, &v1).max_abs();
            v1 = next;
            if change <= 1e-15 * scale {
                return Ok(v1.rotate(p, h));
            }
        }
        Err(DynamicsError::NoConvergence { t })
    }
}

fn max_frequency(p: &WavePhysics, n_modes: usize) -> f64 {
    let n = n_modes as i64;
    (1..=n)
        .map(|j| p.big_omega(j).abs().max(p.big_omega(-j).abs()))
        .fold(0.0, f64::max)
}

/// Advances `z` by `steps` steps of size `h` (negative for backward runs).
fn advance(
    p: &WavePhysics,
    z0: &ZModes,
    h: f64,
    steps: usize,
    scheme: Scheme,
    dno: &DnoConfig,
    mut observe: impl FnMut(usize, &ZModes) -> Result<(), DynamicsError>,
) -> Result<ZModes, DynamicsError> {
    let st = Stepper { p, cfg: dno };
    let mut z = z0.clone();
    let bound = 1e6 * z0.max_abs().max(1e-300);
    for k in 0..steps {
        let t = k as f64 * h;
        z = match scheme {
            Scheme::Rk4 => st.rk4(&z, h)?,
            Scheme::Lawson | Scheme::Auto => st.lawson(&z, h)?,
            Scheme::ImplicitMidpoint => st.midpoint(&z, h, t)?,
        };
        if !z.is_finite() || z.max_abs() > bound {
            return Err(DynamicsError::BlowUp { t: t + h });
        }
        observe(k + 1, &z)?;
    }
    Ok(z)
}

/// Resolves `Auto` and validates the step against the explicit stability limit.
pub fn resolve_scheme(p: &WavePhysics, n_modes: usize, cfg: &IntegratorConfig) -> Result<Scheme, DynamicsError> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite() && cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(DynamicsError::BadConfig(format!(
            "dt = {} and t_end = {} must be positive and finite",
            cfg.dt, cfg.t_end
        )));
    }
    let stiffness = cfg.dt * max_frequency(p, n_modes);
    match cfg.scheme {
        Scheme::Auto => Ok(if stiffness > 0.5 { Scheme::Lawson } else { Scheme::Rk4 }),
        Scheme::Rk4 if stiffness > RK4_STABILITY => Err(DynamicsError::Cfl {
            dt: cfg.dt,
            limit: RK4_STABILITY / max_frequency(p, n_modes),
        }),
        s => Ok(s),
    }
}

/// Evolves `s0` to `t_end` and monitors the conserved quantities.
pub fn integrate(
    p: &WavePhysics,
    s0: &State,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, InvariantReport), DynamicsError> {
    let n = s0.n_modes();
    let scheme = resolve_scheme(p, n, cfg)?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { cfg.t_end / steps as f64 };
    let s0 = State::new(s0.eta.clone(), s0.psi.clone());
    let z0 = to_z(p, &wahlen_forward(p, &s0));
    let dno = cfg.dno;
    let sample = |t: f64, z: &ZModes| -> Result<Sample, DynamicsError> {
        let w = from_z(p, z);
        let s = wahlen_backward(p, &w);
        Ok(Sample {
            t,
            hamiltonian: hamiltonian(p, &s, &dno)?,
            momentum: momentum(&w),
            mean_eta: s.eta.mean(),
        })
    };
    let first = sample(0.0, &z0)?;
    let mut samples = vec![first];
    let every = cfg.sample_every.max(1);
    let zt = advance(p, &z0, h, steps, scheme, &dno, |k, z| {
        if k % every == 0 || k == steps {
            samples.push(sample(k as f64 * h, z)?);
        }
        Ok(())
    })?;
    let flat = 2.0 * PI * p.kappa;
    let h0 = first.hamiltonian;
    let mut report = InvariantReport {
        scheme,
        dt: h,
        steps,
        t_end: cfg.t_end,
        h_initial: h0,
        h_rel_drift: 0.0,
        excess_energy_rel_drift: 0.0,
        momentum_drift: 0.0,
        mean_eta_drift: 0.0,
        reversibility_defect: None,
    };
    for s in &samples {
        report.h_rel_drift = report.h_rel_drift.max((s.hamiltonian - h0).abs() / h0.abs());
        let excess = (h0 - flat).abs().max(f64::MIN_POSITIVE);
        report.excess_energy_rel_drift = report.excess_energy_rel_drift.max((s.hamiltonian - h0).abs() / excess);
        report.momentum_drift = report.momentum_drift.max((s.momentum - first.momentum).abs());
        report.mean_eta_drift = report.mean_eta_drift.max((s.mean_eta - first.mean_eta).abs());
    }
    let final_state = wahlen_backward(p, &from_z(p, &zt));
    if cfg.check_reversibility {
        let zb = advance(p, &z0, -h, steps, scheme, &dno, |_, _| Ok(()))?;
        let back = wahlen_backward(p, &from_z(p, &zb));
        report.reversibility_defect = Some(back.distance(&final_state.involution()));
    }
    Ok((
        Trajectory {
            samples,
            final_state,
            final_z: zt,
        },
        report,
    ))
}

/// States `(t, u(t))` every `sample_every` steps, including both ends.
pub fn flow_samples(
    p: &WavePhysics,
    s0: &State,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, State)>, DynamicsError> {
    let scheme = resolve_scheme(p, s0.n_modes(), cfg)?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { cfg.t_end / steps as f64 };
    let s0 = State::new(s0.eta.clone(), s0.psi.clone());
    let z0 = to_z(p, &wahlen_forward(p, &s0));
    let every = cfg.sample_every.max(1);
    let mut out = vec![(0.0, s0)];
    advance(p, &z0, h, steps, scheme, &cfg.dno, |k, z| {
        if k % every == 0 || k == steps {
            out.push((k as f64 * h, wahlen_backward(p, &from_z(p, z))));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Whether `η` is even and `ψ` odd in `x`, to relative tolerance `tol`.
pub fn is_reversible(s: &State, tol: f64) -> bool {
    let scale = s.norm().max(f64::MIN_POSITIVE);
    s.distance(&s.involution()) <= tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::Depth;

    fn fluid(gamma: f64) -> WavePhysics {
        WavePhysics::new(1.0, 1.0, gamma, Depth::Finite(2.0)).unwrap()
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let p = fluid(0.5);
        let d = vector_field(&p, &State::zeros(16), &DnoConfig::default()).unwrap();
        assert_eq!(d.eta.max_coeff(), 0.0);
        assert_eq!(d.psi.max_coeff(), 0.0);
        let h = hamiltonian(&p, &State::zeros(16), &DnoConfig::default()).unwrap();
        assert!((h - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn irrotational_gauge_is_identity() {
        let p = fluid(0.0);
        let s = State::new(RealField::cos_mode(8, 1, 0.1), RealField::sin_mode(8, 2, 0.3));
        let w = wahlen_forward(&p, &s);
        assert_eq!(w.zeta.minus(&s.psi).max_coeff(), 0.0);
    }

    #[test]
    fn gauge_round_trip() {
        let p = fluid(0.7);
        let s = State::new(
            RealField::from_fn(8, |x| 0.1 * x.cos() + 0.02 * (3.0 * x).sin()),
            RealField::from_fn(8, |x| 0.3 * (2.0 * x).sin()),
        );
        let back = wahlen_backward(&p, &wahlen_forward(&p, &s));
        assert!(back.distance(&s) < 1e-16);
    }

    #[test]
    fn diagonal_coordinates_round_trip_and_diagonalize() {
        let p = fluid(0.6);
        let w = WahlenState {
            eta: RealField::from_fn(12, |x| 0.1 * x.cos() - 0.03 * (2.0 * x + 1.0).sin()),
            zeta: RealField::from_fn(12, |x| 0.2 * (x + 0.5).sin() + 0.01 * (5.0 * x).cos()).drop_mean(),
        };
        let z = to_z(&p, &w);
        let back = from_z(&p, &z);
        assert!(back.eta.minus(&w.eta).max_coeff() < 1e-16);
        assert!(back.zeta.minus(&w.zeta).max_coeff() < 1e-16);
        let lw = to_z(&p, &linear_flat_apply(&p, &w));
        for j in -12i64..=12 {
            let expect = C64::new(0.0, -p.big_omega(j)) * z.get(j);
            assert!((lw.get(j) - expect).norm() < 1e-14, "j = {j}");
        }
    }

    #[test]
    fn field_mean_of_eta_is_zero() {
        let p = fluid(0.5);
        let s = State::new(
            RealField::from_fn(16, |x| 0.05 * (x.cos() + (2.0 * x).sin())),
            RealField::from_fn(16, |x| 0.1 * (x + 0.2).sin()),
        );
        let d = vector_field(&p, &s, &DnoConfig::default()).unwrap();
        assert_eq!(d.eta.mean(), 0.0);
    }

    #[test]
    fn rk4_cfl_is_enforced() {
        let p = fluid(0.0);
        let mut cfg = IntegratorConfig::new(0.1, 1.0);
        cfg.scheme = Scheme::Rk4;
        let err = resolve_scheme(&p, 64, &cfg).unwrap_err();
        assert!(matches!(err, DynamicsError::Cfl { .. }));
        cfg.scheme = Scheme::Auto;
        assert_eq!(resolve_scheme(&p, 64, &cfg).unwrap(), Scheme::Lawson);
    }
}
