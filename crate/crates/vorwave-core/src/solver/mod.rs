//! Reversible traveling quasi-periodic tori at finite truncation.
//!
//! A torus embedding `φ ↦ (θ(φ), I(φ), w(φ))` with `θ = φ + Θ(φ)` is mapped to a
//! surface by the action-angle map: tangential diagonal coordinates
//! `z_{j_a} = ε√((ξ_a + I_a)/2π) e^{−iθ_a}` plus normal coordinates `ε w`.
//! All unknowns are stored as traveling profiles, and only the coefficients that
//! reversibility leaves free are unknowns:
//!
//! * `Θ_a` odd: imaginary coefficients on `ℓ > 0` with `ȷ⃗·ℓ = 0`;
//! * `I_a` even: real coefficients on the same modes, zero mean;
//! * `w`: real `z_{ℓ,k}` for every angle mode whose wavenumber `k = −ȷ⃗·ℓ` is a
//!   normal site inside the spatial cutoff;
//! * the frequency `ω` (with `α = Ω⃗`) or the counterterm `α` (with `ω` fixed).
//!
//! The residual `ω·∂_φ i − X_α(i)` is then anti-reversible and its free
//! coefficients form a square system, solved by damped Newton with a
//! finite-difference Jacobian and dense LU.

mod snapshot;

pub use snapshot::{embedding_from_header, read_snapshot, snapshot_consistency, write_snapshot, SnapshotHeader};

use crate::dispersion::WavePhysics;
use crate::dno::{DnoConfig, DnoError};
use crate::dynamics::{
    flow_samples, linear_flat_generic, wahlen_field_generic, DynamicsError, IntegratorConfig, Scheme, State,
    WahlenState,
};
use crate::fields::{FieldError, Spectral, TravelingProfile};
use crate::nonres::SiteSelection;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Dno(#[from] DnoError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid solver input: {0}")]
    Config(String),
    #[error("action out of range at site {site}: ξ + I = {value:.3e} must stay positive")]
    Domain { site: i64, value: f64 },
    #[error("small divisor {divisor:.3e} below {threshold:.1e} at ℓ = {ell:?}, k = {k}")]
    SmallDivisor {
        divisor: f64,
        threshold: f64,
        ell: Vec<i64>,
        k: i64,
    },
    #[error("singular Jacobian at Newton iteration {0}")]
    Singular(usize),
    #[error("Newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which frequency vector is unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// `α = Ω⃗(κ)` fixed, `ω` unknown: a true solution of the water-wave system.
    Frequency,
    /// `ω` fixed, `α` unknown: a solution of the modified Hamiltonian `H_α`.
    Counterterm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub n_phi: usize,
    pub n_modes: usize,
    /// Stop when the sup norm of the reduced residual is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Central-difference step of the Jacobian columns.
    pub fd_step: f64,
    /// Step halvings tried before a Newton step is declared failed.
    pub max_halvings: usize,
    pub formulation: Formulation,
    /// Refuse to solve when a linear divisor `|ω·ℓ + Ω_k|` falls below this.
    pub min_divisor: f64,
    pub dno: DnoConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_phi: 4,
            n_modes: 24,
            tol: 1e-11,
            max_iter: 15,
            fd_step: 1e-6,
            max_halvings: 10,
            formulation: Formulation::Frequency,
            min_divisor: 1e-8,
            dno: DnoConfig::default(),
        }
    }
}

/// Index bookkeeping of the reduced unknowns.
#[derive(Clone, Debug)]
pub struct Layout {
    jvec: Vec<i64>,
    template: TravelingProfile,
    /// Flat index of `ℓ = 0`.
    zero: usize,
    /// `ℓ > 0` (first nonzero entry positive) with `ȷ⃗·ℓ = 0`.
    reps: Vec<usize>,
    /// Modes whose wavenumber is a normal site within the cutoff.
    normal: Vec<usize>,
    /// Per site: `(i, i')` with wavenumber of `i` equal to `j_a` and `ℓ_{i'} = ℓ_i + e_a`.
    tangential: Vec<Vec<(usize, usize)>>,
}

fn lex_positive(ell: &[i64]) -> bool {
    ell.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

impl Layout {
    pub fn new(sites: &SiteSelection, n_phi: usize, n_modes: usize) -> Layout {
        let jvec = sites.jvec();
        let nu = jvec.len();
        let template = TravelingProfile::zeros(&jvec, n_phi, n_modes);
        let zero = template.index(&vec![0; nu]).expect("zero mode");
        let mut reps = Vec::new();
        let mut normal = Vec::new();
        let mut tangential = vec![Vec::new(); nu];
        for i in 0..template.len() {
            let k = template.wavenumber(i);
            let ell = template.mode(i).to_vec();
            if k == 0 && lex_positive(&ell) {
                reps.push(i);
            }
            if !template.admissible(i) {
                continue;
            }
            if sites.is_normal(k) {
                normal.push(i);
            }
            for (a, &ja) in jvec.iter().enumerate() {
                if k == ja {
                    let mut up = ell.clone();
                    up[a] += 1;
                    if let Some(t) = template.index(&up) {
                        tangential[a].push((i, t));
                    }
                }
            }
        }
        Layout {
            jvec,
            template,
            zero,
            reps,
            normal,
            tangential,
        }
    }

    pub fn nu(&self) -> usize {
        self.jvec.len()
    }

    pub fn unknowns(&self) -> usize {
        2 * self.nu() * self.reps.len() + self.normal.len() + self.nu()
    }

    pub fn normal_modes(&self) -> &[usize] {
        &self.normal
    }

    pub fn template(&self) -> &TravelingProfile {
        &self.template
    }

    fn zeros(&self) -> TravelingProfile {
        self.template.clone()
    }
}

/// Approximate invariant torus in action-angle-normal coordinates.
#[derive(Clone, Debug)]
pub struct TorusEmbedding {
    pub physics: WavePhysics,
    pub sites: SiteSelection,
    pub xi: Vec<f64>,
    pub epsilon: f64,
    /// `Θ_a`, one profile per site.
    pub theta: Vec<TravelingProfile>,
    /// `I_a`, one profile per site.
    pub action: Vec<TravelingProfile>,
    /// Real normal coordinates `z_{ℓ,−ȷ⃗·ℓ}` by profile index; zero off the normal support.
    pub w: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl TorusEmbedding {
    pub fn nu(&self) -> usize {
        self.sites.nu()
    }
    pub fn n_phi(&self) -> usize {
        self.theta[0].n_phi()
    }
    pub fn n_modes(&self) -> usize {
        self.theta[0].n_modes()
    }
    pub fn layout(&self) -> Layout {
        Layout::new(&self.sites, self.n_phi(), self.n_modes())
    }

    /// Normal component `w` as a Wahlén pair `(η_w, ζ_w)` at unit amplitude.
    pub fn normal_fields(&self) -> (TravelingProfile, TravelingProfile) {
        let t = &self.theta[0];
        let mut eta = t.scale(0.0);
        let mut zeta = t.scale(0.0);
        for (i, &v) in self.w.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let k = t.wavenumber(i);
            let m = self.physics.m(k);
            let mi = t.mirror(i);
            eta.data_mut()[i] += C64::new(m * FRAC_1_SQRT_2 * v, 0.0);
            eta.data_mut()[mi] += C64::new(m * FRAC_1_SQRT_2 * v, 0.0);
            zeta.data_mut()[i] += C64::new(0.0, -FRAC_1_SQRT_2 * v / m);
            zeta.data_mut()[mi] += C64::new(0.0, FRAC_1_SQRT_2 * v / m);
        }
        (eta, zeta)
    }

    /// `(η, ζ)/ε` on the profile grid.
    fn unit_profiles(&self) -> Result<(TravelingProfile, TravelingProfile), SolverError> {
        let (weta, wzeta) = self.normal_fields();
        let pts = weta.grid_points();
        let nu = self.nu();
        let mut eta = weta.to_grid();
        let mut zeta = wzeta.to_grid();
        let jv = self.sites.jvec();
        for a in 0..nu {
            let th = self.theta[a].to_grid();
            let ac = self.action[a].to_grid();
            let m = self.physics.m(jv[a]);
            for k in 0..eta.len() {
                let arg = ac[k] + self.xi[a];
                if !(arg > 0.0) {
                    return Err(SolverError::Domain { site: jv[a], value: arg });
                }
                let r = (arg / (2.0 * PI)).sqrt() * std::f64::consts::SQRT_2;
                let ph = pts[k * nu + a] + th[k];
                eta[k] += r * m * ph.cos();
                zeta[k] -= r / m * ph.sin();
            }
        }
        Ok((weta.from_grid_like(&eta), wzeta.from_grid_like(&zeta)))
    }

    /// Physical Wahlén profiles `(η, ζ)`.
    pub fn wahlen_profiles(&self) -> Result<(TravelingProfile, TravelingProfile), SolverError> {
        let (eta, zeta) = self.unit_profiles()?;
        Ok((eta.scale(self.epsilon), zeta.scale(self.epsilon)))
    }

    /// Physical `(η, ψ)` profiles with `ψ = ζ + (γ/2)∂_x^{−1}η`.
    pub fn surface_profiles(&self) -> Result<(TravelingProfile, TravelingProfile), SolverError> {
        let (eta, zeta) = self.wahlen_profiles()?;
        let psi = zeta.plus(&eta.dx_inverse().scale(0.5 * self.physics.gamma));
        Ok((eta, psi))
    }

    /// Largest `|α_a − ω_a|`.
    pub fn frequency_shift(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.omega)
            .map(|(a, w)| (a - w).abs())
            .fold(0.0, f64::max)
    }

    /// Reduced coordinates in the layout order; the last `ν` entries are `ω`
    /// or `α` depending on the formulation.
    pub fn pack(&self, layout: &Layout, formulation: Formulation) -> Vec<f64> {
        let mut x = Vec::with_capacity(layout.unknowns());
        for th in &self.theta {
            x.extend(layout.reps.iter().map(|&i| th.data()[i].im));
        }
        for ac in &self.action {
            x.extend(layout.reps.iter().map(|&i| ac.data()[i].re));
        }
        x.extend(layout.normal.iter().map(|&i| self.w[i]));
        match formulation {
            Formulation::Frequency => x.extend(&self.omega),
            Formulation::Counterterm => x.extend(&self.alpha),
        }
        x
    }

    /// Inverse of [`pack`](Self::pack): every other coefficient is reset to its
    /// symmetric value (zero).
    pub fn unpack(&self, layout: &Layout, formulation: Formulation, x: &[f64]) -> TorusEmbedding {
        let nu = layout.nu();
        let r = layout.reps.len();
        let mut out = self.clone();
        let mut pos = 0;
        for a in 0..nu {
            let mut th = layout.zeros();
            for &i in &layout.reps {
                th.set_mode(layout.template.mode(i), C64::new(0.0, x[pos]));
                pos += 1;
            }
            out.theta[a] = th;
        }
        for a in 0..nu {
            let mut ac = layout.zeros();
            for &i in &layout.reps {
                ac.set_mode(layout.template.mode(i), C64::new(x[pos], 0.0));
                pos += 1;
            }
            out.action[a] = ac;
        }
        debug_assert_eq!(pos, 2 * nu * r);
        out.w = vec![0.0; layout.template.len()];
        for &i in &layout.normal {
            out.w[i] = x[pos];
            pos += 1;
        }
        let f = x[pos..pos + nu].to_vec();
        match formulation {
            Formulation::Frequency => out.omega = f,
            Formulation::Counterterm => out.alpha = f,
        }
        out
    }
}

/// `Θ = 0`, `I = 0`, `w = 0`, `ω = α = Ω⃗(κ)`: the linear quasi-periodic traveling wave.
pub fn linear_seed(
    physics: &WavePhysics,
    sites: &SiteSelection,
    xi: &[f64],
    epsilon: f64,
    n_phi: usize,
    n_modes: usize,
) -> Result<TorusEmbedding, SolverError> {
    sites.validate().map_err(|e| SolverError::Config(e.to_string()))?;
    let nu = sites.nu();
    if xi.len() != nu || xi.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(SolverError::Config(format!("need {nu} positive amplitudes ξ, got {xi:?}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(SolverError::Config(format!("ε = {epsilon} must be finite and non-negative")));
    }
    let jv = sites.jvec();
    let max_k = jv.iter().map(|j| j.unsigned_abs() as usize).max().unwrap_or(0);
    if n_phi == 0 || n_modes < max_k {
        return Err(SolverError::Config(format!(
            "cutoffs n_phi = {n_phi}, n_modes = {n_modes} must resolve the sites {jv:?}"
        )));
    }
    let template = TravelingProfile::zeros(&jv, n_phi, n_modes);
    let omega = sites.tangential_frequencies(physics);
    Ok(TorusEmbedding {
        physics: *physics,
        sites: sites.clone(),
        xi: xi.to_vec(),
        epsilon,
        theta: vec![template.clone(); nu],
        action: vec![template.clone(); nu],
        w: vec![0.0; template.len()],
        omega: omega.clone(),
        alpha: omega,
    })
}

/// Wahlén state on the spatial circle at the angle `φ`.
pub fn action_angle_map(emb: &TorusEmbedding, phi: &[f64]) -> Result<WahlenState, SolverError> {
    let (eta, zeta) = emb.wahlen_profiles()?;
    let n = emb.n_modes();
    Ok(WahlenState {
        eta: eta.spatial_slice(phi, n),
        zeta: zeta.spatial_slice(phi, n),
    })
}

/// Components of `ω·∂_φ i − X_α(i)`.
#[derive(Clone, Debug)]
pub struct Residual {
    pub theta: Vec<TravelingProfile>,
    pub action: Vec<TravelingProfile>,
    /// `F_w` by profile index (zero off the normal support).
    pub w: Vec<C64>,
    /// Free coefficients, in equation order.
    pub reduced: Vec<f64>,
    /// Largest coefficient that anti-reversibility forces to vanish.
    pub symmetry_defect: f64,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        self.reduced.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Assembles the residual of the invariance equation.
pub fn residual_f(emb: &TorusEmbedding, layout: &Layout, dno: &DnoConfig) -> Result<Residual, SolverError> {
    let p = &emb.physics;
    let nu = layout.nu();
    let (eta, zeta) = emb.unit_profiles()?;
    let (yeta, yzeta) = if emb.epsilon == 0.0 {
        linear_flat_generic(p, &eta, &zeta)
    } else {
        let e = emb.epsilon;
        let (a, b) = wahlen_field_generic(p, &eta.scale(e), &zeta.scale(e), dno)?;
        (a.scale(1.0 / e), b.scale(1.0 / e))
    };
    let t = &layout.template;
    let zdot = |i: usize| -> C64 {
        let m = p.m(t.wavenumber(i));
        (yeta.data()[i] / m + C64::new(0.0, m) * yzeta.data()[i]) * FRAC_1_SQRT_2
    };
    let omega_dot = |i: usize| -> f64 { t.mode(i).iter().zip(&emb.omega).map(|(&l, w)| l as f64 * w).sum() };

    let mut f_theta = Vec::with_capacity(nu);
    let mut f_action = Vec::with_capacity(nu);
    let jv = &layout.jvec;
    for a in 0..nu {
        // H_a(φ) = ż_{j_a}(φ)e^{iφ_a}, supported on ȷ⃗·ℓ = 0.
        let mut h = vec![C64::new(0.0, 0.0); t.len()];
        for &(i, up) in &layout.tangential[a] {
            h[up] = zdot(i);
        }
        let mut h_re = t.clone();
        let mut h_im = t.clone();
        for i in 0..t.len() {
            let hm = h[t.mirror(i)].conj();
            h_re.data_mut()[i] = (h[i] + hm) * 0.5;
            h_im.data_mut()[i] = (h[i] - hm) * C64::new(0.0, -0.5);
        }
        let (hr, hi) = (h_re.to_grid(), h_im.to_grid());
        let th = emb.theta[a].to_grid();
        let ac = emb.action[a].to_grid();
        let shift = emb.alpha[a] - p.big_omega(jv[a]);
        let mut theta_dot = vec![0.0; th.len()];
        let mut action_dot = vec![0.0; th.len()];
        for k in 0..th.len() {
            let r = ((emb.xi[a] + ac[k]) / (2.0 * PI)).sqrt();
            let (gr, gi) = (r * th[k].cos(), -r * th[k].sin());
            let g2 = gr * gr + gi * gi;
            theta_dot[k] = -(hi[k] * gr - hr[k] * gi) / g2 + shift;
            action_dot[k] = 4.0 * PI * (gr * hr[k] + gi * hi[k]);
        }
        let neg_theta_dot: Vec<f64> = theta_dot.iter().map(|v| emb.omega[a] - v).collect();
        let ft = t.from_grid_like(&neg_theta_dot).plus(&emb.theta[a].omega_derivative(&emb.omega));
        let fa = emb.action[a].omega_derivative(&emb.omega).minus(&t.from_grid_like(&action_dot));
        f_theta.push(ft);
        f_action.push(fa);
    }
    let mut f_w = vec![C64::new(0.0, 0.0); t.len()];
    for &i in &layout.normal {
        f_w[i] = C64::new(0.0, omega_dot(i) * emb.w[i]) - zdot(i);
    }

    let mut reduced = Vec::with_capacity(layout.unknowns());
    let mut defect: f64 = 0.0;
    for ft in &f_theta {
        reduced.push(ft.data()[layout.zero].re);
        reduced.extend(layout.reps.iter().map(|&i| ft.data()[i].re));
        defect = defect.max(ft.parity_defect(true));
    }
    for fa in &f_action {
        reduced.extend(layout.reps.iter().map(|&i| fa.data()[i].im));
        defect = defect.max(fa.parity_defect(false));
    }
    for &i in &layout.normal {
        reduced.push(f_w[i].im);
        defect = defect.max(f_w[i].re.abs());
    }
    Ok(Residual {
        theta: f_theta,
        action: f_action,
        w: f_w,
        reduced,
        symmetry_defect: defect,
    })
}

/// Smallest linear divisor of the Newton system at `ε = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorCheck {
    pub min_divisor: f64,
    pub ell: Vec<i64>,
    /// Wavenumber of the offending mode (0 for angle-only modes).
    pub k: i64,
}

/// `min |ω·ℓ|` over angle-only unknowns and `min |ω·ℓ + Ω_k|` over normal ones.
pub fn linear_divisors(emb: &TorusEmbedding, layout: &Layout) -> DivisorCheck {
    let t = &layout.template;
    let dotw = |i: usize| -> f64 { t.mode(i).iter().zip(&emb.omega).map(|(&l, w)| l as f64 * w).sum() };
    let mut best = DivisorCheck {
        min_divisor: f64::INFINITY,
        ell: Vec::new(),
        k: 0,
    };
    let mut consider = |d: f64, i: usize| {
        if d.abs() < best.min_divisor {
            best = DivisorCheck {
                min_divisor: d.abs(),
                ell: t.mode(i).to_vec(),
                k: t.wavenumber(i),
            };
        }
    };
    for &i in &layout.reps {
        consider(dotw(i), i);
    }
    for &i in &layout.normal {
        consider(dotw(i) + emb.physics.big_omega(t.wavenumber(i)), i);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub formulation: Formulation,
    pub unknowns: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sup norm of the reduced residual before each step and at the end.
    pub residual_history: Vec<f64>,
    pub step_norms: Vec<f64>,
    /// Accepted damping factor of each step.
    pub damping: Vec<f64>,
    pub final_residual: f64,
    /// `max_a |α_a − ω_a|`.
    pub frequency_shift: f64,
    /// Coefficients of the residual that must vanish by anti-reversibility.
    pub symmetry_defect: f64,
    pub divisors: DivisorCheck,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central-difference Jacobian of the reduced residual.
pub fn jacobian(
    emb: &TorusEmbedding,
    layout: &Layout,
    formulation: Formulation,
    x: &[f64],
    step: f64,
    dno: &DnoConfig,
) -> Result<DMatrix<f64>, SolverError> {
    let n = x.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>, SolverError> {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += step;
            xm[c] -= step;
            let fp = residual_f(&emb.unpack(layout, formulation, &xp), layout, dno)?.reduced;
            let fm = residual_f(&emb.unpack(layout, formulation, &xm), layout, dno)?.reduced;
            Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        })
        .collect::<Result<_, _>>()?;
    Ok(DMatrix::from_fn(n, n, |r, c| cols[c][r]))
}

/// Damped Newton in the reversible traveling subspace.
pub fn newton_solve(
    emb0: &TorusEmbedding,
    cfg: &SolverConfig,
) -> Result<(TorusEmbedding, SolveReport), SolverError> {
    let layout = emb0.layout();
    let formulation = cfg.formulation;
    let divisors = linear_divisors(emb0, &layout);
    if divisors.min_divisor < cfg.min_divisor {
        return Err(SolverError::SmallDivisor {
            divisor: divisors.min_divisor,
            threshold: cfg.min_divisor,
            ell: divisors.ell,
            k: divisors.k,
        });
    }
    let mut x = emb0.pack(&layout, formulation);
    let mut res = residual_f(emb0, &layout, &cfg.dno)?;
    let mut r = res.norm();
    let mut report = SolveReport {
        formulation,
        unknowns: x.len(),
        epsilon: emb0.epsilon,
        iterations: 0,
        converged: false,
        residual_history: vec![r],
        step_norms: Vec::new(),
        damping: Vec::new(),
        final_residual: r,
        frequency_shift: 0.0,
        symmetry_defect: res.symmetry_defect,
        divisors,
    };
    while r > cfg.tol && report.iterations < cfg.max_iter {
        let it = report.iterations;
        let j = jacobian(emb0, &layout, formulation, &x, cfg.fd_step, &cfg.dno)?;
        let rhs = DVector::from_iterator(x.len(), res.reduced.iter().map(|v| -v));
        let dx = j.lu().solve(&rhs).ok_or(SolverError::Singular(it))?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Singular(it));
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
            let cand = emb0.unpack(&layout, formulation, &trial);
            if let Ok(rc) = residual_f(&cand, &layout, &cfg.dno) {
                if rc.norm() < r {
                    accepted = Some((trial, rc));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, rc)) = accepted else {
            break;
        };
        report.step_norms.push(lambda * sup(dx.as_slice()));
        report.damping.push(lambda);
        x = trial;
        res = rc;
        r = res.norm();
        report.residual_history.push(r);
        report.iterations += 1;
    }
    let emb = emb0.unpack(&layout, formulation, &x);
    report.final_residual = r;
    report.converged = r <= cfg.tol;
    report.frequency_shift = emb.frequency_shift();
    report.symmetry_defect = res.symmetry_defect;
    if !report.converged {
        return Err(SolverError::NoConvergence {
            iterations: report.iterations,
            residual: r,
        });
    }
    Ok((emb, report))
}

/// Warm-started continuation along `ε`.
pub fn solve_ladder(
    seed: &TorusEmbedding,
    epsilons: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<(TorusEmbedding, SolveReport)>, SolverError> {
    let mut out = Vec::with_capacity(epsilons.len());
    let mut cur = seed.clone();
    for &e in epsilons {
        cur.epsilon = e;
        let (sol, rep) = newton_solve(&cur, cfg)?;
        cur = sol.clone();
        out.push((sol, rep));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Length of the run in periods `2π/ω_1`.
    pub periods: f64,
    /// Time steps per period.
    pub steps_per_period: usize,
    /// Comparison points per period.
    pub samples_per_period: usize,
    pub scheme: Scheme,
    pub dno: DnoConfig,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            periods: 5.0,
            steps_per_period: 400,
            samples_per_period: 4,
            scheme: Scheme::Auto,
            dno: DnoConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub t_end: f64,
    /// `(t, ‖u(t) − u_torus(ωt)‖)` in the normalized L² norm of `(η, ψ)`.
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    /// Distance between the torus and the linear superposition of the same amplitude.
    pub correction_norm: f64,
    /// `√|ξ|` of the physical amplitudes `ε²ξ_a/π`.
    pub sqrt_xi: f64,
    /// `correction_norm / sqrt_xi`.
    pub correction_ratio: f64,
}

fn state_at(eta: &TravelingProfile, psi: &TravelingProfile, phi: &[f64], n: usize) -> State {
    State::new(eta.spatial_slice(phi, n), psi.spatial_slice(phi, n))
}

/// Evolves the torus surface at `φ = 0` with the water-wave flow and compares
/// with the torus at `φ = ωt`.
pub fn validate_solution(emb: &TorusEmbedding, cfg: &ValidateConfig) -> Result<ValidationReport, SolverError> {
    if !(cfg.periods > 0.0) || cfg.steps_per_period == 0 || cfg.samples_per_period == 0 {
        return Err(SolverError::Config("validation needs positive periods and step counts".into()));
    }
    let (eta, psi) = emb.surface_profiles()?;
    let n = emb.n_modes();
    let nu = emb.nu();
    let period = 2.0 * PI / emb.omega[0].abs();
    let t_end = cfg.periods * period;
    let steps = (cfg.periods * cfg.steps_per_period as f64).round() as usize;
    let mut icfg = IntegratorConfig::new(t_end / steps as f64, t_end);
    icfg.scheme = cfg.scheme;
    icfg.dno = cfg.dno;
    icfg.sample_every = (cfg.steps_per_period / cfg.samples_per_period).max(1);
    let s0 = state_at(&eta, &psi, &vec![0.0; nu], n);
    let run = flow_samples(&emb.physics, &s0, &icfg)?;
    let deviations: Vec<(f64, f64)> = run
        .iter()
        .map(|(t, s)| {
            let phi: Vec<f64> = emb.omega.iter().map(|w| w * t).collect();
            (*t, s.distance(&state_at(&eta, &psi, &phi, n)))
        })
        .collect();
    let max_deviation = deviations.iter().fold(0.0_f64, |m, d| m.max(d.1));

    let mut lin = emb.clone();
    let layout = emb.layout();
    for a in 0..nu {
        lin.theta[a] = layout.zeros();
        lin.action[a] = layout.zeros();
    }
    lin.w = vec![0.0; emb.w.len()];
    let (leta, lpsi) = lin.surface_profiles()?;
    let correction_norm = (eta.minus(&leta).norm().powi(2) + psi.minus(&lpsi).norm().powi(2)).sqrt();
    let sqrt_xi = emb.epsilon * (emb.xi.iter().sum::<f64>() / PI).sqrt();
    let correction_ratio = if sqrt_xi > 0.0 { correction_norm / sqrt_xi } else { 0.0 };
    Ok(ValidationReport {
        t_end,
        deviations,
        max_deviation,
        correction_norm,
        sqrt_xi,
        correction_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::Depth;

    fn physics() -> WavePhysics {
        WavePhysics::new(1.0, 1.0, 0.5, Depth::Finite(2.0)).unwrap()
    }

    fn sites2() -> SiteSelection {
        SiteSelection::new(vec![1, 2], vec![1, 1]).unwrap()
    }

    #[test]
    fn seed_residual_vanishes_at_zero_amplitude() {
        let seed = linear_seed(&physics(), &sites2(), &[1.0, 0.5], 0.0, 3, 12).unwrap();
        let layout = seed.layout();
        let r = residual_f(&seed, &layout, &DnoConfig::default()).unwrap();
        assert!(r.norm() < 1e-13, "{}", r.norm());
        assert_eq!(r.reduced.len(), layout.unknowns());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let seed = linear_seed(&physics(), &sites2(), &[1.0, 0.5], 1e-3, 3, 12).unwrap();
        let layout = seed.layout();
        let x: Vec<f64> = (0..layout.unknowns()).map(|k| (k as f64 * 0.37).sin() * 1e-3).collect();
        let e = seed.unpack(&layout, Formulation::Frequency, &x);
        assert_eq!(e.pack(&layout, Formulation::Frequency), x);
        assert!(e.theta[0].parity_defect(false) == 0.0);
        assert!(e.action[1].parity_defect(true) == 0.0);
        let (eta, zeta) = e.normal_fields();
        assert!(eta.parity_defect(true) < 1e-18 && zeta.parity_defect(false) < 1e-18);
    }

    #[test]
    fn seed_surface_is_the_linear_superposition() {
        let p = physics();
        let s = sites2();
        let xi = [1.0, 0.5];
        let eps = 1e-2;
        let seed = linear_seed(&p, &s, &xi, eps, 3, 12).unwrap();
        let w = action_angle_map(&seed, &[0.4, 1.3]).unwrap();
        for &x in &[0.0, 0.7, 2.9] {
            let mut want = 0.0;
            for (a, &j) in s.jvec().iter().enumerate() {
                let phase = [0.4, 1.3][a] - j as f64 * x;
                want += p.m(j) * (eps * eps * xi[a] / PI).sqrt() * phase.cos();
            }
            assert!((w.eta.eval(x) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_is_anti_reversible() {
        let seed = linear_seed(&physics(), &sites2(), &[1.0, 0.5], 5e-2, 3, 12).unwrap();
        let layout = seed.layout();
        let x: Vec<f64> = seed
            .pack(&layout, Formulation::Frequency)
            .iter()
            .enumerate()
            .map(|(k, v)| v + 1e-3 * (k as f64 * 1.7).cos())
            .collect();
        let e = seed.unpack(&layout, Formulation::Frequency, &x);
        let r = residual_f(&e, &layout, &DnoConfig::default()).unwrap();
        assert!(r.symmetry_defect < 1e-14, "{}", r.symmetry_defect);
        assert!(r.norm() > 1e-6);
    }

    #[test]
    fn action_angle_map_is_equivariant() {
        let seed = linear_seed(&physics(), &sites2(), &[1.0, 0.5], 5e-2, 3, 12).unwrap();
        let layout = seed.layout();
        let x: Vec<f64> = seed
            .pack(&layout, Formulation::Frequency)
            .iter()
            .enumerate()
            .map(|(k, v)| v + 1e-3 * (k as f64 * 0.9).sin())
            .collect();
        let e = seed.unpack(&layout, Formulation::Frequency, &x);
        let phi = [0.8, -0.3];
        let u = action_angle_map(&e, &phi).unwrap();
        // Involution: A(−φ) = S A(φ).
        let v = action_angle_map(&e, &[-0.8, 0.3]).unwrap();
        assert!(v.eta.minus(&u.involution().eta).max_coeff() < 1e-15);
        assert!(v.zeta.minus(&u.involution().zeta).max_coeff() < 1e-15);
        // Translation: A(φ − ȷ⃗ς) = τ_ς A(φ).
        let s = 0.3;
        let shifted: Vec<f64> = phi.iter().zip(e.sites.jvec()).map(|(p, j)| p - j as f64 * s).collect();
        let t = action_angle_map(&e, &shifted).unwrap();
        assert!(t.eta.minus(&u.translate(s).eta).max_coeff() < 1e-15);
    }

    #[test]
    fn newton_converges_on_small_torus() {
        let seed = linear_seed(&physics(), &sites2(), &[1.0, 0.5], 2e-2, 3, 12).unwrap();
        let cfg = SolverConfig::default();
        let (sol, rep) = newton_solve(&seed, &cfg).unwrap();
        assert!(rep.converged && rep.final_residual <= cfg.tol);
        assert!(rep.iterations <= 6, "{:?}", rep.residual_history);
        assert!(rep.symmetry_defect < 1e-12);
        // Frequencies move at second order in ε.
        let shift = sol.frequency_shift();
        assert!(shift > 0.0 && shift < 1e-2, "{shift}");
    }
}
