//! Scalar by-products of the reduction of the linearized operator at a
//! traveling torus to constant coefficients.
//!
//! Every field here is a [`TravelingProfile`]: a function `u(φ,x) = U(φ − ȷ⃗x)`.
//! In that representation the spatial average `⟨u⟩_x(φ)` keeps the modes with
//! `ȷ⃗·ℓ = 0`, so angle-only functions such as `p`, `ρ`, `ϱ` and `b₂` are stored
//! as profiles supported on that sublattice. Compositions in `x` and the time
//! reparametrization become shifts of the profile argument:
//!
//! * `u(φ, x + d(φ,x))` is `U(ψ − ȷ⃗d)`;
//! * `u(φ + ω s(φ), x)` is `U(ψ + ω s)` whenever `s` only depends on `ȷ⃗·ℓ = 0` modes.

use crate::dispersion::WavePhysics;
use crate::dno::{g_eta_apply, trace_fields_from, DnoConfig, DnoError};
use crate::fields::{DivisorReport, FieldError, Spectral, TravelingProfile};
use crate::nonres::FrequencyModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error(transparent)]
    Dno(#[from] DnoError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("small divisor while inverting ω·∂_φ for {stage}: scaled divisor {scaled:.3e} at ℓ = {ell:?}")]
    SmallDivisor {
        stage: &'static str,
        scaled: f64,
        ell: Vec<i64>,
    },
    #[error("diffeomorphism guard: max|β_x| = {0:.3e} is not below 1/2")]
    DiffeoGuard(f64),
    #[error("inverse diffeomorphism did not converge: residual {0:.3e}")]
    InverseDiffeo(f64),
    #[error("x-average of a3d varies by {0:.3e} across angles")]
    NotConstantAverage(f64),
    #[error("input mismatch: {0}")]
    Input(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormConfig {
    /// Level `υ` of the extended inverse of `ω·∂_φ`.
    pub upsilon: f64,
    pub tau: f64,
    /// Refuse inputs where the smooth cutoff would alter a mode.
    pub strict_divisors: bool,
    pub dno: DnoConfig,
    /// Pointwise Newton tolerance for the inverse diffeomorphism.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Allowed angle variation of `⟨a3d⟩_x`.
    pub average_tol: f64,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        NormalFormConfig {
            upsilon: 1e-4,
            tau: 2.5,
            strict_divisors: true,
            dno: DnoConfig::default(),
            newton_tol: 1e-15,
            max_newton: 60,
            average_tol: 1e-8,
        }
    }
}

/// The three constants of the reduced first-order part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionConstants {
    pub m32: f64,
    pub m1: f64,
    pub m12: f64,
    pub n_phi: usize,
    pub n_modes: usize,
    /// Free-form label of the input torus.
    pub torus_id: String,
}

#[derive(Clone, Debug)]
pub struct AuxProfiles {
    pub c: TravelingProfile,
    pub m_of_phi: TravelingProfile,
    pub beta: TravelingProfile,
    pub beta_inverse: TravelingProfile,
    pub p: TravelingProfile,
    pub rho: TravelingProfile,
    pub q: TravelingProfile,
    pub a1d: TravelingProfile,
    pub b1: TravelingProfile,
    pub b2: TravelingProfile,
    pub varrho: TravelingProfile,
    pub a2d: TravelingProfile,
    pub a3d: TravelingProfile,
    pub b3: TravelingProfile,
}

/// Grid maxima of the defining identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalFormResiduals {
    /// `(1+β_x)³c − m(φ)`.
    pub beta_equation: f64,
    /// `m_{3/2}(θ)/ρ(θ) − m32`.
    pub time_reparametrization: f64,
    /// `y + β̆ + β(φ, y+β̆) − y`.
    pub inverse_diffeomorphism: f64,
    /// `a1d + (3/2)m32√κ (b₁)_x − ⟨a1d⟩_x`.
    pub first_order: f64,
    /// `ω·∂_φϱ + ⟨a1d⟩_x − m1`.
    pub m1_equation: f64,
    /// `⟨a2d⟩_x − m12`.
    pub half_order_average: f64,
    /// `a3d − (3/2)m32√κ (b₃)_x − m12`.
    pub b3_equation: f64,
}

impl NormalFormResiduals {
    pub fn max(&self) -> f64 {
        [
            self.beta_equation,
            self.time_reparametrization,
            self.inverse_diffeomorphism,
            self.first_order,
            self.m1_equation,
            self.half_order_average,
            self.b3_equation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct NormalForm {
    pub constants: ReductionConstants,
    pub aux: AuxProfiles,
    pub residuals: NormalFormResiduals,
    /// Divisor report of each inversion of `ω·∂_φ`.
    pub divisors: Vec<(&'static str, DivisorReport)>,
}

fn grid_max_abs(u: &TravelingProfile) -> f64 {
    u.max_abs()
}

/// `ν` components per grid point: `s(ψ)·dir`.
fn shift_along(s: &TravelingProfile, dir: &[f64]) -> Vec<f64> {
    s.to_grid()
        .into_iter()
        .flat_map(|v| dir.iter().map(move |d| v * d))
        .collect()
}

fn jvec_f64(u: &TravelingProfile) -> Vec<f64> {
    u.jvec().iter().map(|&j| j as f64).collect()
}

/// Grid values times a profile: `a·u` with `a` given on the grid.
fn scale_grid(u: &TravelingProfile, a: &[f64]) -> TravelingProfile {
    let g: Vec<f64> = u.to_grid().iter().zip(a).map(|(x, y)| x * y).collect();
    u.from_grid_like(&g)
}

fn constant_like(u: &TravelingProfile, v: f64) -> TravelingProfile {
    u.map_pointwise(|_| v)
}

fn invert_omega(
    rhs: &TravelingProfile,
    omega: &[f64],
    cfg: &NormalFormConfig,
    stage: &'static str,
    log: &mut Vec<(&'static str, DivisorReport)>,
) -> Result<TravelingProfile, NormalFormError> {
    let (out, rep) = rhs.omega_inverse_ext(omega, cfg.upsilon, cfg.tau);
    if cfg.strict_divisors && rep.cutoff_active {
        return Err(NormalFormError::SmallDivisor {
            stage,
            scaled: rep.min_scaled_divisor,
            ell: rep.worst_mode.clone(),
        });
    }
    log.push((stage, rep));
    Ok(out)
}

/// `c(η) = (1 + η_x²)^{−3/2}` on the dealiased grid.
pub fn profile_c(eta: &TravelingProfile) -> TravelingProfile {
    eta.dx().map_pointwise(|s| (1.0 + s * s).powf(-1.5))
}

#[derive(Clone, Debug)]
pub struct BetaSolution {
    /// `m(φ) = (⟨c^{−1/3}⟩_x)^{−3}`.
    pub m_of_phi: TravelingProfile,
    pub beta: TravelingProfile,
    /// Grid maximum of `(1+β_x)³c − m(φ)`.
    pub residual: f64,
}

/// Solves `(1+β_x)³c = m(φ)` with `m` independent of `x`.
pub fn solve_beta(c: &TravelingProfile) -> BetaSolution {
    let avg = c.map_pointwise(|v| v.powf(-1.0 / 3.0)).x_mean();
    let m_of_phi = avg.map_pointwise(|v| v.powi(-3)).x_mean();
    let mg = m_of_phi.to_grid();
    let cg = c.to_grid();
    let ratio: Vec<f64> = mg.iter().zip(&cg).map(|(m, c)| (m / c).cbrt() - 1.0).collect();
    let beta = c.from_grid_like(&ratio).dx_inverse();
    let bx = beta.dx().to_grid();
    let residual = bx
        .iter()
        .zip(&cg)
        .zip(&mg)
        .map(|((b, c), m)| ((1.0 + b).powi(3) * c - m).abs())
        .fold(0.0, f64::max);
    BetaSolution {
        m_of_phi,
        beta,
        residual,
    }
}

#[derive(Clone, Debug)]
pub struct TimeReparametrization {
    pub m32: f64,
    /// `(⟨√(1+η_x²)⟩_x)^{−3/2}` before reparametrization.
    pub f: TravelingProfile,
    pub p: TravelingProfile,
    /// `p̆` with `φ = ϑ + ω p̆(ϑ)`.
    pub p_inverse: TravelingProfile,
    pub rho: TravelingProfile,
    /// `m_{3/2}(ϑ) = P^{−1}f`.
    pub m32_of_phi: TravelingProfile,
    /// Grid maximum of `m_{3/2}/ρ − m32`.
    pub residual: f64,
    pub divisor: DivisorReport,
}

impl TimeReparametrization {
    /// `P^{−1}u(ϑ, x) = u(ϑ + ω p̆(ϑ), x)`.
    pub fn pull_back(&self, u: &TravelingProfile, omega: &[f64]) -> TravelingProfile {
        u.compose_shift(&shift_along(&self.p_inverse, omega))
    }
}

/// Quasi-periodic time reparametrization making the top-order coefficient constant.
pub fn reparametrize_time(
    eta: &TravelingProfile,
    omega: &[f64],
    cfg: &NormalFormConfig,
) -> Result<TimeReparametrization, NormalFormError> {
    let arc = eta.dx().map_pointwise(|s| (1.0 + s * s).sqrt()).x_mean();
    let f = arc.map_pointwise(|v| v.powf(-1.5)).x_mean();
    let m32 = f.angle_mean();
    let rhs = f.scale(1.0 / m32).minus(&constant_like(&f, 1.0)).x_mean();
    let mut log = Vec::new();
    let p = invert_omega(&rhs, omega, cfg, "time reparametrization", &mut log)?;
    let divisor = log.pop().expect("one report");

    // p̆(ϑ) = −p(ϑ + ω p̆(ϑ)); the map is a contraction since |ω·∂_φ p| ≪ 1.
    let mut p_inv = p.scale(-1.0);
    for _ in 0..cfg.max_newton {
        let next = p.compose_shift(&shift_along(&p_inv, omega)).scale(-1.0).x_mean();
        let change = next.max_diff(&p_inv);
        p_inv = next;
        if change <= cfg.newton_tol {
            break;
        }
    }
    let mut out = TimeReparametrization {
        m32,
        f: f.clone(),
        p: p.clone(),
        p_inverse: p_inv,
        rho: f.clone(),
        m32_of_phi: f.clone(),
        residual: 0.0,
        divisor: divisor.1,
    };
    let one_plus = constant_like(&p, 1.0).plus(&p.omega_derivative(omega));
    out.rho = out.pull_back(&one_plus, omega);
    out.m32_of_phi = out.pull_back(&f, omega);
    let r = out.rho.to_grid();
    out.residual = out
        .m32_of_phi
        .to_grid()
        .iter()
        .zip(&r)
        .map(|(m, r)| (m / r - m32).abs())
        .fold(0.0, f64::max);
    Ok(out)
}

/// `β̆` with `x = y + β̆(φ,y)` inverting `y = x + β(φ,x)`, by pointwise Newton.
/// Returns `(β̆, residual)`.
pub fn inverse_diffeomorphism(
    beta: &TravelingProfile,
    cfg: &NormalFormConfig,
) -> Result<(TravelingProfile, f64), NormalFormError> {
    let bx = beta.dx();
    let slope = grid_max_abs(&bx);
    if slope >= 0.5 {
        return Err(NormalFormError::DiffeoGuard(slope));
    }
    let nu = beta.nu();
    let jv = jvec_f64(beta);
    let pts = beta.grid_points();
    let n = pts.len() / nu;
    let moved = |d: &[f64]| -> Vec<f64> {
        let mut q = pts.clone();
        for k in 0..n {
            for a in 0..nu {
                q[k * nu + a] -= jv[a] * d[k];
            }
        }
        q
    };
    let mut d = vec![0.0; n];
    for _ in 0..cfg.max_newton {
        let q = moved(&d);
        let b = beta.eval_many(&q);
        let db = bx.eval_many(&q);
        let mut residual: f64 = 0.0;
        for k in 0..n {
            let g = d[k] + b[k];
            residual = f64::max(residual, g.abs());
            d[k] -= g / (1.0 + db[k]);
        }
        if residual <= cfg.newton_tol {
            break;
        }
    }
    let b = beta.eval_many(&moved(&d));
    let residual = d.iter().zip(&b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    if !(residual <= 1e3 * cfg.newton_tol.max(f64::EPSILON)) {
        return Err(NormalFormError::InverseDiffeo(residual));
    }
    Ok((beta.from_grid_like(&d), residual))
}

/// `B^{−1}u(φ,y) = u(φ, y + β̆(φ,y))`.
pub fn compose_inverse(u: &TravelingProfile, beta_inverse: &TravelingProfile) -> TravelingProfile {
    let jv: Vec<f64> = jvec_f64(u).into_iter().map(|j| -j).collect();
    u.compose_shift(&shift_along(beta_inverse, &jv))
}

#[derive(Clone, Debug)]
pub struct FirstOrderCoefficient {
    pub a1: TravelingProfile,
    /// `a1d = a₁/ρ`.
    pub a1d: TravelingProfile,
    pub beta_inverse: TravelingProfile,
    pub inverse_residual: f64,
}

/// `a₁ = B^{−1}((1+β_x)Ṽ + ω·∂_φβ)` with `Ṽ` evaluated at the reparametrized
/// surface `(η_p, ψ_p)`, and `a1d = a₁/ρ`.
pub fn coefficient_a1(
    physics: &WavePhysics,
    eta_p: &TravelingProfile,
    psi_p: &TravelingProfile,
    omega: &[f64],
    beta: &TravelingProfile,
    rho: &TravelingProfile,
    cfg: &NormalFormConfig,
) -> Result<FirstOrderCoefficient, NormalFormError> {
    let g = g_eta_apply(physics, eta_p, psi_p, &cfg.dno)?;
    let tr = trace_fields_from(physics, eta_p, psi_p, &g);
    let one_bx = constant_like(beta, 1.0).plus(&beta.dx());
    let inner = one_bx.product(&tr.vtilde).plus(&beta.omega_derivative(omega));
    let (beta_inverse, inverse_residual) = inverse_diffeomorphism(beta, cfg)?;
    let a1 = compose_inverse(&inner, &beta_inverse);
    let inv_rho: Vec<f64> = rho.to_grid().into_iter().map(|r| 1.0 / r).collect();
    let a1d = scale_grid(&a1, &inv_rho);
    Ok(FirstOrderCoefficient {
        a1,
        a1d,
        beta_inverse,
        inverse_residual,
    })
}

/// `m1 = ⟨a1d⟩_{φ,x}` and `ϱ = −(ω·∂_φ)^{−1}(⟨a1d⟩_x − m1)`; the last entry is the
/// grid residual of `ω·∂_φϱ + ⟨a1d⟩_x − m1`.
pub fn coefficient_chain_m1(
    a1d: &TravelingProfile,
    omega: &[f64],
    cfg: &NormalFormConfig,
) -> Result<(f64, TravelingProfile, f64, DivisorReport), NormalFormError> {
    let avg = a1d.x_mean();
    let m1 = avg.angle_mean();
    let rhs = avg.minus(&constant_like(&avg, m1)).x_mean();
    let mut log = Vec::new();
    let varrho = invert_omega(&rhs, omega, cfg, "m1 chain", &mut log)?.scale(-1.0);
    let check = varrho.omega_derivative(omega).plus(&avg);
    let residual = check.to_grid().iter().map(|v| (v - m1).abs()).fold(0.0, f64::max);
    Ok((m1, varrho, residual, log.pop().expect("one report").1))
}

#[derive(Clone, Debug)]
pub struct HalfOrderChain {
    pub m12: f64,
    pub b1: TravelingProfile,
    pub b2: TravelingProfile,
    pub a2d: TravelingProfile,
    /// Residual of `a1d + (3/2)m32√κ(b₁)_x = ⟨a1d⟩_x`.
    pub first_order_residual: f64,
    /// Residual of `⟨a2d⟩_x = m12`.
    pub average_residual: f64,
    pub divisor: DivisorReport,
}

pub fn coefficient_chain_m12(
    a1d: &TravelingProfile,
    omega: &[f64],
    m32: f64,
    kappa: f64,
    cfg: &NormalFormConfig,
) -> Result<HalfOrderChain, NormalFormError> {
    let sk = kappa.sqrt();
    let avg1 = a1d.x_mean();
    let b1 = a1d.minus(&avg1).dx_inverse().scale(-2.0 / (3.0 * m32 * sk));
    let b1x = b1.dx();
    let b1xx = b1x.dx();
    let a1x = a1d.dx();
    let first = a1d.plus(&b1x.scale(1.5 * m32 * sk)).minus(&avg1);
    let first_order_residual = first.max_abs();

    let t = a1x
        .product(&b1)
        .scale(-0.5)
        .plus(&a1d.product(&b1x))
        .plus(&b1x.product(&b1x).minus(&b1xx.product(&b1).scale(0.5)).scale(0.75 * sk * m32));
    let m12 = t.angle_mean();
    let forcing = t.plus(&b1.omega_derivative(omega)).x_mean();
    let rhs = forcing.minus(&constant_like(&forcing, m12)).x_mean();
    let mut log = Vec::new();
    let b2 = invert_omega(&rhs, omega, cfg, "m12 chain", &mut log)?.scale(-1.0);
    let factor = a1x.scale(0.5).plus(&b1xx.scale(0.375 * sk * m32));
    let a2d = t
        .plus(&b1.omega_derivative(omega))
        .minus(&factor.product(&b2))
        .plus(&b2.omega_derivative(omega));
    let average_residual = a2d
        .x_mean()
        .to_grid()
        .iter()
        .map(|v| (v - m12).abs())
        .fold(0.0, f64::max);
    Ok(HalfOrderChain {
        m12,
        b1,
        b2,
        a2d,
        first_order_residual,
        average_residual,
        divisor: log.pop().expect("one report").1,
    })
}

/// `a3d(φ,x) = a2d(φ, x − ϱ(φ))`.
pub fn translate_by_varrho(a2d: &TravelingProfile, varrho: &TravelingProfile) -> TravelingProfile {
    let jv = jvec_f64(a2d);
    a2d.compose_shift(&shift_along(varrho, &jv))
}

/// `b₃ = (2/(3 m32√κ))∂_x^{−1}(a3d − ⟨a3d⟩_x)`; also returns the residual of
/// `a3d − (3/2)m32√κ(b₃)_x − m12`.
pub fn coefficient_b3(
    a3d: &TravelingProfile,
    m32: f64,
    m12: f64,
    kappa: f64,
    cfg: &NormalFormConfig,
) -> Result<(TravelingProfile, f64), NormalFormError> {
    let avg = a3d.x_mean();
    let spread = avg.to_grid().iter().map(|v| (v - m12).abs()).fold(0.0, f64::max);
    if spread > cfg.average_tol {
        return Err(NormalFormError::NotConstantAverage(spread));
    }
    let sk = kappa.sqrt();
    let b3 = a3d.minus(&avg).dx_inverse().scale(2.0 / (3.0 * m32 * sk));
    let check = a3d.minus(&b3.dx().scale(1.5 * m32 * sk));
    let residual = check.to_grid().iter().map(|v| (v - m12).abs()).fold(0.0, f64::max);
    Ok((b3, residual))
}

/// First Melnikov approximation `μ_j = m32·Ω_j + m1·j + m12·|j|^{1/2}`; the
/// remainders `r_j` are zero.
pub fn frequency_model(constants: &ReductionConstants, physics: &WavePhysics) -> FrequencyModel {
    FrequencyModel {
        m32: constants.m32,
        m1: constants.m1,
        m12: constants.m12,
        physics: *physics,
        r: BTreeMap::new(),
    }
}

/// Runs the whole chain on the surface `(η, ψ)` of a traveling torus with
/// frequency `ω`.
pub fn reduce(
    physics: &WavePhysics,
    eta: &TravelingProfile,
    psi: &TravelingProfile,
    omega: &[f64],
    cfg: &NormalFormConfig,
    torus_id: &str,
) -> Result<NormalForm, NormalFormError> {
    if eta.jvec() != psi.jvec() || eta.len() != psi.len() {
        return Err(NormalFormError::Input("η and ψ profiles differ in layout".into()));
    }
    if omega.len() != eta.nu() {
        return Err(NormalFormError::Input(format!(
            "ω has {} entries, torus has ν = {}",
            omega.len(),
            eta.nu()
        )));
    }
    let time = reparametrize_time(eta, omega, cfg)?;
    let eta_p = time.pull_back(eta, omega);
    let psi_p = time.pull_back(psi, omega);
    let c = profile_c(&eta_p);
    let beta = solve_beta(&c);
    let first = coefficient_a1(physics, &eta_p, &psi_p, omega, &beta.beta, &time.rho, cfg)?;
    let (m1, varrho, m1_res, div_m1) = coefficient_chain_m1(&first.a1d, omega, cfg)?;
    let half = coefficient_chain_m12(&first.a1d, omega, time.m32, physics.kappa, cfg)?;
    let a3d = translate_by_varrho(&half.a2d, &varrho);
    let (b3, b3_res) = coefficient_b3(&a3d, time.m32, half.m12, physics.kappa, cfg)?;

    // q = a₃^{−1/4} with a₃ = B^{−1}(c(1+β_x)).
    let one_bx = constant_like(&beta.beta, 1.0).plus(&beta.beta.dx());
    let a3 = compose_inverse(&c.product(&one_bx), &first.beta_inverse);
    let q = a3.map_pointwise(|v| v.powf(-0.25));

    let residuals = NormalFormResiduals {
        beta_equation: beta.residual,
        time_reparametrization: time.residual,
        inverse_diffeomorphism: first.inverse_residual,
        first_order: half.first_order_residual,
        m1_equation: m1_res,
        half_order_average: half.average_residual,
        b3_equation: b3_res,
    };
    let constants = ReductionConstants {
        m32: time.m32,
        m1,
        m12: half.m12,
        n_phi: eta.n_phi(),
        n_modes: eta.n_modes(),
        torus_id: torus_id.to_string(),
    };
    let divisors = vec![
        ("time reparametrization", time.divisor.clone()),
        ("m1 chain", div_m1),
        ("m12 chain", half.divisor.clone()),
    ];
    Ok(NormalForm {
        constants,
        aux: AuxProfiles {
            c,
            m_of_phi: beta.m_of_phi,
            beta: beta.beta,
            beta_inverse: first.beta_inverse,
            p: time.p,
            rho: time.rho,
            q,
            a1d: first.a1d,
            b1: half.b1,
            b2: half.b2,
            varrho,
            a2d: half.a2d,
            a3d,
            b3,
        },
        residuals,
        divisors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::Depth;

    fn physics() -> WavePhysics {
        WavePhysics::new(1.0, 1.0, 0.5, Depth::Finite(2.0)).unwrap()
    }

    /// Small even traveling surface and odd potential on `ν = 2`, `ȷ⃗ = (1, 2)`.
    fn surface(eps: f64) -> (TravelingProfile, TravelingProfile) {
        let jv = [1, 2];
        let eta = TravelingProfile::from_fn(&jv, 6, 18, |s| {
            eps * (s[0].cos() + 0.5 * s[1].cos() + 0.2 * eps * (s[0] + s[1]).cos())
        });
        let psi = TravelingProfile::from_fn(&jv, 6, 18, |s| {
            eps * (0.8 * s[0].sin() + 0.3 * s[1].sin() + 0.1 * eps * (2.0 * s[0] - s[1]).sin())
        });
        (eta, psi)
    }

    #[test]
    fn flat_surface_is_trivial() {
        let jv = [1, 2];
        let z = TravelingProfile::zeros(&jv, 6, 18);
        let nf = reduce(&physics(), &z, &z, &[1.1, 2.3], &NormalFormConfig::default(), "flat").unwrap();
        assert!((nf.constants.m32 - 1.0).abs() < 1e-15);
        assert_eq!(nf.constants.m1, 0.0);
        assert_eq!(nf.constants.m12, 0.0);
        assert!(nf.aux.beta.max_coeff() < 1e-15);
        assert!(nf.aux.p.max_coeff() < 1e-15);
        assert!((nf.aux.rho.max_abs() - 1.0).abs() < 1e-15);
        assert!(nf.aux.a1d.max_coeff() < 1e-15);
        assert!(nf.aux.b1.max_coeff() == 0.0 && nf.aux.b2.max_coeff() == 0.0);
    }

    #[test]
    fn profile_c_matches_pointwise_formula() {
        let jv = [1];
        let a = 0.1;
        let eta = TravelingProfile::from_fn(&jv, 8, 8, |s| a * s[0].cos());
        let c = profile_c(&eta);
        // η(φ,x) = a cos(φ − x), η_x = a sin(φ − x).
        for &(phi, x) in &[(0.3, 1.1), (2.0, -0.4), (5.0, 3.3)] {
            let ex = a * f64::sin(phi - x);
            let want = (1.0 + ex * ex).powf(-1.5);
            assert!((c.eval_phase(&[phi], x) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_equation_and_parity() {
        let (eta, _) = surface(0.02);
        let c = profile_c(&eta);
        assert!(c.parity_defect(true) < 1e-16);
        let b = solve_beta(&c);
        assert!(b.residual < 1e-10, "{}", b.residual);
        assert!(b.beta.parity_defect(false) < 1e-16);
        let c1 = constant_like(&c, 1.0);
        let triv = solve_beta(&c1);
        assert!(triv.beta.max_coeff() < 1e-15);
        assert!((triv.m_of_phi.max_abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn m32_matches_quadrature_expansion() {
        let eps = 0.05;
        let eta = TravelingProfile::from_fn(&[1], 6, 6, |s| eps * s[0].cos());
        let t = reparametrize_time(&eta, &[1.3], &NormalFormConfig::default()).unwrap();
        // ⟨√(1 + ε² sin²x)⟩ by the trapezoid rule, exponentially accurate.
        let n = 4096;
        let avg: f64 = (0..n)
            .map(|k| {
                let s = (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin();
                (1.0 + eps * eps * s * s).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        assert!((t.m32 - avg.powf(-1.5)).abs() < 1e-14);
        assert!((t.m32 - (1.0 - 0.375 * eps * eps)).abs() < eps.powi(4));
        // ν = 1: the x-average is angle independent, so p = 0 and ρ = 1.
        assert!(t.p.max_coeff() < 1e-15);
        assert!(t.residual < 1e-14);
    }

    #[test]
    fn reduction_identities_hold_on_small_surface() {
        let (eta, psi) = surface(1e-2);
        let nf = reduce(&physics(), &eta, &psi, &[1.07, 1.93], &NormalFormConfig::default(), "t").unwrap();
        assert!(nf.residuals.max() < 1e-8, "{:?}", nf.residuals);
        let a = &nf.aux;
        assert!(a.p.parity_defect(false) < 1e-15);
        assert!(a.beta.parity_defect(false) < 1e-15);
        assert!(a.b1.parity_defect(false) < 1e-15);
        assert!(a.b3.parity_defect(false) < 1e-15);
        assert!(a.a1d.parity_defect(true) < 1e-15);
        assert!(a.a3d.parity_defect(true) < 1e-15);
        assert!(a.q.parity_defect(true) < 1e-15);
        // ϱ, b₂, p depend on φ only.
        for u in [&a.varrho, &a.b2, &a.p, &a.rho] {
            assert!(u.minus(&u.x_mean()).max_coeff() < 1e-15);
        }
        assert!((nf.constants.m32 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trivial_constants_give_unperturbed_model() {
        let rc = ReductionConstants {
            m32: 1.0,
            m1: 0.0,
            m12: 0.0,
            n_phi: 0,
            n_modes: 0,
            torus_id: String::new(),
        };
        let p = physics();
        let fm = frequency_model(&rc, &p);
        for j in [-5, -1, 1, 3, 8] {
            assert_eq!(fm.mu(j), p.big_omega(j));
        }
    }
}
