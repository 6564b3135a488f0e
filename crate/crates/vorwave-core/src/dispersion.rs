//! Linear dispersion of gravity-capillary waves over a flat bottom with
//! constant vorticity.
//!
//! With `G_j = j·tanh(hj)` (or `|j|` at infinite depth) and
//! `L_j = κj² + g + (γ²/4)G_j/j²`:
//!
//! * `M_j = (G_j/L_j)^{1/4}`, `ω_j = (G_j L_j)^{1/2}`, `Ω_j = ω_j + (γ/2)G_j/j`;
//! * `λ_j = G_j j²/(2ω_j²)` and `λ_0 = 1/(2κ)`, so that `∂_κ ω_j = λ_j ω_j`;
//! * `∂_κ^n ω_j = c̃_n λ_j^n ω_j` with `c̃_n = ∏_{k=1}^n (3 − 2k)`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DispersionError {
    #[error("the symbol is undefined at j = 0")]
    ZeroMode,
    #[error("invalid physical parameters: {0}")]
    InvalidPhysics(String),
    #[error("derivative order must be at least 1")]
    ZeroOrder,
}

/// Above this `h|j|`, `tanh(h|j|)` is 1 in double precision.
const TANH_SATURATION: f64 = 20.0;

/// Fluid depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Depth {
    Finite(f64),
    Infinite,
}

impl Serialize for Depth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Depth::Finite(h) => s.serialize_f64(*h),
            Depth::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Depth, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(h) => Ok(Depth::Finite(h)),
            Raw::Text(t) => t.parse::<Depth>().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Depth {
    type Err = String;
    fn from_str(t: &str) -> Result<Depth, String> {
        match t.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(Depth::Infinite),
            other => other
                .parse::<f64>()
                .map(|h| if h.is_infinite() { Depth::Infinite } else { Depth::Finite(h) })
                .map_err(|_| format!("depth must be a positive number or 'inf', got '{t}'")),
        }
    }
}

/// Physical parameters: gravity, surface tension, vorticity, depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePhysics {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub depth: Depth,
}

impl WavePhysics {
    pub fn new(g: f64, kappa: f64, gamma: f64, depth: Depth) -> Result<WavePhysics, DispersionError> {
        let p = WavePhysics { g, kappa, gamma, depth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DispersionError> {
        let bad = |m: String| Err(DispersionError::InvalidPhysics(m));
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad(format!("g must be positive, got {}", self.g));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !self.gamma.is_finite() {
            return bad("gamma must be finite".into());
        }
        if let Depth::Finite(h) = self.depth {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("depth must be positive, got {h}"));
            }
        }
        Ok(())
    }

    /// Same fluid at another surface tension.
    pub fn with_kappa(&self, kappa: f64) -> WavePhysics {
        WavePhysics { kappa, ..*self }
    }

    /// Flat-surface Dirichlet–Neumann symbol; zero at `j = 0`, even in `j`.
    pub fn g0(&self, j: i64) -> f64 {
        let a = j.unsigned_abs() as f64;
        match self.depth {
            Depth::Infinite => a,
            Depth::Finite(h) => {
                if h * a > TANH_SATURATION {
                    a
                } else {
                    a * (h * a).tanh()
                }
            }
        }
    }

    /// `L_j = κj² + g + (γ²/4)G_j/j²`, for `j ≠ 0`.
    fn big_l(&self, j: i64) -> f64 {
        let jf = j as f64;
        self.kappa * jf * jf + self.g + 0.25 * self.gamma * self.gamma * self.g0(j) / (jf * jf)
    }

    /// `M_j`; requires `j ≠ 0`.
    pub fn m(&self, j: i64) -> f64 {
        debug_assert!(j != 0);
        (self.g0(j) / self.big_l(j)).sqrt().sqrt()
    }

    /// `ω_j`; `ω_0 = 0` for the physical mean mode.
    pub fn omega(&self, j: i64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        (self.g0(j) * self.big_l(j)).sqrt()
    }

    /// `ω̃_j`: equals `ω_j` for `j ≠ 0` and `√κ` at `j = 0`.
    pub fn omega_tilde(&self, j: i64) -> f64 {
        if j == 0 {
            self.kappa.sqrt()
        } else {
            self.omega(j)
        }
    }

    /// Vorticity shift `(γ/2)G_j/j`, odd in `j`; zero at `j = 0`.
    pub fn vorticity_shift(&self, j: i64) -> f64 {
        if j == 0 {
            0.0
        } else {
            0.5 * self.gamma * self.g0(j) / j as f64
        }
    }

    /// `Ω_j = ω_j + (γ/2)G_j/j`; `Ω_0 = 0`.
    pub fn big_omega(&self, j: i64) -> f64 {
        self.omega(j) + self.vorticity_shift(j)
    }

    /// `λ_j`, with `λ_0 = 1/(2κ)`.
    pub fn lambda(&self, j: i64) -> f64 {
        if j == 0 {
            return 0.5 / self.kappa;
        }
        let jf = j as f64;
        let w = self.omega(j);
        self.g0(j) * jf * jf / (2.0 * w * w)
    }

    /// `P_{σn} = (γ/2)M_n/n + σ/M_n`.
    pub fn p_coeff(&self, n: u64, sign: i8) -> f64 {
        let m = self.m(n as i64);
        0.5 * self.gamma * m / n as f64 + sign.signum() as f64 / m
    }

    /// `∂_κ^n ω̃_j = c̃_n λ_j^n ω̃_j` (`n ≥ 1`); also `∂_κ^n Ω_j` since the
    /// vorticity shift does not depend on κ.
    pub fn omega_kappa_derivative(&self, j: i64, n: u32) -> f64 {
        tilde_c(n) * self.lambda(j).powi(n as i32) * self.omega_tilde(j)
    }

    /// `c_j = (ω_j − √κ|j|^{3/2})√κ|j|^{1/2}`, evaluated without cancellation.
    pub fn remainder(&self, j: i64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let a = j.unsigned_abs() as f64;
        let k = self.kappa;
        let g0 = self.g0(j);
        let w = self.omega(j);
        let lead = k.sqrt() * a.powf(1.5);
        // ω² − κ|j|³ split into terms that are each small or positive.
        let shift = 0.5 * self.gamma * g0 / a;
        let diff = k * a * a * (g0 - a) + self.g * g0 + shift * shift;
        k.sqrt() * a.sqrt() * diff / (w + lead)
    }
}

/// `c̃_n = ∏_{k=1}^n (3 − 2k)`.
pub fn tilde_c(n: u32) -> f64 {
    (1..=n as i64).map(|k| (3 - 2 * k) as f64).product()
}

pub fn g0_symbol(p: &WavePhysics, j: i64) -> Result<f64, DispersionError> {
    nonzero(j)?;
    Ok(p.g0(j))
}

pub fn mj_coeff(p: &WavePhysics, j: i64) -> Result<f64, DispersionError> {
    nonzero(j)?;
    Ok(p.m(j))
}

/// `P_{±n}`; `sign` is `+1` or `−1`.
pub fn pj_coeff(p: &WavePhysics, n: u64, sign: i8) -> Result<f64, DispersionError> {
    if n == 0 {
        return Err(DispersionError::ZeroMode);
    }
    Ok(p.p_coeff(n, sign))
}

pub fn omega_j(p: &WavePhysics, j: i64) -> Result<f64, DispersionError> {
    nonzero(j)?;
    Ok(p.omega(j))
}

pub fn big_omega_j(p: &WavePhysics, j: i64) -> Result<f64, DispersionError> {
    nonzero(j)?;
    Ok(p.big_omega(j))
}

pub fn lambda_j(p: &WavePhysics, j: i64, include_zero: bool) -> Result<f64, DispersionError> {
    if j == 0 && !include_zero {
        return Err(DispersionError::ZeroMode);
    }
    Ok(p.lambda(j))
}

pub fn omega_kappa_derivative(p: &WavePhysics, j: i64, n: u32) -> Result<f64, DispersionError> {
    if n == 0 {
        return Err(DispersionError::ZeroOrder);
    }
    Ok(p.omega_kappa_derivative(j, n))
}

pub fn asymptotic_remainder(p: &WavePhysics, j: i64) -> Result<f64, DispersionError> {
    nonzero(j)?;
    Ok(p.remainder(j))
}

fn nonzero(j: i64) -> Result<(), DispersionError> {
    if j == 0 {
        Err(DispersionError::ZeroMode)
    } else {
        Ok(())
    }
}

/// One row of the dispersion table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DispersionRow {
    pub j: i64,
    #[serde(rename = "G_j")]
    pub g_j: f64,
    #[serde(rename = "M_j")]
    pub m_j: f64,
    pub omega_j: f64,
    #[serde(rename = "Omega_j")]
    pub big_omega_j: f64,
    pub lambda_j: f64,
    pub c_j: f64,
}

/// Rows for `j = −jmax..=jmax`, `j ≠ 0`, in increasing order.
pub fn dispersion_table(p: &WavePhysics, jmax: u64) -> Vec<DispersionRow> {
    let jm = jmax as i64;
    (-jm..=jm)
        .filter(|&j| j != 0)
        .map(|j| DispersionRow {
            j,
            g_j: p.g0(j),
            m_j: p.m(j),
            omega_j: p.omega(j),
            big_omega_j: p.big_omega(j),
            lambda_j: p.lambda(j),
            c_j: p.remainder(j),
        })
        .collect()
}
