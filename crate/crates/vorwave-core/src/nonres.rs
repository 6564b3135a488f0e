//! Small divisors: Diophantine margins, momentum-constrained Melnikov
//! conditions, transversality scans in the surface tension and grid
//! estimates of the measure of nearly resonant tension values.
//!
//! Throughout, `⟨ℓ⟩ = max(1, |ℓ|_1)` and the lattice is truncated to
//! `|ℓ|_1 ≤ ell_max`.

use crate::dispersion::WavePhysics;
use crate::fields::bracket;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NonresError {
    #[error("invalid site selection: {0}")]
    Sites(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("index set {0:?} is not admissible for its family")]
    NotAdmissible(MelnikovTriple),
    #[error("kappa grid step {step:.3e} does not resolve sets of width {width:.3e}")]
    Resolution { step: f64, width: f64 },
    #[error("kappa grid of {points} points is too coarse for derivatives of order {order}")]
    GridTooCoarse { points: usize, order: usize },
}

/// Tangential sites `S = {σ_a n̄_a}` and the wave vector `ȷ⃗ = (σ_a n̄_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSelection {
    pub splus: Vec<u64>,
    pub sigma: Vec<i8>,
}

impl SiteSelection {
    /// Requires `1 ≤ n̄_1 < … < n̄_ν` and signs in `{−1, +1}`.
    pub fn new(splus: Vec<u64>, sigma: Vec<i8>) -> Result<SiteSelection, NonresError> {
        let s = SiteSelection { splus, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), NonresError> {
        if self.splus.is_empty() {
            return Err(NonresError::Sites("at least one site is required".into()));
        }
        if self.splus.len() != self.sigma.len() {
            return Err(NonresError::Sites(format!(
                "{} moduli but {} signs",
                self.splus.len(),
                self.sigma.len()
            )));
        }
        if self.splus[0] == 0 || self.splus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NonresError::Sites("moduli must be positive and strictly increasing".into()));
        }
        if self.sigma.iter().any(|&s| s != 1 && s != -1) {
            return Err(NonresError::Sites("signs must be +1 or -1".into()));
        }
        Ok(())
    }

    /// Arbitrary signed sites, without the distinct-moduli requirement.
    /// Used for degenerate configurations that the constructor rejects.
    pub fn from_signed_unchecked(sites: &[i64]) -> SiteSelection {
        SiteSelection {
            splus: sites.iter().map(|j| j.unsigned_abs()).collect(),
            sigma: sites.iter().map(|j| j.signum() as i8).collect(),
        }
    }

    pub fn nu(&self) -> usize {
        self.splus.len()
    }

    /// `ȷ⃗`, which is also the ordered list of signed sites.
    pub fn jvec(&self) -> Vec<i64> {
        self.splus
            .iter()
            .zip(&self.sigma)
            .map(|(&n, &s)| s as i64 * n as i64)
            .collect()
    }

    pub fn is_tangential(&self, j: i64) -> bool {
        self.jvec().contains(&j)
    }

    /// `j ∈ S_0^c`: neither zero nor tangential.
    pub fn is_normal(&self, j: i64) -> bool {
        j != 0 && !self.is_tangential(j)
    }

    /// `Ω⃗(κ) = (Ω_{j_a}(κ))`.
    pub fn tangential_frequencies(&self, p: &WavePhysics) -> Vec<f64> {
        self.jvec().iter().map(|&j| p.big_omega(j)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonresConfig {
    pub upsilon: f64,
    pub tau: f64,
    /// Highest κ-derivative used in transversality scans.
    pub m0: usize,
    /// Lattice truncation `|ℓ|_1 ≤ ell_max`.
    pub ell_max: usize,
    /// Number of κ grid points.
    pub kappa_grid: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Normal sites are restricted to `|j| ≤ j_cutoff`.
    pub j_cutoff: usize,
    /// Constant `C` in the a-priori restrictions `|j|^{3/2} ≤ C⟨ℓ⟩` and analogues.
    pub c_restrict: f64,
}

impl Default for NonresConfig {
    fn default() -> Self {
        NonresConfig {
            upsilon: 1e-3,
            tau: 2.5,
            m0: 4,
            ell_max: 6,
            kappa_grid: 2001,
            kappa_min: 0.5,
            kappa_max: 2.0,
            j_cutoff: 40,
            c_restrict: 8.0,
        }
    }
}

impl NonresConfig {
    pub fn validate(&self, nu: usize) -> Result<(), NonresError> {
        let bad = |m: String| Err(NonresError::Config(m));
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) {
            return bad(format!("upsilon must lie in (0,1), got {}", self.upsilon));
        }
        if !(self.tau > nu as f64 - 1.0) {
            return bad(format!("tau must exceed nu - 1 = {}, got {}", nu as f64 - 1.0, self.tau));
        }
        if self.ell_max == 0 || self.j_cutoff == 0 || self.kappa_grid < 2 {
            return bad("ell_max, j_cutoff and kappa_grid must be positive (grid >= 2)".into());
        }
        if !(self.kappa_min > 0.0 && self.kappa_max > self.kappa_min) {
            return bad(format!(
                "kappa range [{}, {}] must be positive and non-empty",
                self.kappa_min, self.kappa_max
            ));
        }
        if !(self.c_restrict > 0.0) {
            return bad("c_restrict must be positive".into());
        }
        Ok(())
    }

    pub fn kappa_points(&self) -> Vec<f64> {
        let n = self.kappa_grid;
        let h = (self.kappa_max - self.kappa_min) / n as f64;
        (0..n).map(|i| self.kappa_min + (i as f64 + 0.5) * h).collect()
    }
}

/// Normal frequencies `μ_j = m32·Ω_j + m1·j + m12·|j|^{1/2} + r_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyModel {
    pub m32: f64,
    pub m1: f64,
    pub m12: f64,
    pub physics: WavePhysics,
    /// Optional remainders `r_j`; missing entries are zero.
    #[serde(default)]
    pub r: BTreeMap<i64, f64>,
}

impl FrequencyModel {
    /// `μ_j = Ω_j`.
    pub fn unperturbed(physics: WavePhysics) -> FrequencyModel {
        FrequencyModel {
            m32: 1.0,
            m1: 0.0,
            m12: 0.0,
            physics,
            r: BTreeMap::new(),
        }
    }

    pub fn mu(&self, j: i64) -> f64 {
        self.m32 * self.physics.big_omega(j)
            + self.m1 * j as f64
            + self.m12 * (j.unsigned_abs() as f64).sqrt()
            + self.r.get(&j).copied().unwrap_or(0.0)
    }

    /// `∂_κ^n μ_j` for constant coefficients, `n ≥ 1`.
    pub fn mu_kappa_derivative(&self, j: i64, n: u32) -> f64 {
        self.m32 * self.physics.omega_kappa_derivative(j, n)
    }
}

/// Melnikov family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelnikovClass {
    /// `|ω·ℓ|`, `ℓ ≠ 0`.
    Zeroth,
    /// `|ω·ℓ + μ_j|` with `ȷ⃗·ℓ + j = 0`.
    First,
    /// `|ω·ℓ + μ_j − μ_{j'}|` with `ȷ⃗·ℓ + j − j' = 0`.
    SecondMinus,
    /// `|ω·ℓ + μ_j + μ_{j'}|` with `ȷ⃗·ℓ + j + j' = 0`.
    SecondPlus,
}

impl MelnikovClass {
    pub const ALL: [MelnikovClass; 4] = [
        MelnikovClass::Zeroth,
        MelnikovClass::First,
        MelnikovClass::SecondMinus,
        MelnikovClass::SecondPlus,
    ];

    /// Signs of `μ_j` and `μ_{j'}` in the combination.
    fn signs(self) -> (f64, f64) {
        match self {
            MelnikovClass::Zeroth => (0.0, 0.0),
            MelnikovClass::First => (1.0, 0.0),
            MelnikovClass::SecondMinus => (1.0, -1.0),
            MelnikovClass::SecondPlus => (1.0, 1.0),
        }
    }
}

/// One index set of a Melnikov family; unused normal sites are zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MelnikovTriple {
    pub class: MelnikovClass,
    pub ell: Vec<i64>,
    pub j: i64,
    pub jp: i64,
}

impl MelnikovTriple {
    /// Momentum constraint and site membership, ignoring the size restrictions.
    pub fn is_admissible(&self, sites: &SiteSelection) -> bool {
        let jl: i64 = sites.jvec().iter().zip(&self.ell).map(|(a, b)| a * b).sum();
        let zero_ell = self.ell.iter().all(|&v| v == 0);
        if self.ell.len() != sites.nu() {
            return false;
        }
        match self.class {
            MelnikovClass::Zeroth => !zero_ell && self.j == 0 && self.jp == 0,
            MelnikovClass::First => sites.is_normal(self.j) && jl + self.j == 0 && self.jp == 0,
            MelnikovClass::SecondMinus => {
                sites.is_normal(self.j)
                    && sites.is_normal(self.jp)
                    && jl + self.j - self.jp == 0
                    && !(zero_ell && self.j == self.jp)
            }
            MelnikovClass::SecondPlus => {
                sites.is_normal(self.j) && sites.is_normal(self.jp) && jl + self.j + self.jp == 0
            }
        }
    }

    /// `ω·ℓ + s·μ_j + s'·μ_{j'}`.
    pub fn combination(&self, omega: &[f64], mu: impl Fn(i64) -> f64) -> f64 {
        let (s, sp) = self.class.signs();
        let mut v: f64 = omega.iter().zip(&self.ell).map(|(w, &l)| w * l as f64).sum();
        if s != 0.0 {
            v += s * mu(self.j);
        }
        if sp != 0.0 {
            v += sp * mu(self.jp);
        }
        v
    }

    /// Right-hand side weight of the Melnikov condition.
    pub fn weight(&self, upsilon: f64, tau: f64) -> f64 {
        let a = (self.j.unsigned_abs() as f64).powf(1.5);
        let b = (self.jp.unsigned_abs() as f64).powf(1.5);
        let decay = bracket(&self.ell).powf(-tau);
        match self.class {
            MelnikovClass::Zeroth => 8.0 * upsilon * decay,
            MelnikovClass::First => 4.0 * upsilon * a * decay,
            MelnikovClass::SecondMinus => 4.0 * upsilon * (a - b).abs().max(1.0) * decay,
            MelnikovClass::SecondPlus => 4.0 * upsilon * (a + b) * decay,
        }
    }
}

/// All `ℓ ∈ Z^ν` with `|ℓ|_1 ≤ max`, in lexicographic order.
pub fn lattice(nu: usize, max: usize) -> Vec<Vec<i64>> {
    fn rec(nu: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == nu {
            out.push(cur.clone());
            return;
        }
        for v in -left..=left {
            cur.push(v);
            rec(nu, left - v.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(nu, max as i64, &mut Vec::with_capacity(nu), &mut out);
    out
}

/// `min_{0<|ℓ|_1≤ell_max} |ω·ℓ|⟨ℓ⟩^τ` and a minimizing `ℓ`.
pub fn diophantine_margin(omega: &[f64], ell_max: usize, tau: f64) -> (f64, Vec<i64>) {
    let mut best = (f64::INFINITY, vec![0; omega.len()]);
    for ell in lattice(omega.len(), ell_max) {
        if ell.iter().all(|&v| v == 0) {
            continue;
        }
        let d: f64 = omega.iter().zip(&ell).map(|(w, &l)| w * l as f64).sum();
        let m = d.abs() * bracket(&ell).powf(tau);
        if m < best.0 {
            best = (m, ell);
        }
    }
    best
}

/// Admissible index sets of all four families with `|ℓ|_1 ≤ ell_max`,
/// `|j|, |j'| ≤ j_cutoff` and the a-priori restrictions with constant `c`:
/// `|j|^{3/2} ≤ c⟨ℓ⟩`, `||j|^{3/2} − |j'|^{3/2}| ≤ c⟨ℓ⟩`, `|j|^{3/2} + |j'|^{3/2} ≤ c⟨ℓ⟩`.
pub fn momentum_triples(
    sites: &SiteSelection,
    ell_max: usize,
    j_cutoff: usize,
    c: f64,
) -> Vec<MelnikovTriple> {
    let jvec = sites.jvec();
    let jc = j_cutoff as i64;
    let p32 = |j: i64| (j.unsigned_abs() as f64).powf(1.5);
    let mut out = Vec::new();
    for ell in lattice(sites.nu(), ell_max) {
        let br = bracket(&ell);
        let jl: i64 = jvec.iter().zip(&ell).map(|(a, b)| a * b).sum();
        let zero = ell.iter().all(|&v| v == 0);
        if !zero {
            out.push(MelnikovTriple {
                class: MelnikovClass::Zeroth,
                ell: ell.clone(),
                j: 0,
                jp: 0,
            });
        }
        let j = -jl;
        if j.abs() <= jc && sites.is_normal(j) && p32(j) <= c * br {
            out.push(MelnikovTriple {
                class: MelnikovClass::First,
                ell: ell.clone(),
                j,
                jp: 0,
            });
        }
        for j in -jc..=jc {
            if !sites.is_normal(j) {
                continue;
            }
            let jp = j + jl;
            if jp.abs() <= jc && sites.is_normal(jp) && !(zero && j == jp) && (p32(j) - p32(jp)).abs() <= c * br {
                out.push(MelnikovTriple {
                    class: MelnikovClass::SecondMinus,
                    ell: ell.clone(),
                    j,
                    jp,
                });
            }
            let jq = -jl - j;
            if jq.abs() <= jc && sites.is_normal(jq) && p32(j) + p32(jq) <= c * br {
                out.push(MelnikovTriple {
                    class: MelnikovClass::SecondPlus,
                    ell: ell.clone(),
                    j,
                    jp: jq,
                });
            }
        }
    }
    out
}

/// `|ω·ℓ + …| / weight`; values `≥ 1` satisfy the condition.
pub fn melnikov_margin(
    model: &FrequencyModel,
    sites: &SiteSelection,
    omega: &[f64],
    triple: &MelnikovTriple,
    upsilon: f64,
    tau: f64,
) -> Result<f64, NonresError> {
    if !triple.is_admissible(sites) {
        return Err(NonresError::NotAdmissible(triple.clone()));
    }
    Ok(triple.combination(omega, |j| model.mu(j)).abs() / triple.weight(upsilon, tau))
}

/// How κ-derivatives are obtained in transversality scans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Closed-form chain `∂_κ^n ω_j = c̃_n λ_j^n ω_j`.
    ClosedForm,
    /// Central finite differences on the κ grid.
    FiniteDifference,
}

/// `f(κ) = Ω⃗(κ)·ℓ + s Ω_j(κ) + s' Ω_{j'}(κ)` for an unperturbed triple.
fn combination_at(p: &WavePhysics, jvec: &[i64], t: &MelnikovTriple) -> f64 {
    let omega: Vec<f64> = jvec.iter().map(|&j| p.big_omega(j)).collect();
    t.combination(&omega, |j| p.big_omega(j))
}

fn derivative_at(p: &WavePhysics, jvec: &[i64], t: &MelnikovTriple, n: u32) -> f64 {
    let (s, sp) = t.class.signs();
    let mut v: f64 = jvec
        .iter()
        .zip(&t.ell)
        .map(|(&j, &l)| l as f64 * p.omega_kappa_derivative(j, n))
        .sum();
    if s != 0.0 {
        v += s * p.omega_kappa_derivative(t.j, n);
    }
    if sp != 0.0 {
        v += sp * p.omega_kappa_derivative(t.jp, n);
    }
    v
}

/// `max_{0≤n≤m0} |∂_κ^n f(κ)| / ⟨ℓ⟩` on the grid, via the closed forms.
pub fn transversality_profile(
    p: &WavePhysics,
    sites: &SiteSelection,
    cfg: &NonresConfig,
    t: &MelnikovTriple,
    mode: DerivativeMode,
) -> Result<Vec<f64>, NonresError> {
    let jvec = sites.jvec();
    let kappas = cfg.kappa_points();
    let br = bracket(&t.ell);
    match mode {
        DerivativeMode::ClosedForm => Ok(kappas
            .iter()
            .map(|&k| {
                let q = p.with_kappa(k);
                let mut best = combination_at(&q, &jvec, t).abs();
                for n in 1..=cfg.m0 as u32 {
                    best = best.max(derivative_at(&q, &jvec, t, n).abs());
                }
                best / br
            })
            .collect()),
        DerivativeMode::FiniteDifference => {
            let stencil = cfg.m0 + 1;
            if kappas.len() < stencil + 2 {
                return Err(NonresError::GridTooCoarse {
                    points: kappas.len(),
                    order: cfg.m0,
                });
            }
            let h = kappas[1] - kappas[0];
            let f: Vec<f64> = kappas.iter().map(|&k| combination_at(&p.with_kappa(k), &jvec, t)).collect();
            let half = stencil / 2 + 1;
            Ok((0..f.len())
                .map(|i| {
                    // Shift the stencil inward near the ends.
                    let c = i.clamp(half, f.len() - 1 - half);
                    let mut best = f[i].abs();
                    let mut diff: Vec<f64> = f[c - half..=c + half].to_vec();
                    for _n in 1..=cfg.m0 {
                        // Central differences of increasing order via repeated
                        // two-point averages of forward differences.
                        let next: Vec<f64> = diff.windows(2).map(|w| (w[1] - w[0]) / h).collect();
                        diff = next;
                        let mid = diff.len() / 2;
                        let est = if diff.len() % 2 == 0 {
                            0.5 * (diff[mid - 1] + diff[mid])
                        } else {
                            diff[mid]
                        };
                        best = best.max(est.abs());
                    }
                    best / br
                })
                .collect())
        }
    }
}

/// Lower bound of one family over the κ grid.
#[derive(Clone, Debug, Serialize)]
pub struct TransversalityReport {
    pub class: MelnikovClass,
    /// `min_κ min_triples max_n |∂_κ^n f|/⟨ℓ⟩`.
    pub lower_bound: f64,
    pub argmin_kappa: f64,
    pub worst: Option<MelnikovTriple>,
    pub triples_scanned: usize,
}

/// Scans one index set: `(lower bound, argmin κ)`.
pub fn transversality_scan(
    p: &WavePhysics,
    sites: &SiteSelection,
    cfg: &NonresConfig,
    t: &MelnikovTriple,
) -> Result<(f64, f64), NonresError> {
    let prof = transversality_profile(p, sites, cfg, t, DerivativeMode::ClosedForm)?;
    let kappas = cfg.kappa_points();
    let (i, v) = prof
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    Ok((v, kappas[i]))
}

/// Scans every enumerated index set of `class`.
pub fn family_transversality(
    p: &WavePhysics,
    sites: &SiteSelection,
    cfg: &NonresConfig,
    class: MelnikovClass,
) -> Result<TransversalityReport, NonresError> {
    cfg.validate(sites.nu())?;
    let triples: Vec<MelnikovTriple> = momentum_triples(sites, cfg.ell_max, cfg.j_cutoff, cfg.c_restrict)
        .into_iter()
        .filter(|t| t.class == class)
        .collect();
    let results: Result<Vec<(f64, f64)>, NonresError> =
        triples.par_iter().map(|t| transversality_scan(p, sites, cfg, t)).collect();
    let results = results?;
    let mut report = TransversalityReport {
        class,
        lower_bound: f64::INFINITY,
        argmin_kappa: f64::NAN,
        worst: None,
        triples_scanned: triples.len(),
    };
    for (t, (v, k)) in triples.iter().zip(results) {
        if v < report.lower_bound {
            report.lower_bound = v;
            report.argmin_kappa = k;
            report.worst = Some(t.clone());
        }
    }
    Ok(report)
}

/// Excluded κ-measure per family over the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonantSetEstimate {
    pub r0: f64,
    pub r_i: f64,
    pub r_ii: f64,
    pub q_ii: f64,
    /// Measure of the union of all four families.
    pub total: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub grid_points: usize,
    pub upsilon: f64,
    pub tau: f64,
    pub ell_max: usize,
    pub j_cutoff: usize,
    pub epsilon: f64,
    pub families_scanned: usize,
    /// Maximal runs of excluded grid cells, as `[start, end]` in κ.
    pub excluded_intervals: Vec<(f64, f64)>,
}

/// Index sets of the measure union: the `j = j'` members of the difference
/// family are dropped since they are contained in the zeroth family.
pub fn measure_families(sites: &SiteSelection, cfg: &NonresConfig) -> Vec<MelnikovTriple> {
    momentum_triples(sites, cfg.ell_max, cfg.j_cutoff, cfg.c_restrict)
        .into_iter()
        .filter(|t| !(t.class == MelnikovClass::SecondMinus && t.j == t.jp))
        .collect()
}

/// Grid estimate of the nearly-resonant κ-sets. `model_at(κ)` supplies the
/// normal frequencies; tangential frequencies are `Ω⃗(κ)` of the model's fluid.
pub fn measure_estimate<M>(
    model_at: M,
    sites: &SiteSelection,
    cfg: &NonresConfig,
    epsilon: f64,
) -> Result<ResonantSetEstimate, NonresError>
where
    M: Fn(f64) -> FrequencyModel + Sync,
{
    cfg.validate(sites.nu())?;
    let triples = measure_families(sites, cfg);
    let kappas = cfg.kappa_points();
    let step = kappas.get(1).map(|k| k - kappas[0]).unwrap_or(cfg.kappa_max - cfg.kappa_min);
    let jvec = sites.jvec();

    // Resolution guard: narrowest set width 2·weight/max|f'| on a coarse probe.
    let probe: Vec<f64> = (0..17)
        .map(|i| cfg.kappa_min + (cfg.kappa_max - cfg.kappa_min) * i as f64 / 16.0)
        .collect();
    let width = triples
        .par_iter()
        .map(|t| {
            let slope = probe
                .iter()
                .map(|&k| {
                    let m = model_at(k);
                    let (s, sp) = t.class.signs();
                    let mut d: f64 = jvec
                        .iter()
                        .zip(&t.ell)
                        .map(|(&j, &l)| l as f64 * m.physics.omega_kappa_derivative(j, 1))
                        .sum();
                    if s != 0.0 {
                        d += s * m.mu_kappa_derivative(t.j, 1);
                    }
                    if sp != 0.0 {
                        d += sp * m.mu_kappa_derivative(t.jp, 1);
                    }
                    d.abs()
                })
                .fold(0.0, f64::max);
            if slope > 0.0 {
                2.0 * t.weight(cfg.upsilon, cfg.tau) / slope
            } else {
                f64::INFINITY
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    if step > width {
        return Err(NonresError::Resolution { step, width });
    }

    // Families compiled to table lookups; the weights do not depend on κ.
    let jc = cfg.j_cutoff as i64;
    let slot = |j: i64| (j + jc) as usize;
    let compiled: Vec<(u8, Vec<f64>, f64, f64, usize, usize, f64)> = triples
        .iter()
        .map(|t| {
            let (s, sp) = t.class.signs();
            (
                1u8 << (t.class as u8),
                t.ell.iter().map(|&l| l as f64).collect(),
                s,
                sp,
                slot(t.j),
                slot(t.jp),
                t.weight(cfg.upsilon, cfg.tau),
            )
        })
        .collect();
    // Per grid point: which families exclude it (bit = class).
    let flags: Vec<u8> = kappas
        .par_iter()
        .map_init(
            || vec![0.0; 2 * cfg.j_cutoff + 1],
            |mu, &k| {
                let m = model_at(k);
                for (i, v) in mu.iter_mut().enumerate() {
                    *v = m.mu(i as i64 - jc);
                }
                let omega: Vec<f64> = jvec.iter().map(|&j| m.physics.big_omega(j)).collect();
                let mut f = 0u8;
                for (bit, ell, s, sp, a, b, w) in &compiled {
                    if f & bit != 0 {
                        continue;
                    }
                    let mut v: f64 = omega.iter().zip(ell).map(|(x, l)| x * l).sum();
                    v += s * mu[*a] + sp * mu[*b];
                    if v.abs() < *w {
                        f |= bit;
                    }
                }
                f
            },
        )
        .collect();
    let count = |bit: u8| flags.iter().filter(|&&f| f & bit != 0).count() as f64 * step;
    let mut intervals = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f != 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                intervals.push((kappas[s] - 0.5 * step, kappas[i - 1] + 0.5 * step));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        intervals.push((kappas[s] - 0.5 * step, cfg.kappa_max));
    }
    Ok(ResonantSetEstimate {
        r0: count(1 << MelnikovClass::Zeroth as u8),
        r_i: count(1 << MelnikovClass::First as u8),
        r_ii: count(1 << MelnikovClass::SecondMinus as u8),
        q_ii: count(1 << MelnikovClass::SecondPlus as u8),
        total: flags.iter().filter(|&&f| f != 0).count() as f64 * step,
        kappa_min: cfg.kappa_min,
        kappa_max: cfg.kappa_max,
        grid_points: kappas.len(),
        upsilon: cfg.upsilon,
        tau: cfg.tau,
        ell_max: cfg.ell_max,
        j_cutoff: cfg.j_cutoff,
        epsilon,
        families_scanned: triples.len(),
        excluded_intervals: intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::Depth;

    fn two_sites() -> SiteSelection {
        SiteSelection::new(vec![1, 2], vec![1, 1]).unwrap()
    }

    #[test]
    fn unit_frequency_margin() {
        let (m, ell) = diophantine_margin(&[1.0], 10, 2.0);
        assert_eq!(m, 1.0);
        assert_eq!(ell[0].abs(), 1);
    }

    #[test]
    fn resonant_pair_has_zero_margin() {
        let (m, ell) = diophantine_margin(&[1.0, 1.0], 5, 1.5);
        assert_eq!(m, 0.0);
        assert_eq!(ell[0], -ell[1]);
    }

    #[test]
    fn site_validation() {
        assert!(SiteSelection::new(vec![2, 1], vec![1, 1]).is_err());
        assert!(SiteSelection::new(vec![1, 1], vec![1, -1]).is_err());
        assert!(SiteSelection::new(vec![1], vec![0]).is_err());
        assert_eq!(SiteSelection::new(vec![1, 3], vec![-1, 1]).unwrap().jvec(), vec![-1, 3]);
    }

    #[test]
    fn first_family_partner_is_forced() {
        let s = SiteSelection::new(vec![1], vec![1]).unwrap();
        let t = momentum_triples(&s, 2, 10, 100.0);
        let first: Vec<_> = t.iter().filter(|t| t.class == MelnikovClass::First && t.ell == vec![2]).collect();
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].j, -2);
    }

    #[test]
    fn diagonal_difference_excluded_at_zero_ell() {
        let t = momentum_triples(&two_sites(), 3, 10, 100.0);
        assert!(!t
            .iter()
            .any(|t| t.class == MelnikovClass::SecondMinus && t.ell.iter().all(|&v| v == 0) && t.j == t.jp));
        assert!(t.iter().all(|x| x.is_admissible(&two_sites())));
    }

    #[test]
    fn trivial_model_reduces_to_dispersion() {
        let p = WavePhysics::new(1.0, 1.2, 0.4, Depth::Infinite).unwrap();
        let m = FrequencyModel::unperturbed(p);
        for j in [-5, -1, 3, 7] {
            assert_eq!(m.mu(j), p.big_omega(j));
        }
    }

    #[test]
    fn lattice_size() {
        // |ℓ|_1 ≤ 2 in two dimensions: 1 + 4 + 8.
        assert_eq!(lattice(2, 2).len(), 13);
    }

    #[test]
    fn inadmissible_triple_is_rejected() {
        let p = WavePhysics::new(1.0, 1.0, 0.0, Depth::Infinite).unwrap();
        let m = FrequencyModel::unperturbed(p);
        let t = MelnikovTriple {
            class: MelnikovClass::Zeroth,
            ell: vec![0, 0],
            j: 0,
            jp: 0,
        };
        assert!(melnikov_margin(&m, &two_sites(), &[1.0, 2.0], &t, 0.1, 2.0).is_err());
    }
}
