//! Truncated Fourier fields.
//!
//! Three containers share one coefficient layout:
//!
//! * [`RealField`]: `u(x) = Σ_{|j|≤N} u_j e^{ijx}` on the circle;
//! * [`TorusField`]: `u(φ,x) = Σ u_{ℓ,j} e^{i(ℓ·φ+jx)}` with `|ℓ|_∞ ≤ n_phi`;
//! * [`TravelingProfile`]: the angle profile `U` of a traveling field
//!   `u(φ,x) = U(φ − ȷ⃗x)`, whose spatial wavenumber at angle mode `ℓ` is `−ȷ⃗·ℓ`.
//!
//! All three implement [`Spectral`], which is what the Dirichlet–Neumann
//! operator and the water-wave vector field are written against. Products and
//! pointwise maps are evaluated on grids padded by the 3/2 rule.

mod spectrum;
mod snapshot;

pub use snapshot::{read_torus_csv, write_torus_csv};
pub use spectrum::{dealiased_len, good_size};

use num_complex::Complex64 as C64;
use spectrum::Spectrum;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field is not a traveling wave: off-support energy fraction {fraction:.3e} exceeds {tol:.1e}")]
    NotTraveling { fraction: f64, tol: f64 },
    #[error("incompatible field shapes: {0}")]
    ShapeMismatch(String),
    #[error("snapshot parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Operations shared by every field container. Multiplier symbols are
/// functions of the spatial wavenumber.
pub trait Spectral: Clone + Send + Sync {
    fn grid_len(&self) -> usize;
    /// Samples on the dealiased grid.
    fn to_grid(&self) -> Vec<f64>;
    /// Field with the layout of `self` built from grid samples.
    fn from_grid_like(&self, values: &[f64]) -> Self;
    fn apply_multiplier<S: Fn(i64) -> C64>(&self, sym: S) -> Self;
    /// `a·self + b·other`.
    fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self;
    /// Largest coefficient modulus.
    fn max_coeff(&self) -> f64;

    fn scale(&self, s: f64) -> Self {
        self.lincomb(s, self, 0.0)
    }
    fn plus(&self, other: &Self) -> Self {
        self.lincomb(1.0, other, 1.0)
    }
    fn minus(&self, other: &Self) -> Self {
        self.lincomb(1.0, other, -1.0)
    }
    fn product(&self, other: &Self) -> Self {
        let a = self.to_grid();
        let b = other.to_grid();
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        self.from_grid_like(&prod)
    }
    fn map_pointwise<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let g: Vec<f64> = self.to_grid().into_iter().map(f).collect();
        self.from_grid_like(&g)
    }
    fn dx(&self) -> Self {
        self.apply_multiplier(|k| C64::new(0.0, k as f64))
    }
    /// Zero-mean antiderivative: symbol `−i/k`, zero at `k = 0`.
    fn dx_inverse(&self) -> Self {
        self.apply_multiplier(|k| {
            if k == 0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, -1.0 / k as f64)
            }
        })
    }
    /// Symbol `−i·sign(k)`, zero at `k = 0`.
    fn hilbert(&self) -> Self {
        self.apply_multiplier(|k| C64::new(0.0, -(k.signum() as f64)))
    }
    /// Spatial mean only.
    fn mean_project(&self) -> Self {
        self.apply_multiplier(|k| C64::new(if k == 0 { 1.0 } else { 0.0 }, 0.0))
    }
    /// `Id − π_0`.
    fn drop_mean(&self) -> Self {
        self.apply_multiplier(|k| C64::new(if k == 0 { 0.0 } else { 1.0 }, 0.0))
    }
}

macro_rules! impl_ops {
    ($t:ty) => {
        impl std::ops::Add for &$t {
            type Output = $t;
            fn add(self, o: &$t) -> $t {
                self.lincomb(1.0, o, 1.0)
            }
        }
        impl std::ops::Sub for &$t {
            type Output = $t;
            fn sub(self, o: &$t) -> $t {
                self.lincomb(1.0, o, -1.0)
            }
        }
        impl std::ops::Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                self.scale(-1.0)
            }
        }
        impl std::ops::Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                self.scale(s)
            }
        }
        impl std::ops::Mul<f64> for $t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                self.scale(s)
            }
        }
        impl std::ops::Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                self.scale(-1.0)
            }
        }
    };
}

fn lincomb_spec(x: &Spectrum, a: f64, y: &Spectrum, b: f64) -> Spectrum {
    assert!(x.same_shape(y), "lincomb on different shapes");
    let data = x.data.iter().zip(&y.data).map(|(u, v)| u * a + v * b).collect();
    Spectrum {
        shape: x.shape.clone(),
        data,
    }
}

fn max_coeff_spec(x: &Spectrum) -> f64 {
    x.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// RealField

/// Real 2π-periodic function stored by its coefficients `u_j`, `|j| ≤ n_modes`,
/// with `u_{−j} = conj(u_j)`.
#[derive(Clone, Debug)]
pub struct RealField {
    spec: Spectrum,
}

impl RealField {
    pub fn zeros(n_modes: usize) -> RealField {
        RealField {
            spec: Spectrum::zeros(&[n_modes], &[dealiased_len(n_modes)]),
        }
    }

    /// Coefficients ordered `j = −n_modes..=n_modes`.
    pub fn from_coeffs(n_modes: usize, coeffs: &[C64]) -> RealField {
        assert_eq!(coeffs.len(), 2 * n_modes + 1, "coefficient count");
        let mut f = RealField::zeros(n_modes);
        f.spec.data.copy_from_slice(coeffs);
        f
    }

    /// Trigonometric interpolant of `f` on the dealiased grid.
    pub fn from_fn<F: Fn(f64) -> f64>(n_modes: usize, f: F) -> RealField {
        let z = RealField::zeros(n_modes);
        let vals: Vec<f64> = z.grid_points().into_iter().map(f).collect();
        z.from_grid_like(&vals)
    }

    /// `amp·cos(jx)`.
    pub fn cos_mode(n_modes: usize, j: i64, amp: f64) -> RealField {
        let mut f = RealField::zeros(n_modes);
        if j == 0 {
            f.set_mode(0, C64::new(amp, 0.0));
        } else {
            f.set_mode(j, C64::new(amp / 2.0, 0.0));
        }
        f
    }

    /// `amp·sin(jx)`.
    pub fn sin_mode(n_modes: usize, j: i64, amp: f64) -> RealField {
        let mut f = RealField::zeros(n_modes);
        if j != 0 {
            f.set_mode(j, C64::new(0.0, -amp / 2.0));
        }
        f
    }

    pub fn n_modes(&self) -> usize {
        self.spec.shape.cuts[0]
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.spec.data
    }

    pub fn coeff(&self, j: i64) -> C64 {
        match self.spec.shape.index(&[j]) {
            Some(i) => self.spec.data[i],
            None => C64::new(0.0, 0.0),
        }
    }

    /// Sets `u_j = c` and `u_{−j} = conj(c)`; modes beyond the cutoff are ignored.
    pub fn set_mode(&mut self, j: i64, c: C64) {
        if let Some(i) = self.spec.shape.index(&[j]) {
            let m = self.spec.shape.mirror(i);
            if i == m {
                self.spec.data[i] = C64::new(c.re, 0.0);
            } else {
                self.spec.data[i] = c;
                self.spec.data[m] = c.conj();
            }
        }
    }

    pub fn grid_points(&self) -> Vec<f64> {
        let m = self.spec.shape.grid[0];
        (0..m).map(|k| 2.0 * PI * k as f64 / m as f64).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.n_modes() as i64;
        let mut s = 0.0;
        for (i, c) in self.spec.data.iter().enumerate() {
            let j = i as i64 - n;
            s += (c * C64::from_polar(1.0, j as f64 * x)).re;
        }
        s
    }

    pub fn mean(&self) -> f64 {
        self.coeff(0).re
    }

    /// `∫_T u dx`.
    pub fn integral(&self) -> f64 {
        2.0 * PI * self.mean()
    }

    /// `(1/2π)∫ u v dx`.
    pub fn inner(&self, other: &RealField) -> f64 {
        let n = self.n_modes().min(other.n_modes()) as i64;
        let mut s = 0.0;
        for j in -n..=n {
            s += (self.coeff(j) * other.coeff(j).conj()).re;
        }
        s
    }

    /// Normalized L² norm `((1/2π)∫u²)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.to_grid().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `u^∨(x) = u(−x)`.
    pub fn reflect(&self) -> RealField {
        let mut out = self.clone();
        out.spec.data.reverse();
        out
    }

    /// `τ_ς u(x) = u(x + ς)`.
    pub fn translate(&self, shift: f64) -> RealField {
        let n = self.n_modes() as i64;
        let mut out = self.clone();
        for (i, c) in out.spec.data.iter_mut().enumerate() {
            let j = i as i64 - n;
            *c *= C64::from_polar(1.0, j as f64 * shift);
        }
        out
    }

    /// Pad or truncate to another cutoff.
    pub fn resize(&self, n_modes: usize) -> RealField {
        RealField {
            spec: self.spec.recut(&[n_modes], &[dealiased_len(n_modes)]),
        }
    }

    /// Relative violation of `u_{−j} = conj(u_j)`.
    pub fn conj_symmetry_defect(&self) -> f64 {
        self.spec.conj_defect()
    }

    /// Coefficients of this field shifted so that the mean mode is zero.
    pub fn is_finite(&self) -> bool {
        self.spec.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Spectral for RealField {
    fn grid_len(&self) -> usize {
        self.spec.shape.grid_len()
    }
    fn to_grid(&self) -> Vec<f64> {
        self.spec.to_grid()
    }
    fn from_grid_like(&self, values: &[f64]) -> Self {
        RealField {
            spec: Spectrum::from_grid(&self.spec.shape, values),
        }
    }
    fn apply_multiplier<S: Fn(i64) -> C64>(&self, sym: S) -> Self {
        let n = self.n_modes() as i64;
        let mut out = self.clone();
        for (i, c) in out.spec.data.iter_mut().enumerate() {
            *c *= sym(i as i64 - n);
        }
        out
    }
    fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        RealField {
            spec: lincomb_spec(&self.spec, a, &other.spec, b),
        }
    }
    fn max_coeff(&self) -> f64 {
        max_coeff_spec(&self.spec)
    }
}

impl_ops!(RealField);

/// Mode-wise multiplication by `sym(j)`.
pub fn apply_multiplier<S: Fn(i64) -> C64>(sym: S, f: &RealField) -> RealField {
    f.apply_multiplier(sym)
}

pub fn dx(f: &RealField) -> RealField {
    f.dx()
}

pub fn dx_inverse(f: &RealField) -> RealField {
    f.dx_inverse()
}

pub fn hilbert(f: &RealField) -> RealField {
    f.hilbert()
}

pub fn mean_project(f: &RealField) -> RealField {
    f.mean_project()
}

/// Dealiased pointwise product; both fields must share the cutoff.
pub fn field_product(f: &RealField, g: &RealField) -> Result<RealField, FieldError> {
    if f.n_modes() != g.n_modes() {
        return Err(FieldError::ShapeMismatch(format!(
            "n_modes {} vs {}",
            f.n_modes(),
            g.n_modes()
        )));
    }
    Ok(f.product(g))
}

// ---------------------------------------------------------------------------
// TorusField

/// Real function on `T^ν × T` with coefficients `u_{ℓ,j}`,
/// `|ℓ|_∞ ≤ n_phi`, `|j| ≤ n_modes`, and `u_{−ℓ,−j} = conj(u_{ℓ,j})`.
#[derive(Clone, Debug)]
pub struct TorusField {
    spec: Spectrum,
}

fn torus_cuts(nu: usize, n_phi: usize, n_modes: usize) -> (Vec<usize>, Vec<usize>) {
    let mut cuts = vec![n_phi; nu];
    cuts.push(n_modes);
    let mut grid = vec![dealiased_len(n_phi); nu];
    grid.push(dealiased_len(n_modes));
    (cuts, grid)
}

impl TorusField {
    pub fn zeros(nu: usize, n_phi: usize, n_modes: usize) -> TorusField {
        let (cuts, grid) = torus_cuts(nu, n_phi, n_modes);
        TorusField {
            spec: Spectrum::zeros(&cuts, &grid),
        }
    }

    pub fn from_fn<F: Fn(&[f64], f64) -> f64>(
        nu: usize,
        n_phi: usize,
        n_modes: usize,
        f: F,
    ) -> TorusField {
        let z = TorusField::zeros(nu, n_phi, n_modes);
        let grid = &z.spec.shape.grid;
        let total = z.grid_len();
        let mut vals = vec![0.0; total];
        let mut phi = vec![0.0; nu];
        for (flat, v) in vals.iter_mut().enumerate() {
            let mut rem = flat;
            let mx = grid[nu];
            let x = 2.0 * PI * (rem % mx) as f64 / mx as f64;
            rem /= mx;
            for d in (0..nu).rev() {
                phi[d] = 2.0 * PI * (rem % grid[d]) as f64 / grid[d] as f64;
                rem /= grid[d];
            }
            *v = f(&phi, x);
        }
        z.from_grid_like(&vals)
    }

    pub fn nu(&self) -> usize {
        self.spec.shape.rank() - 1
    }
    pub fn n_phi(&self) -> usize {
        self.spec.shape.cuts[0]
    }
    pub fn n_modes(&self) -> usize {
        self.spec.shape.cuts[self.nu()]
    }

    fn key(ell: &[i64], j: i64) -> Vec<i64> {
        let mut k = ell.to_vec();
        k.push(j);
        k
    }

    pub fn coeff(&self, ell: &[i64], j: i64) -> C64 {
        match self.spec.shape.index(&Self::key(ell, j)) {
            Some(i) => self.spec.data[i],
            None => C64::new(0.0, 0.0),
        }
    }

    /// Sets `u_{ℓ,j} = c` and its conjugate partner.
    pub fn set_mode(&mut self, ell: &[i64], j: i64, c: C64) {
        if let Some(i) = self.spec.shape.index(&Self::key(ell, j)) {
            let m = self.spec.shape.mirror(i);
            if i == m {
                self.spec.data[i] = C64::new(c.re, 0.0);
            } else {
                self.spec.data[i] = c;
                self.spec.data[m] = c.conj();
            }
        }
    }

    /// Iterates `(ℓ, j, u_{ℓ,j})` over the whole box.
    pub fn modes(&self) -> impl Iterator<Item = (Vec<i64>, i64, C64)> + '_ {
        let nu = self.nu();
        (0..self.spec.data.len()).map(move |i| {
            let k = self.spec.shape.mode(i);
            (k[..nu].to_vec(), k[nu], self.spec.data[i])
        })
    }

    pub fn eval(&self, phi: &[f64], x: f64) -> f64 {
        let nu = self.nu();
        let mut s = 0.0;
        for i in 0..self.spec.data.len() {
            let k = self.spec.shape.mode(i);
            let mut arg = k[nu] as f64 * x;
            for d in 0..nu {
                arg += k[d] as f64 * phi[d];
            }
            s += (self.spec.data[i] * C64::from_polar(1.0, arg)).re;
        }
        s
    }

    /// Fraction of the coefficient energy off the traveling support `j + ȷ⃗·ℓ = 0`.
    pub fn traveling_defect(&self, jvec: &[i64]) -> f64 {
        let mut off = 0.0;
        let mut all = 0.0;
        for (ell, j, c) in self.modes() {
            let e = c.norm_sqr();
            all += e;
            if j + dot(jvec, &ell) != 0 {
                off += e;
            }
        }
        if all == 0.0 {
            0.0
        } else {
            off / all
        }
    }

    /// `u(φ − ȷ⃗ς, ·)`.
    pub fn shift_angles(&self, jvec: &[i64], shift: f64) -> TorusField {
        let nu = self.nu();
        let mut out = self.clone();
        for i in 0..out.spec.data.len() {
            let k = out.spec.shape.mode(i);
            let phase = -(dot(jvec, &k[..nu]) as f64) * shift;
            out.spec.data[i] *= C64::from_polar(1.0, phase);
        }
        out
    }

    /// `τ_ς u(φ, x) = u(φ, x + ς)`.
    pub fn translate(&self, shift: f64) -> TorusField {
        self.apply_multiplier(|j| C64::from_polar(1.0, j as f64 * shift))
    }

    /// Keeps the spatial columns selected by `keep(j)`.
    pub fn project_columns<P: Fn(i64) -> bool>(&self, keep: P) -> TorusField {
        self.apply_multiplier(|j| C64::new(if keep(j) { 1.0 } else { 0.0 }, 0.0))
    }

    /// Coefficient-level maximum distance to another field of the same shape.
    pub fn max_diff(&self, other: &TorusField) -> f64 {
        self.spec
            .data
            .iter()
            .zip(&other.spec.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn conj_symmetry_defect(&self) -> f64 {
        self.spec.conj_defect()
    }
}

impl Spectral for TorusField {
    fn grid_len(&self) -> usize {
        self.spec.shape.grid_len()
    }
    fn to_grid(&self) -> Vec<f64> {
        self.spec.to_grid()
    }
    fn from_grid_like(&self, values: &[f64]) -> Self {
        TorusField {
            spec: Spectrum::from_grid(&self.spec.shape, values),
        }
    }
    fn apply_multiplier<S: Fn(i64) -> C64>(&self, sym: S) -> Self {
        let nu = self.nu();
        let mut out = self.clone();
        for i in 0..out.spec.data.len() {
            let j = out.spec.shape.mode(i)[nu];
            out.spec.data[i] *= sym(j);
        }
        out
    }
    fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        TorusField {
            spec: lincomb_spec(&self.spec, a, &other.spec, b),
        }
    }
    fn max_coeff(&self) -> f64 {
        max_coeff_spec(&self.spec)
    }
}

impl_ops!(TorusField);

/// L²-orthogonal projection onto the tangential columns `j ∈ S`.
pub fn project_tangential(u: &TorusField, sites: &[i64]) -> TorusField {
    u.project_columns(|j| sites.contains(&j))
}

/// L²-orthogonal projection onto the normal columns `j ∉ S ∪ {0}`.
pub fn project_normal(u: &TorusField, sites: &[i64]) -> TorusField {
    u.project_columns(|j| j != 0 && !sites.contains(&j))
}

// ---------------------------------------------------------------------------
// TravelingProfile

pub(crate) fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨ℓ⟩ = max(1, |ℓ|)` with the ℓ¹ length.
pub fn bracket(ell: &[i64]) -> f64 {
    let n: i64 = ell.iter().map(|v| v.abs()).sum();
    (n.max(1)) as f64
}

/// Smooth even cutoff: 0 on `|ξ| ≤ 1/3`, 1 on `|ξ| ≥ 2/3`, increasing between.
pub fn smooth_cutoff(xi: f64) -> f64 {
    let s = 3.0 * xi.abs() - 1.0;
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    f(s) / (f(s) + f(1.0 - s))
}

/// Angle profile `U(ψ)`, `ψ ∈ T^ν`, of the traveling field `u(φ,x) = U(φ − ȷ⃗x)`.
/// Angle modes with `|ȷ⃗·ℓ| > n_modes` are kept at zero.
#[derive(Clone, Debug)]
pub struct TravelingProfile {
    jvec: Arc<Vec<i64>>,
    n_modes: usize,
    spec: Spectrum,
    /// Spatial wavenumber `−ȷ⃗·ℓ` of each stored mode.
    wavenumbers: Arc<Vec<i64>>,
}

/// How far a small-divisor inversion was from its cutoff region.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DivisorReport {
    /// Smallest `|ω·ℓ|υ^{-1}⟨ℓ⟩^τ` over modes with nonzero data.
    pub min_scaled_divisor: f64,
    /// Whether the smooth cutoff altered any nonzero mode.
    pub cutoff_active: bool,
    /// Angle mode attaining the smallest scaled divisor (empty if none).
    pub worst_mode: Vec<i64>,
}

impl TravelingProfile {
    pub fn zeros(jvec: &[i64], n_phi: usize, n_modes: usize) -> TravelingProfile {
        let nu = jvec.len();
        let spec = Spectrum::zeros(&vec![n_phi; nu], &vec![dealiased_len(n_phi); nu]);
        let wavenumbers = (0..spec.data.len())
            .map(|i| -dot(jvec, spec.shape.mode(i)))
            .collect();
        TravelingProfile {
            jvec: Arc::new(jvec.to_vec()),
            n_modes,
            spec,
            wavenumbers: Arc::new(wavenumbers),
        }
    }

    /// Same layout with a different grid density (for high-order pointwise maps).
    pub fn with_grid_factor(&self, min_grid: usize) -> TravelingProfile {
        let nu = self.nu();
        let g = good_size(min_grid.max(dealiased_len(self.n_phi())));
        let spec = self.spec.recut(&vec![self.n_phi(); nu], &vec![g; nu]);
        TravelingProfile {
            jvec: self.jvec.clone(),
            n_modes: self.n_modes,
            spec,
            wavenumbers: self.wavenumbers.clone(),
        }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        jvec: &[i64],
        n_phi: usize,
        n_modes: usize,
        f: F,
    ) -> TravelingProfile {
        let z = TravelingProfile::zeros(jvec, n_phi, n_modes);
        let pts = z.grid_points();
        let nu = z.nu();
        let vals: Vec<f64> = pts.chunks(nu).map(f).collect();
        z.from_grid_like(&vals)
    }

    pub fn nu(&self) -> usize {
        self.jvec.len()
    }
    pub fn n_phi(&self) -> usize {
        self.spec.shape.cuts[0]
    }
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
    pub fn jvec(&self) -> &[i64] {
        &self.jvec
    }
    pub fn len(&self) -> usize {
        self.spec.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.spec.data.is_empty()
    }
    pub fn mode(&self, flat: usize) -> &[i64] {
        self.spec.shape.mode(flat)
    }
    pub fn index(&self, ell: &[i64]) -> Option<usize> {
        self.spec.shape.index(ell)
    }
    pub fn mirror(&self, flat: usize) -> usize {
        self.spec.shape.mirror(flat)
    }
    pub fn wavenumber(&self, flat: usize) -> i64 {
        self.wavenumbers[flat]
    }
    pub fn data(&self) -> &[C64] {
        &self.spec.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.spec.data
    }
    /// Whether the mode sits inside the spatial cutoff.
    pub fn admissible(&self, flat: usize) -> bool {
        self.wavenumbers[flat].unsigned_abs() as usize <= self.n_modes
    }

    pub fn coeff(&self, ell: &[i64]) -> C64 {
        match self.spec.shape.index(ell) {
            Some(i) => self.spec.data[i],
            None => C64::new(0.0, 0.0),
        }
    }

    /// Sets `U_ℓ = c` and `U_{−ℓ} = conj(c)`; inadmissible modes are ignored.
    pub fn set_mode(&mut self, ell: &[i64], c: C64) {
        if let Some(i) = self.spec.shape.index(ell) {
            if !self.admissible(i) {
                return;
            }
            let m = self.spec.shape.mirror(i);
            if i == m {
                self.spec.data[i] = C64::new(c.re, 0.0);
            } else {
                self.spec.data[i] = c;
                self.spec.data[m] = c.conj();
            }
        }
    }

    /// Grid points, `ν` coordinates per point, row-major.
    pub fn grid_points(&self) -> Vec<f64> {
        let nu = self.nu();
        let grid = &self.spec.shape.grid;
        let total = self.grid_len();
        let mut out = vec![0.0; total * nu];
        for flat in 0..total {
            let mut rem = flat;
            for d in (0..nu).rev() {
                out[flat * nu + d] = 2.0 * PI * (rem % grid[d]) as f64 / grid[d] as f64;
                rem /= grid[d];
            }
        }
        out
    }

    pub fn grid_dims(&self) -> &[usize] {
        &self.spec.shape.grid
    }

    pub fn eval(&self, psi: &[f64]) -> f64 {
        self.eval_many(psi)[0]
    }

    /// Evaluates at many points (`ν` coordinates each) by direct summation.
    pub fn eval_many(&self, pts: &[f64]) -> Vec<f64> {
        let nu = self.nu();
        let l = self.n_phi() as i64;
        let width = (2 * l + 1) as usize;
        let active: Vec<usize> = (0..self.len())
            .filter(|&i| self.spec.data[i].norm_sqr() > 0.0)
            .collect();
        let mut table = vec![C64::new(0.0, 0.0); nu * width];
        pts.chunks(nu)
            .map(|p| {
                for d in 0..nu {
                    for k in -l..=l {
                        table[d * width + (k + l) as usize] = C64::from_polar(1.0, k as f64 * p[d]);
                    }
                }
                let mut s = 0.0;
                for &i in &active {
                    let m = self.spec.shape.mode(i);
                    let mut e = self.spec.data[i];
                    for d in 0..nu {
                        e *= table[d * width + (m[d] + l) as usize];
                    }
                    s += e.re;
                }
                s
            })
            .collect()
    }

    /// `u(φ, x) = U(φ − ȷ⃗x)`.
    pub fn eval_phase(&self, phi: &[f64], x: f64) -> f64 {
        let psi: Vec<f64> = phi
            .iter()
            .zip(self.jvec.iter())
            .map(|(p, &j)| p - j as f64 * x)
            .collect();
        self.eval(&psi)
    }

    /// Angle average `U_0`.
    pub fn angle_mean(&self) -> f64 {
        self.coeff(&vec![0; self.nu()]).re
    }

    /// Spatial average `⟨u⟩_x(φ)`: the modes with `ȷ⃗·ℓ = 0`.
    pub fn x_mean(&self) -> TravelingProfile {
        self.mean_project()
    }

    /// `ω·∂_φ`.
    pub fn omega_derivative(&self, omega: &[f64]) -> TravelingProfile {
        let mut out = self.clone();
        for i in 0..out.len() {
            let w: f64 = self.mode(i).iter().zip(omega).map(|(&l, w)| l as f64 * w).sum();
            out.spec.data[i] *= C64::new(0.0, w);
        }
        out
    }

    /// Extended inverse of `ω·∂_φ` with the smooth cutoff at level `υ⟨ℓ⟩^{−τ}`;
    /// the `ℓ = 0` mode is dropped.
    pub fn omega_inverse_ext(
        &self,
        omega: &[f64],
        upsilon: f64,
        tau: f64,
    ) -> (TravelingProfile, DivisorReport) {
        let mut out = self.clone();
        let mut min_scaled = f64::INFINITY;
        let mut active = false;
        let mut worst = Vec::new();
        for i in 0..out.len() {
            let ell = self.mode(i);
            let c = self.spec.data[i];
            if ell.iter().all(|&v| v == 0) {
                out.spec.data[i] = C64::new(0.0, 0.0);
                continue;
            }
            let w: f64 = ell.iter().zip(omega).map(|(&l, w)| l as f64 * w).sum();
            let scaled = w / upsilon * bracket(ell).powf(tau);
            let chi = smooth_cutoff(scaled);
            if c.norm() > 0.0 {
                if scaled.abs() < min_scaled {
                    min_scaled = scaled.abs();
                    worst = ell.to_vec();
                }
                if chi < 1.0 {
                    active = true;
                }
            }
            out.spec.data[i] = if chi == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                c * chi / C64::new(0.0, w)
            };
        }
        (
            out,
            DivisorReport {
                min_scaled_divisor: min_scaled,
                cutoff_active: active,
                worst_mode: worst,
            },
        )
    }

    /// Resamples `U(ψ + s(ψ))` where `shift` holds `ν` components per grid point.
    pub fn compose_shift(&self, shift: &[f64]) -> TravelingProfile {
        let pts = self.grid_points();
        let moved: Vec<f64> = pts.iter().zip(shift).map(|(p, s)| p + s).collect();
        let vals = self.eval_many(&moved);
        self.from_grid_like(&vals)
    }

    /// Full `(ℓ, j)` coefficient array with `U_ℓ` at `j = −ȷ⃗·ℓ`.
    pub fn embed(&self) -> TorusField {
        let mut u = TorusField::zeros(self.nu(), self.n_phi(), self.n_modes);
        for i in 0..self.len() {
            if !self.admissible(i) {
                continue;
            }
            let ell = self.mode(i).to_vec();
            let mut key = ell.clone();
            key.push(self.wavenumbers[i]);
            if let Some(k) = u.spec.shape.index(&key) {
                u.spec.data[k] = self.spec.data[i];
            }
        }
        u
    }

    /// Inverse of [`embed`](Self::embed); refuses fields with off-support energy above `tol`.
    pub fn extract(u: &TorusField, jvec: &[i64], tol: f64) -> Result<TravelingProfile, FieldError> {
        if jvec.len() != u.nu() {
            return Err(FieldError::ShapeMismatch(format!(
                "jvec has {} entries, field has nu = {}",
                jvec.len(),
                u.nu()
            )));
        }
        let fraction = u.traveling_defect(jvec);
        if fraction > tol {
            return Err(FieldError::NotTraveling { fraction, tol });
        }
        let mut p = TravelingProfile::zeros(jvec, u.n_phi(), u.n_modes());
        for i in 0..p.len() {
            if p.admissible(i) {
                let ell = p.mode(i).to_vec();
                p.spec.data[i] = u.coeff(&ell, p.wavenumbers[i]);
            }
        }
        Ok(p)
    }

    /// Maximum coefficient distance.
    pub fn max_diff(&self, other: &TravelingProfile) -> f64 {
        self.spec
            .data
            .iter()
            .zip(&other.spec.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Distance from `(φ,x)`-parity: `even` means `u(−φ,−x) = u(φ,x)`, i.e. real
    /// coefficients; odd means imaginary ones.
    pub fn parity_defect(&self, even: bool) -> f64 {
        self.spec
            .data
            .iter()
            .map(|c| if even { c.im.abs() } else { c.re.abs() })
            .fold(0.0, f64::max)
    }

    /// Grid maximum of `|U|`.
    pub fn max_abs(&self) -> f64 {
        self.to_grid().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Normalized L² norm over the angle torus.
    pub fn norm(&self) -> f64 {
        self.spec.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `U(−ψ)`.
    pub fn reflect(&self) -> TravelingProfile {
        let mut out = self.clone();
        out.spec.data.reverse();
        out
    }

    /// The spatial field `x ↦ u(φ, x)` truncated to `|j| ≤ n_modes`.
    pub fn spatial_slice(&self, phi: &[f64], n_modes: usize) -> RealField {
        let mut f = RealField::zeros(n_modes);
        let nu = self.nu();
        for i in 0..self.len() {
            let c = self.spec.data[i];
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let j = self.wavenumbers[i];
            if j.unsigned_abs() as usize > n_modes || j < 0 {
                continue;
            }
            let ell = self.mode(i);
            let arg: f64 = (0..nu).map(|d| ell[d] as f64 * phi[d]).sum();
            let add = c * C64::from_polar(1.0, arg);
            let cur = f.coeff(j);
            f.set_mode(j, cur + if j == 0 { C64::new(add.re, 0.0) } else { add });
        }
        f
    }
}

impl Spectral for TravelingProfile {
    fn grid_len(&self) -> usize {
        self.spec.shape.grid_len()
    }
    fn to_grid(&self) -> Vec<f64> {
        self.spec.to_grid()
    }
    fn from_grid_like(&self, values: &[f64]) -> Self {
        let mut spec = Spectrum::from_grid(&self.spec.shape, values);
        for (i, c) in spec.data.iter_mut().enumerate() {
            if self.wavenumbers[i].unsigned_abs() as usize > self.n_modes {
                *c = C64::new(0.0, 0.0);
            }
        }
        TravelingProfile {
            jvec: self.jvec.clone(),
            n_modes: self.n_modes,
            spec,
            wavenumbers: self.wavenumbers.clone(),
        }
    }
    fn apply_multiplier<S: Fn(i64) -> C64>(&self, sym: S) -> Self {
        let mut out = self.clone();
        for (i, c) in out.spec.data.iter_mut().enumerate() {
            if c.norm_sqr() != 0.0 {
                *c *= sym(self.wavenumbers[i]);
            }
        }
        out
    }
    fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        TravelingProfile {
            jvec: self.jvec.clone(),
            n_modes: self.n_modes,
            spec: lincomb_spec(&self.spec, a, &other.spec, b),
            wavenumbers: self.wavenumbers.clone(),
        }
    }
    fn max_coeff(&self) -> f64 {
        max_coeff_spec(&self.spec)
    }
}

impl_ops!(TravelingProfile);

/// Places `U_ℓ` at `(ℓ, j = −ȷ⃗·ℓ)`.
pub fn traveling_embed(p: &TravelingProfile) -> TorusField {
    p.embed()
}

/// Reads back the profile of a traveling field.
pub fn traveling_extract(
    u: &TorusField,
    jvec: &[i64],
    tol: f64,
) -> Result<TravelingProfile, FieldError> {
    TravelingProfile::extract(u, jvec, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn identity_multiplier() {
        let f = RealField::from_fn(8, |x| (x).sin() + 0.3 * (3.0 * x).cos());
        let g = f.apply_multiplier(|_| C64::new(1.0, 0.0));
        assert!(f.minus(&g).max_coeff() == 0.0);
    }

    #[test]
    fn hilbert_of_cos_is_sin() {
        let f = RealField::cos_mode(6, 1, 1.0);
        let h = hilbert(&f);
        let s = RealField::sin_mode(6, 1, 1.0);
        assert!(h.minus(&s).max_coeff() < 1e-15);
        let one = RealField::cos_mode(6, 0, 1.0);
        assert_eq!(hilbert(&one).max_coeff(), 0.0);
    }

    #[test]
    fn derivative_of_cos3() {
        let f = RealField::cos_mode(6, 3, 1.0);
        let d = dx(&f);
        let expect = RealField::sin_mode(6, 3, -3.0);
        assert!(d.minus(&expect).max_coeff() < 1e-15);
    }

    #[test]
    fn antiderivative_inverts_derivative_up_to_mean() {
        let f = RealField::from_fn(10, |x| 0.7 + x.sin() - 0.2 * (4.0 * x).cos());
        let back = dx_inverse(&dx(&f));
        let expect = f.minus(&mean_project(&f));
        assert!(back.minus(&expect).max_coeff() < 1e-14);
        // ∂x∘∂x^{-1} on sin gives sin back, with ∂x^{-1} sin = −cos.
        let s = RealField::sin_mode(4, 1, 1.0);
        let inv = dx_inverse(&s);
        assert!(inv.minus(&RealField::cos_mode(4, 1, -1.0)).max_coeff() < 1e-15);
    }

    #[test]
    fn hilbert_squared_is_minus_identity_off_mean() {
        let f = RealField::from_fn(12, |x| 1.0 + (2.0 * x).sin() + (5.0 * x).cos());
        let hh = hilbert(&hilbert(&f));
        let expect = f.drop_mean().scale(-1.0);
        assert!(hh.minus(&expect).max_coeff() < 1e-14);
    }

    #[test]
    fn cos_squared() {
        let c = RealField::cos_mode(4, 1, 1.0);
        let p = field_product(&c, &c).unwrap();
        assert!(close(p.coeff(0).re, 0.5, 1e-14));
        assert!(close(p.coeff(2).re, 0.25, 1e-14));
        assert!(p.coeff(1).norm() < 1e-15);
    }

    #[test]
    fn product_by_one() {
        let f = RealField::from_fn(8, |x| (2.0 * x).sin() + 0.1 * x.cos());
        let one = RealField::cos_mode(8, 0, 1.0);
        assert!(field_product(&f, &one).unwrap().minus(&f).max_coeff() < 1e-15);
    }

    #[test]
    fn cos_phi_minus_2x_embeds_at_two_modes() {
        let mut p = TravelingProfile::zeros(&[2], 3, 8);
        p.set_mode(&[1], C64::new(0.5, 0.0));
        let u = p.embed();
        assert!(close(u.coeff(&[1], -2).re, 0.5, 0.0));
        assert!(close(u.coeff(&[-1], 2).re, 0.5, 0.0));
        let v = u.eval(&[0.4], 0.9);
        assert!(close(v, (0.4f64 - 1.8).cos(), 1e-13));
    }

    #[test]
    fn tangential_projection_keeps_sites() {
        let u = TorusField::from_fn(1, 2, 4, |p, x| (p[0] + x).cos() + (x * 2.0).sin() + 0.5);
        let sites = [1, -2];
        let t = project_tangential(&u, &sites);
        for (_, j, c) in t.modes() {
            if !sites.contains(&j) {
                assert_eq!(c.norm(), 0.0);
            }
        }
        let nrm = project_normal(&u, &sites);
        let mean = u.project_columns(|j| j == 0);
        let sum = t.plus(&nrm).plus(&mean);
        assert!(sum.minus(&u).max_coeff() < 1e-15);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(smooth_cutoff(0.3), 0.0);
        assert_eq!(smooth_cutoff(-0.3), 0.0);
        assert_eq!(smooth_cutoff(0.7), 1.0);
        let mut prev = 0.0;
        for k in 1..100 {
            let x = 1.0 / 3.0 + k as f64 / 300.0;
            let v = smooth_cutoff(x);
            // Saturates to 1.0 in floating point just below 2/3.
            assert!(v > prev || v == 1.0);
            prev = v;
        }
    }

    #[test]
    fn profile_x_mean_is_invariant_modes() {
        let p = TravelingProfile::from_fn(&[1, 2], 3, 10, |s| {
            (s[0]).cos() + (2.0 * s[0] - s[1]).cos() + 0.25
        });
        let m = p.x_mean();
        assert!(close(m.coeff(&[2, -1]).re, 0.5, 1e-13));
        assert!(m.coeff(&[1, 0]).norm() < 1e-15);
        assert!(close(m.angle_mean(), 0.25, 1e-13));
    }
}
