//! Curvature of radial Kähler metrics written in momentum coordinates.
//!
//! A radial metric with potential `f(r)`, `r = |z|^2`, is encoded by the
//! momentum `y = r f'(r)` and the profile `psi(y) = dy/dt` with `r = e^t`.
//! Everything here is expressed through `psi` and its `y`-derivatives:
//!
//! * `sigma = psi' + (n-1) psi / y`
//! * `rho_k`, the coefficients of `det(g + s Ric) / det(g)`
//! * the metric and Ricci matrices at a point `z`
//! * Riemann components and holomorphic sectional curvature at axis points
//!   `(z_1, 0, ..., 0)`.
//!
//! Curvature tensors follow the sign convention
//! `R_{i j̄ k l̄} = ∂_k ∂_l̄ g_{i j̄} - g^{q̄ p} ∂_k g_{i q̄} ∂_l̄ g_{p j̄}`,
//! in which `R_{1 1̄ 1 1̄} = psi'' psi^2 / r^2` (negative on projective space).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExpLaurentExpr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("k = {k} outside 1..={n}")]
    Range { k: usize, n: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative step for first derivatives of numeric profiles.
pub const FD_STEP_FIRST: f64 = 1e-6;
/// Relative step for second derivatives of numeric profiles.
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Default number of grid points used by classifiers and constancy checks.
pub const DEFAULT_SAMPLES: usize = 256;

/// Open interval `(lo, hi)` of momentum values, `hi` possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YRange {
    pub lo: f64,
    pub hi: f64,
}

impl YRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if !(lo >= 0.0) || !(hi > lo) || lo.is_infinite() {
            return Err(GeometryError::InvalidMetric(format!(
                "y-range ({lo}, {hi}) must satisfy 0 <= lo < hi"
            )));
        }
        Ok(YRange { lo, hi })
    }

    pub fn contains(&self, y: f64) -> bool {
        y > self.lo && y < self.hi
    }

    /// Central 90% of the range. An infinite upper end is replaced by
    /// `2 lo + 4` before trimming.
    pub fn window(&self) -> (f64, f64) {
        let hi = if self.hi.is_finite() { self.hi } else { 2.0 * self.lo + 4.0 };
        let w = hi - self.lo;
        (self.lo + 0.05 * w, hi - 0.05 * w)
    }

    /// `samples` log-spaced points over [`window`](Self::window).
    pub fn grid(&self, samples: usize) -> Vec<f64> {
        let (a, b) = self.window();
        log_grid(a, b, samples)
    }
}

pub fn log_grid(a: f64, b: f64, samples: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && samples >= 2);
    let (la, lb) = (a.ln(), b.ln());
    (0..samples)
        .map(|i| {
            if i == 0 {
                a
            } else if i == samples - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (samples - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn linear_grid(a: f64, b: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| {
            if i == samples - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (samples - 1) as f64
            }
        })
        .collect()
}

/// Closed-form profile with cached derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicProfile {
    psi: ExpLaurentExpr,
    dpsi: ExpLaurentExpr,
    ddpsi: ExpLaurentExpr,
}

impl SymbolicProfile {
    pub fn new(psi: ExpLaurentExpr) -> Self {
        let dpsi = psi.differentiate();
        let ddpsi = dpsi.differentiate();
        SymbolicProfile { psi, dpsi, ddpsi }
    }

    pub fn psi(&self) -> &ExpLaurentExpr {
        &self.psi
    }

    pub fn dpsi(&self) -> &ExpLaurentExpr {
        &self.dpsi
    }

    pub fn ddpsi(&self) -> &ExpLaurentExpr {
        &self.ddpsi
    }
}

/// Tabulated profile. When the generating `sigma` is known (profiles built
/// by integrating the sigma equation) it is carried along and used in place
/// of differencing `psi` for first derivatives.
#[derive(Clone)]
pub struct NumericProfile {
    psi: ScalarFn,
    sigma: Option<ScalarFn>,
    source: String,
}

impl NumericProfile {
    pub fn new(psi: ScalarFn, source: impl Into<String>) -> Self {
        NumericProfile { psi, sigma: None, source: source.into() }
    }

    pub fn with_sigma(mut self, sigma: ScalarFn) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn without_sigma(mut self) -> Self {
        self.sigma = None;
        self
    }

    pub fn has_sigma(&self) -> bool {
        self.sigma.is_some()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn psi_fn(&self) -> ScalarFn {
        self.psi.clone()
    }
}

impl fmt::Debug for NumericProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericProfile")
            .field("source", &self.source)
            .field("has_sigma", &self.sigma.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Profile {
    Symbolic(SymbolicProfile),
    Numeric(NumericProfile),
}

/// A radial Kähler metric of complex dimension `dim`, given by its profile
/// on the momentum interval `y_range`.
#[derive(Debug, Clone)]
pub struct RadialMetric {
    dim: usize,
    profile: Profile,
    y_range: YRange,
}

impl RadialMetric {
    /// Validates `dim >= 1` and `psi > 0` on the default grid.
    pub fn new(dim: usize, profile: Profile, y_range: YRange) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::InvalidMetric("dimension must be >= 1".into()));
        }
        let m = RadialMetric { dim, profile, y_range };
        for y in y_range.grid(DEFAULT_SAMPLES) {
            let v = m.psi(y)?;
            if !(v > 0.0) {
                return Err(GeometryError::InvalidMetric(format!(
                    "psi({y}) = {v} is not positive inside the y-range"
                )));
            }
        }
        Ok(m)
    }

    pub fn symbolic(dim: usize, psi: ExpLaurentExpr, y_range: YRange) -> Result<Self, GeometryError> {
        Self::new(dim, Profile::Symbolic(SymbolicProfile::new(psi)), y_range)
    }

    /// Symbolic metric on the widest positivity interval of `psi`.
    pub fn symbolic_auto(dim: usize, psi: ExpLaurentExpr) -> Result<Self, GeometryError> {
        let range = positivity_interval(&|y| psi.evaluate(y).unwrap_or(f64::NAN)).ok_or_else(|| {
            GeometryError::InvalidMetric(format!("psi = {psi} is not positive anywhere on y > 0"))
        })?;
        Self::symbolic(dim, psi, range)
    }

    pub fn numeric(dim: usize, profile: NumericProfile, y_range: YRange) -> Result<Self, GeometryError> {
        Self::new(dim, Profile::Numeric(profile), y_range)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn y_range(&self) -> YRange {
        self.y_range
    }

    pub fn symbolic_psi(&self) -> Option<&ExpLaurentExpr> {
        match &self.profile {
            Profile::Symbolic(s) => Some(s.psi()),
            Profile::Numeric(_) => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self.profile, Profile::Symbolic(_))
    }

    /// Same metric restricted to a sub-interval.
    pub fn with_y_range(&self, y_range: YRange) -> Result<Self, GeometryError> {
        Self::new(self.dim, self.profile.clone(), y_range)
    }

    /// Numeric copy of this metric (drops closed forms and sigma hints).
    pub fn to_numeric(&self) -> Self {
        let profile = match &self.profile {
            Profile::Symbolic(s) => {
                let e = s.psi.clone();
                NumericProfile::new(Arc::new(move |y| e.evaluate(y).unwrap_or(f64::NAN)), "symbolic")
            }
            Profile::Numeric(p) => p.clone().without_sigma(),
        };
        RadialMetric { dim: self.dim, profile: Profile::Numeric(profile), y_range: self.y_range }
    }

    pub fn grid(&self, samples: usize) -> Vec<f64> {
        self.y_range.grid(samples)
    }

    pub fn psi(&self, y: f64) -> Result<f64, GeometryError> {
        match &self.profile {
            Profile::Symbolic(s) => Ok(s.psi.evaluate(y)?),
            Profile::Numeric(p) => Ok((p.psi)(y)),
        }
    }

    pub fn psi_dot(&self, y: f64) -> Result<f64, GeometryError> {
        match &self.profile {
            Profile::Symbolic(s) => Ok(s.dpsi.evaluate(y)?),
            Profile::Numeric(p) => Ok(numeric_psi_dot(p, self.dim, y)),
        }
    }

    pub fn psi_ddot(&self, y: f64) -> Result<f64, GeometryError> {
        match &self.profile {
            Profile::Symbolic(s) => Ok(s.ddpsi.evaluate(y)?),
            Profile::Numeric(p) => Ok(numeric_psi_ddot(p, self.dim, y)),
        }
    }
}

fn central_first(f: &dyn Fn(f64) -> f64, y: f64) -> f64 {
    let h = FD_STEP_FIRST * y.abs().max(f64::MIN_POSITIVE);
    (f(y + h) - f(y - h)) / (2.0 * h)
}

fn central_second(f: &dyn Fn(f64) -> f64, y: f64) -> f64 {
    let h = FD_STEP_SECOND * y.abs().max(f64::MIN_POSITIVE);
    (f(y + h) - 2.0 * f(y) + f(y - h)) / (h * h)
}

fn numeric_psi_dot(p: &NumericProfile, n: usize, y: f64) -> f64 {
    match &p.sigma {
        Some(sigma) => sigma(y) - (n as f64 - 1.0) * (p.psi)(y) / y,
        None => central_first(&*p.psi, y),
    }
}

fn numeric_sigma(p: &NumericProfile, n: usize, y: f64) -> f64 {
    match &p.sigma {
        Some(sigma) => sigma(y),
        None => central_first(&*p.psi, y) + (n as f64 - 1.0) * (p.psi)(y) / y,
    }
}

fn numeric_sigma_dot(p: &NumericProfile, n: usize, y: f64) -> f64 {
    match &p.sigma {
        Some(sigma) => central_first(&**sigma, y),
        None => {
            let psi = (p.psi)(y);
            let d1 = central_first(&*p.psi, y);
            let d2 = central_second(&*p.psi, y);
            d2 + (n as f64 - 1.0) * (d1 / y - psi / (y * y))
        }
    }
}

fn numeric_psi_ddot(p: &NumericProfile, n: usize, y: f64) -> f64 {
    match &p.sigma {
        Some(_) => {
            let nm1 = n as f64 - 1.0;
            let psi = (p.psi)(y);
            let d1 = numeric_psi_dot(p, n, y);
            numeric_sigma_dot(p, n, y) - nm1 * (d1 / y - psi / (y * y))
        }
        None => central_second(&*p.psi, y),
    }
}

/// Widest interval on which `psi > 0`, found on a log grid over
/// `[1e-3, 1e3]` and then refined with [`positive_component`].
pub fn positivity_interval(psi: &dyn Fn(f64) -> f64) -> Option<YRange> {
    let grid = log_grid(1e-3, 1e3, 601);
    let mut best: Option<(usize, usize)> = None;
    let mut start: Option<usize> = None;
    for (i, &y) in grid.iter().enumerate() {
        let ok = psi(y) > 0.0;
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if best.is_none_or(|(a, b)| grid.len() - s > b - a) {
            best = Some((s, grid.len()));
        }
    }
    let (a, b) = best?;
    let seed = (grid[a].ln() + grid[b - 1].ln()) / 2.0;
    let (lo, hi) = positive_component(psi, seed.exp(), YRange { lo: 0.0, hi: f64::INFINITY });
    YRange::new(lo, hi).ok()
}

/// Maximal sub-interval of `bounds` containing `seed` on which `psi > 0`.
///
/// Expands geometrically from `seed` (scanning 16 sub-points per
/// expansion) and refines the first sign change by bisection to `1e-12`
/// relative width. Returns the bound itself when no root is met before
/// `1e-12` (downward), `1e12` (upward) or a non-finite value of `psi`.
pub fn positive_component(psi: &dyn Fn(f64) -> f64, seed: f64, bounds: YRange) -> (f64, f64) {
    let positive = |y: f64| psi(y) > 0.0;
    let refine = |mut good: f64, mut bad: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (good + bad);
            if (bad - good).abs() <= 1e-12 * good.abs().max(bad.abs()) || mid == good || mid == bad {
                break;
            }
            if positive(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        0.5 * (good + bad)
    };

    // downward
    let mut lo = bounds.lo;
    let mut prev = seed;
    'down: loop {
        let next = (prev * 0.5).max(bounds.lo);
        for j in 1..=16 {
            let y = prev + (next - prev) * j as f64 / 16.0;
            if y <= bounds.lo || y < 1e-12 || !psi(y).is_finite() {
                break 'down;
            }
            if !positive(y) {
                let good = prev + (next - prev) * (j - 1) as f64 / 16.0;
                lo = refine(good, y);
                break 'down;
            }
        }
        if next <= bounds.lo || next < 1e-12 {
            break;
        }
        prev = next;
    }
    if lo < 1e-12 {
        lo = bounds.lo;
    }

    let mut hi = bounds.hi;
    let mut prev = seed;
    'up: loop {
        let next = (prev * 2.0).min(bounds.hi);
        for j in 1..=16 {
            let y = prev + (next - prev) * j as f64 / 16.0;
            // overflow is not a sign change: the interval stays open
            if y >= bounds.hi || !psi(y).is_finite() {
                break 'up;
            }
            if !positive(y) {
                let good = prev + (next - prev) * (j - 1) as f64 / 16.0;
                hi = refine(good, y);
                break 'up;
            }
        }
        if next >= bounds.hi || next > 1e12 {
            break;
        }
        prev = next;
    }
    (lo, hi)
}

/// A function of `y`: either an exp-Laurent expression or a callable.
#[derive(Clone)]
pub enum ScalarField {
    Symbolic(ExpLaurentExpr),
    Numeric(ScalarFn),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Symbolic(e) => write!(f, "Symbolic({e})"),
            ScalarField::Numeric(_) => f.write_str("Numeric(..)"),
        }
    }
}

impl ScalarField {
    pub fn eval(&self, y: f64) -> Result<f64, GeometryError> {
        match self {
            ScalarField::Symbolic(e) => Ok(e.evaluate(y)?),
            ScalarField::Numeric(f) => Ok(f(y)),
        }
    }

    pub fn as_symbolic(&self) -> Option<&ExpLaurentExpr> {
        match self {
            ScalarField::Symbolic(e) => Some(e),
            ScalarField::Numeric(_) => None,
        }
    }

    /// Constant iff the variation is within `tol_rel` of the field's scale.
    ///
    /// Symbolic fields compare coefficients of non-constant terms against
    /// `tol_rel * max(1, max |coeff|)`; numeric fields compare the spread
    /// over `grid` against `tol_rel * max(1, max |value|)`.
    pub fn constancy(&self, grid: &[f64], tol_rel: f64) -> Result<crate::expr::Constancy, GeometryError> {
        use crate::expr::Constancy;
        match self {
            ScalarField::Symbolic(e) => Ok(e.constancy_check(tol_rel * e.max_abs_coeff().max(1.0))),
            ScalarField::Numeric(f) => {
                let vals: Vec<f64> = grid.iter().map(|&y| f(y)).collect();
                let max = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let min = vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                let scale = vals.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
                if !(max - min <= tol_rel * scale) {
                    return Ok(Constancy::NonConstant);
                }
                Ok(Constancy::Constant(vals.iter().sum::<f64>() / vals.len() as f64))
            }
        }
    }
}

/// `sigma(y) = psi'(y) + (n-1) psi(y) / y`.
pub fn sigma_from_psi(m: &RadialMetric) -> ScalarField {
    let n = m.dim;
    match &m.profile {
        Profile::Symbolic(s) => {
            ScalarField::Symbolic(s.dpsi.add(&s.psi.mul_monomial(n as f64 - 1.0, -1.0)))
        }
        Profile::Numeric(p) => {
            let p = p.clone();
            ScalarField::Numeric(Arc::new(move |y| numeric_sigma(&p, n, y)))
        }
    }
}

/// `d sigma / dy`.
pub fn sigma_dot(m: &RadialMetric) -> ScalarField {
    let n = m.dim;
    match (&m.profile, sigma_from_psi(m)) {
        (_, ScalarField::Symbolic(e)) => ScalarField::Symbolic(e.differentiate()),
        (Profile::Numeric(p), _) => {
            let p = p.clone();
            ScalarField::Numeric(Arc::new(move |y| numeric_sigma_dot(&p, n, y)))
        }
        (Profile::Symbolic(_), ScalarField::Numeric(_)) => unreachable!(),
    }
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Binomial coefficient as a float (zero when `k > n`).
pub fn binomial(n: usize, k: usize) -> f64 {
    binom(n, k).round()
}

/// Pointwise `rho_k` from `sigma` and `sigma'`:
/// `u^{k-1} [C(n-1,k) u - C(n-1,k-1) sigma']` with `u = (n - sigma)/y`.
pub fn rho_k_pointwise(n: usize, k: usize, y: f64, sigma: f64, sigma_dot: f64) -> f64 {
    let u = (n as f64 - sigma) / y;
    let mut pow = 1.0;
    for _ in 1..k {
        pow *= u;
    }
    pow * (binomial(n - 1, k) * u - binomial(n - 1, k - 1) * sigma_dot)
}

/// k-th generalized scalar curvature as a function of `y`.
pub fn rho_k(m: &RadialMetric, k: usize) -> Result<ScalarField, GeometryError> {
    let n = m.dim;
    if k == 0 || k > n {
        return Err(GeometryError::Range { k, n });
    }
    match (sigma_from_psi(m), sigma_dot(m)) {
        (ScalarField::Symbolic(sigma), ScalarField::Symbolic(dsigma)) => {
            let u = ExpLaurentExpr::constant(n as f64).sub(&sigma).mul_monomial(1.0, -1.0);
            let bracket = u
                .scale(binomial(n - 1, k))
                .sub(&dsigma.scale(binomial(n - 1, k - 1)));
            Ok(ScalarField::Symbolic(u.powi(k as u32 - 1).mul(&bracket)))
        }
        (sigma, dsigma) => Ok(ScalarField::Numeric(Arc::new(move |y| {
            let s = sigma.eval(y).unwrap_or(f64::NAN);
            let ds = dsigma.eval(y).unwrap_or(f64::NAN);
            rho_k_pointwise(n, k, y, s, ds)
        }))),
    }
}

/// Hermitian `n x n` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Self {
        HermitianMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| (self.0[(i, j)] - self.0[(j, i)].conj()).norm() <= tol))
    }

    /// Real eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.0.clone().symmetric_eigen();
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn scaled(&self, c: f64) -> Self {
        HermitianMatrix(self.0.map(|z| z * c))
    }
}

fn radial_matrix(z: &[Complex64], radial: f64, diag: f64) -> HermitianMatrix {
    let n = z.len();
    HermitianMatrix(DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { diag } else { 0.0 };
        z[i].conj() * z[j] * radial + d
    }))
}

fn norm_sq(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

fn check_site(m: &RadialMetric, z: &[Complex64], y_at: f64) -> Result<f64, GeometryError> {
    if z.len() != m.dim {
        return Err(GeometryError::Domain(format!(
            "point has {} coordinates, metric dimension is {}",
            z.len(),
            m.dim
        )));
    }
    let r = norm_sq(z);
    if !(r > 0.0) {
        return Err(GeometryError::Domain("r = |z|^2 must be positive".into()));
    }
    if !m.y_range.contains(y_at) {
        return Err(GeometryError::Domain(format!("y = {y_at} outside the metric's y-range")));
    }
    Ok(r)
}

/// `g_{i j̄} = ((psi - y)/r^2) z̄_i z_j + (y/r) δ_ij`.
pub fn metric_components(m: &RadialMetric, z: &[Complex64], y_at: f64) -> Result<HermitianMatrix, GeometryError> {
    let r = check_site(m, z, y_at)?;
    let psi = m.psi(y_at)?;
    Ok(radial_matrix(z, (psi - y_at) / (r * r), y_at / r))
}

/// `Ric_{i j̄} = ((-sigma' psi + sigma - n)/r^2) z̄_i z_j + ((n - sigma)/r) δ_ij`.
pub fn ricci_components(m: &RadialMetric, z: &[Complex64], y_at: f64) -> Result<HermitianMatrix, GeometryError> {
    let r = check_site(m, z, y_at)?;
    let n = m.dim as f64;
    let psi = m.psi(y_at)?;
    let s = sigma_from_psi(m).eval(y_at)?;
    let ds = sigma_dot(m).eval(y_at)?;
    Ok(radial_matrix(z, (-ds * psi + s - n) / (r * r), (n - s) / r))
}

/// Nonvanishing Riemann components at an axis point `(z_1, 0, ..., 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiemannAxis {
    /// `R_{1 1̄ 1 1̄} = psi'' psi^2 / r^2`
    pub r1111: f64,
    /// `R_{1 1̄ i ī} = psi (psi' y - psi) / (y r^2)`, `i >= 2`
    pub r11ii: f64,
    /// `R_{i ī i ī} = 2 (psi - y) / r^2`, `i >= 2`
    pub riiii: f64,
    /// `R_{i ī j j̄} = R_{i ī i ī} / 2`, `i != j >= 2`
    pub riijj: f64,
}

fn check_axis(m: &RadialMetric, r: f64, y_at: f64) -> Result<(), GeometryError> {
    if !(r > 0.0) {
        return Err(GeometryError::Domain(format!("r = {r} must be positive")));
    }
    if !m.y_range.contains(y_at) {
        return Err(GeometryError::Domain(format!("y = {y_at} outside the metric's y-range")));
    }
    Ok(())
}

pub fn riemann_axis(m: &RadialMetric, r: f64, y_at: f64) -> Result<RiemannAxis, GeometryError> {
    check_axis(m, r, y_at)?;
    let y = y_at;
    let psi = m.psi(y)?;
    let d1 = m.psi_dot(y)?;
    let d2 = m.psi_ddot(y)?;
    let r2 = r * r;
    let riiii = 2.0 * (psi - y) / r2;
    Ok(RiemannAxis {
        r1111: d2 * psi * psi / r2,
        r11ii: psi * (d1 * y - psi) / (y * r2),
        riiii,
        riijj: riiii / 2.0,
    })
}

/// `R(Z, Z̄, Z, Z̄)` at the axis point `(sqrt(r), 0, ..., 0)` for
/// `Z = Σ xi_k ∂/∂z_k`, not normalized by `|Z|^4`.
///
/// With `S = Σ_{i>=2} |xi_i|^2` the contraction of the axis components is
/// `R1111 |xi_1|^4 + 4 R11ii |xi_1|^2 S + Riiii S^2`.
pub fn hsc(m: &RadialMetric, r: f64, y_at: f64, xi: &[Complex64]) -> Result<f64, GeometryError> {
    if xi.len() != m.dim {
        return Err(GeometryError::Domain(format!(
            "direction has {} components, metric dimension is {}",
            xi.len(),
            m.dim
        )));
    }
    if xi.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(GeometryError::Domain("direction must be nonzero".into()));
    }
    let axis = riemann_axis(m, r, y_at)?;
    let a = xi[0].norm_sqr();
    let s: f64 = xi[1..].iter().map(|c| c.norm_sqr()).sum();
    Ok(axis.r1111 * a * a + 4.0 * axis.r11ii * a * s + axis.riiii * s * s)
}

/// Everything computable at a single site.
#[derive(Debug, Clone)]
pub struct CurvatureSample {
    pub point: Vec<Complex64>,
    pub y: f64,
    pub g: HermitianMatrix,
    pub ric: HermitianMatrix,
    pub riemann_axis: Option<RiemannAxis>,
    pub hsc: Option<f64>,
    pub xi: Option<Vec<Complex64>>,
}

pub fn curvature_sample(
    m: &RadialMetric,
    z: &[Complex64],
    y_at: f64,
    xi: Option<&[Complex64]>,
) -> Result<CurvatureSample, GeometryError> {
    let g = metric_components(m, z, y_at)?;
    let ric = ricci_components(m, z, y_at)?;
    let r = norm_sq(z);
    let on_axis = z[1..].iter().all(|c| c.norm_sqr() == 0.0);
    let (riemann_axis, hsc_value) = if on_axis {
        let axis = riemann_axis(m, r, y_at)?;
        let h = match xi {
            Some(xi) => Some(hsc(m, r, y_at, xi)?),
            None => None,
        };
        (Some(axis), h)
    } else {
        (None, None)
    };
    Ok(CurvatureSample {
        point: z.to_vec(),
        y: y_at,
        g,
        ric,
        riemann_axis,
        hsc: hsc_value,
        xi: xi.map(|x| x.to_vec()),
    })
}

/// A refined sign change of `psi''`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignChange {
    /// Refined bracket.
    pub lo: f64,
    pub hi: f64,
    pub root: f64,
    pub psi_at_root: f64,
    pub psi_positive: bool,
}

/// Sign changes of `psi''` on `[y_lo, y_hi]`, where the holomorphic
/// sectional curvature along the axis direction changes sign.
///
/// Each change between consecutive grid samples is bisected until the
/// bracket stops shrinking (at most `(y_hi - y_lo) * 1e-10` wide).
pub fn hsc_sign_scan(
    m: &RadialMetric,
    y_lo: f64,
    y_hi: f64,
    samples: usize,
) -> Result<Vec<SignChange>, GeometryError> {
    if samples < 8 {
        return Err(GeometryError::Domain("sign scan needs at least 8 samples".into()));
    }
    if !(y_lo < y_hi) || y_lo < m.y_range.lo || y_hi > m.y_range.hi {
        return Err(GeometryError::Domain(format!(
            "scan interval [{y_lo}, {y_hi}] must lie inside the y-range"
        )));
    }
    let f = |y: f64| m.psi_ddot(y);
    let grid = linear_grid(y_lo, y_hi, samples);
    let mut out = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for &y in &grid {
        let v = f(y)?;
        if v == 0.0 || v.is_nan() {
            continue;
        }
        if let Some((py, pv)) = last {
            if pv.signum() != v.signum() {
                let (mut a, mut b, fa) = (py, y, pv);
                for _ in 0..400 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    let fm = f(mid)?;
                    if fm == 0.0 {
                        a = mid;
                        b = mid;
                        break;
                    }
                    if fm.signum() == fa.signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let root = 0.5 * (a + b);
                let psi = m.psi(root)?;
                out.push(SignChange { lo: a, hi: b, root, psi_at_root: psi, psi_positive: psi > 0.0 });
            }
        }
        last = Some((y, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Constancy};

    fn sym(n: usize, s: &str) -> RadialMetric {
        RadialMetric::symbolic_auto(n, parse(s).unwrap()).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn sigma_flat_is_n() {
        for n in 1..=5 {
            let m = sym(n, "y");
            let s = sigma_from_psi(&m);
            assert_eq!(s.as_symbolic().unwrap(), &ExpLaurentExpr::constant(n as f64));
        }
    }

    #[test]
    fn sigma_of_remark_profile_is_constant() {
        // psi = (c/n) y + d / y^{n-1}
        let (n, cc, d) = (3, 1.0, 0.2);
        let psi = ExpLaurentExpr::monomial(cc / n as f64, 1.0).add(&ExpLaurentExpr::monomial(d, 1.0 - n as f64));
        let m = RadialMetric::symbolic_auto(n, psi).unwrap();
        let s = sigma_from_psi(&m);
        match s.as_symbolic().unwrap().constancy_check(1e-14) {
            Constancy::Constant(v) => assert!((v - cc).abs() < 1e-15),
            Constancy::NonConstant => panic!("sigma should be constant"),
        }
    }

    #[test]
    fn sigma_of_einstein_profile() {
        // psi = y - C y^2 - A / y^{n-1}  =>  sigma = n - C (n+1) y
        let (n, cc, a) = (4usize, 0.3, 0.1);
        let psi = parse(&format!("y - {cc}*y^2 - {a}*y^-3")).unwrap();
        let m = RadialMetric::symbolic_auto(n, psi).unwrap();
        let s = sigma_from_psi(&m);
        let fit = s.as_symbolic().unwrap().laurent_fit(&[0.0, 1.0]).unwrap();
        assert!((fit[0] - 4.0).abs() < 1e-14);
        assert!((fit[1] + cc * 5.0).abs() < 1e-14);
    }

    #[test]
    fn rho_examples() {
        // n = 1, psi = y - C y^2: rho_1 = 2C
        let m = sym(1, "y - 0.35*y^2");
        let r1 = rho_k(&m, 1).unwrap();
        assert_eq!(r1.as_symbolic().unwrap().constancy_check(1e-14), Constancy::Constant(0.7));
        // flat: all zero
        let m = sym(3, "y");
        for k in 1..=3 {
            assert!(rho_k(&m, k).unwrap().as_symbolic().unwrap().is_zero());
        }
        assert_eq!(rho_k(&m, 0).unwrap_err(), GeometryError::Range { k: 0, n: 3 });
        assert_eq!(rho_k(&m, 4).unwrap_err(), GeometryError::Range { k: 4, n: 3 });
    }

    #[test]
    fn rho_of_remark_profile() {
        // psi = (c/n) y + d/y^{n-1}: rho_n = 0 and rho_1 = (n-1)(n-c)/y
        let (n, cc, d) = (3usize, 1.0, 0.2);
        let psi = ExpLaurentExpr::monomial(cc / 3.0, 1.0).add(&ExpLaurentExpr::monomial(d, -2.0));
        let m = RadialMetric::symbolic_auto(n, psi).unwrap();
        assert!(rho_k(&m, 3).unwrap().as_symbolic().unwrap().is_zero());
        let r1 = rho_k(&m, 1).unwrap();
        for y in [0.5, 1.0, 2.0] {
            let expected = (n as f64 - 1.0) * (n as f64 - cc) / y;
            assert!((r1.eval(y).unwrap() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn metric_components_examples() {
        let m = sym(2, "y");
        let g = metric_components(&m, &[c(1.0), c(0.0)], 1.0).unwrap();
        assert_eq!(g.get(0, 0), c(1.0));
        assert_eq!(g.get(1, 1), c(1.0));
        assert_eq!(g.get(0, 1), c(0.0));

        let m = sym(2, "y - y^2 + y^3");
        let g = metric_components(&m, &[c(1.0), c(0.0)], 1.0 / 3.0).unwrap();
        assert!((g.get(0, 0).re - 7.0 / 27.0).abs() < 1e-15);
        assert!((g.get(1, 1).re - 1.0 / 3.0).abs() < 1e-15);

        assert!(matches!(
            metric_components(&m, &[c(0.0), c(0.0)], 0.5),
            Err(GeometryError::Domain(_))
        ));
    }

    #[test]
    fn metric_is_hermitian_positive() {
        let m = sym(3, "y - 0.2*y^2 + 0.05*y^3");
        let z = [Complex64::new(0.3, -0.4), Complex64::new(0.1, 0.7), Complex64::new(-0.5, 0.2)];
        for y in m.grid(16) {
            let g = metric_components(&m, &z, y).unwrap();
            assert!(g.is_hermitian(0.0));
            assert!(g.eigenvalues()[0] > 0.0);
        }
    }

    #[test]
    fn ricci_examples() {
        let m = sym(3, "y");
        let ric = ricci_components(&m, &[c(1.0), c(0.5), c(0.0)], 1.3).unwrap();
        assert!(ric.matrix().iter().all(|z| z.norm() == 0.0));

        // Einstein: Ric = (lambda/2) g with lambda = 2 C (n+1)
        let m = sym(2, "y - 0.5*y^2");
        let z = [Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.4)];
        let g = metric_components(&m, &z, 0.7).unwrap();
        let ric = ricci_components(&m, &z, 0.7).unwrap();
        let lam = 2.0 * 0.5 * 3.0;
        for (a, b) in ric.matrix().iter().zip(g.matrix().iter()) {
            assert!((a - b * (lam / 2.0)).norm() <= 1e-12 * b.norm().max(1.0));
        }

        // psi = (c/n) y: sigma = c, Ricci diagonal with (n - c)/r at axis points
        let (n, cc) = (3usize, 1.5);
        let m = RadialMetric::symbolic_auto(n, ExpLaurentExpr::monomial(cc / 3.0, 1.0)).unwrap();
        let z = [c(2.0_f64.sqrt()), c(0.0), c(0.0)];
        let ric = ricci_components(&m, &z, 0.9).unwrap();
        // radial eigenvalue -sigma' psi / r vanishes, transverse ones are (n - c)/r
        assert!(ric.get(0, 0).norm() < 1e-14);
        for i in 1..3 {
            assert!((ric.get(i, i).re - (3.0 - cc) / 2.0).abs() < 1e-14);
        }
        assert!(ric.get(0, 1).norm() < 1e-15);
    }

    #[test]
    fn riemann_axis_examples() {
        let m = sym(2, "y");
        let a = riemann_axis(&m, 1.3, 0.7).unwrap();
        assert_eq!((a.r1111, a.r11ii, a.riiii), (0.0, 0.0, 0.0));

        let m = sym(2, "y - y^2 + y^3");
        let a = riemann_axis(&m, 1.0, 1.0 / 3.0).unwrap();
        assert!(a.r1111.abs() < 1e-16);
        let psi = |y: f64| y - y * y + y * y * y;
        let a = riemann_axis(&m, 1.0, 0.25).unwrap();
        assert!((a.r1111 - (-0.5) * psi(0.25).powi(2)).abs() < 1e-15);
        assert!(a.r1111 < 0.0);
        let a = riemann_axis(&m, 1.0, 0.5).unwrap();
        assert!((a.r1111 - psi(0.5).powi(2)).abs() < 1e-15);
        assert!(matches!(riemann_axis(&m, 0.0, 0.5), Err(GeometryError::Domain(_))));
    }

    #[test]
    fn hsc_reduces_to_axis_component() {
        let m = sym(3, "y - y^2 + y^3");
        let xi = [Complex64::new(0.6, -0.8), c(0.0), c(0.0)];
        let a = riemann_axis(&m, 2.0, 0.4).unwrap();
        let h = hsc(&m, 2.0, 0.4, &xi).unwrap();
        assert_eq!(h, a.r1111 * 1.0);
        let m = sym(3, "y");
        assert_eq!(hsc(&m, 1.0, 1.0, &[c(1.0), c(2.0), c(-1.0)]).unwrap(), 0.0);
        assert!(hsc(&m, 1.0, 1.0, &[c(0.0); 3]).is_err());
    }

    #[test]
    fn projective_space_has_constant_hsc() {
        // Fubini-Study: psi = y - y^2 on (0, 1); HSC / |Z|^4 = -2 in this sign convention
        let m = sym(3, "y - y^2");
        let (r, y) = (0.8, 0.8 / 1.8);
        let psi = y - y * y;
        for xi in [
            [c(1.0), c(0.0), c(0.0)],
            [c(0.0), c(1.0), c(0.0)],
            [c(1.0), c(1.0), c(0.0)],
            [Complex64::new(0.3, 0.4), c(-1.2), Complex64::new(0.0, 0.5)],
        ] {
            let norm2 = xi[0].norm_sqr() * psi / r + xi[1..].iter().map(|v| v.norm_sqr()).sum::<f64>() * y / r;
            let h = hsc(&m, r, y, &xi).unwrap();
            assert!((h / (norm2 * norm2) + 2.0).abs() < 1e-13, "{h}");
        }
    }

    #[test]
    fn sign_scan_cubic() {
        let m = sym(2, "y - y^2 + y^3");
        let found = hsc_sign_scan(&m, 0.05, 1.0, 64).unwrap();
        assert_eq!(found.len(), 1);
        assert!((found[0].root - 1.0 / 3.0).abs() < 1e-12);
        assert!((found[0].psi_at_root - 7.0 / 27.0).abs() < 1e-12);
        assert!(found[0].psi_positive);
        assert!(hsc_sign_scan(&sym(2, "y"), 0.1, 2.0, 16).unwrap().is_empty());
    }

    #[test]
    fn numeric_derivatives_track_symbolic() {
        let m = sym(3, "y - 0.3*y^2 + 0.1*y^3 + 0.2*y^-2");
        let num = m.to_numeric();
        for y in [0.5, 1.0, 2.0] {
            let s = sigma_from_psi(&m).eval(y).unwrap();
            let sn = sigma_from_psi(&num).eval(y).unwrap();
            assert!((s - sn).abs() < 1e-8 * s.abs().max(1.0));
            let d2 = m.psi_ddot(y).unwrap();
            let d2n = num.psi_ddot(y).unwrap();
            assert!((d2 - d2n).abs() < 1e-6 * d2.abs().max(1.0));
        }
    }

    #[test]
    fn positivity_interval_examples() {
        let r = positivity_interval(&|y| y - y * y).unwrap();
        assert_eq!(r.lo, 0.0);
        assert!((r.hi - 1.0).abs() < 1e-11);
        let r = positivity_interval(&|y| y - y * y + y * y * y).unwrap();
        assert_eq!((r.lo, r.hi), (0.0, f64::INFINITY));
    }
}
