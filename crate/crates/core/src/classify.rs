//! Membership tests for the canonical radial families, family constructors
//! and the four intersection identities
//!
//! * extremal ∩ KRS = KE
//! * k-cscK ∩ h-cscK = KE (k ≠ h)
//! * k-cscK ∩ extremal = KE (k > 1)
//! * k-cscK ∩ nontrivial KRS = ∅
//!
//! Symbolic profiles are classified through exact term bookkeeping;
//! numeric ones by least squares on the sample grid.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Constancy, ExpLaurentExpr, Term};
use crate::geometry::{
    binomial, rho_k, sigma_from_psi, GeometryError, RadialMetric, ScalarField, ScalarFn, DEFAULT_SAMPLES,
};
use crate::ode::{psi_from_sigma_numeric, OdeError};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Largest accepted condition number of the least-squares normal matrix.
pub const MAX_NORMAL_COND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("least-squares system is ill-conditioned (normal matrix condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("radicand A_k + B_k/y^n = {radicand} is negative at y = {y} for even k = {k}")]
    SignError { k: usize, y: f64, radicand: f64 },
    #[error("inconsistent parameters: {0}")]
    ParamError(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Tolerance and grid size shared by all classifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub tol: f64,
    pub samples: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config { tol: DEFAULT_TOL, samples: DEFAULT_SAMPLES }
    }
}

impl Config {
    pub fn with_tol(tol: f64) -> Self {
        Config { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Membership<P> {
    Member { params: P, residual: f64 },
    NotMember { residual: f64 },
}

impl<P> Membership<P> {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }

    pub fn params(&self) -> Option<&P> {
        match self {
            Membership::Member { params, .. } => Some(params),
            Membership::NotMember { .. } => None,
        }
    }

    /// Residual relative to the scale of the tested quantity.
    pub fn residual(&self) -> f64 {
        match self {
            Membership::Member { residual, .. } | Membership::NotMember { residual } => *residual,
        }
    }

    fn decide(params: P, residual: f64, tol: f64) -> Self {
        if residual <= tol {
            Membership::Member { params, residual }
        } else {
            Membership::NotMember { residual }
        }
    }
}

/// `psi = y - A/y^{n-1} - B/y^{n-2} - C y^2 - D y^3` (n ≥ 2), or
/// `psi = (1-B) y - A - C y^2 - D y^3` (n = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalParams {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub flat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeParams {
    /// `λ_KE` with `Ric = (λ_KE / 2) g`, i.e. `sigma = n - (λ_KE/2) y`.
    pub einstein_constant: f64,
    pub defined_at_origin: bool,
    pub space_form: bool,
}

/// Soliton data: `sigma - n = mu psi - lambda y` (n ≥ 2) or
/// `psi' = mu psi + k + 1 - lambda y` (n = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KrsParams {
    pub mu: f64,
    /// Solitonic constant (half the Einstein constant on trivial solitons).
    pub lambda: f64,
    /// Coefficient of the exponential term; undefined on trivial solitons.
    pub nu: Option<f64>,
    /// The constant `k` of the n = 1 equation.
    pub k1: Option<f64>,
    pub trivial: bool,
}

/// `((n - sigma)/y)^k = A_k + B_k / y^n` with `rho_k = A_k n! / (k! (n-k)!)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KcsckParams {
    pub k: usize,
    #[serde(rename = "A_k")]
    pub a_k: f64,
    #[serde(rename = "B_k")]
    pub b_k: f64,
    pub rho_k_value: f64,
}

impl KcsckParams {
    pub fn new(n: usize, k: usize, a_k: f64, b_k: f64) -> Self {
        KcsckParams { k, a_k, b_k, rho_k_value: a_k * binomial(n, k) }
    }
}

// ---------------------------------------------------------------------------
// fitting helpers

/// Coefficients on `powers` (rate 0) and the largest coefficient outside them.
fn split_fit(e: &ExpLaurentExpr, powers: &[f64]) -> (Vec<f64>, f64) {
    let mut coeffs = vec![0.0; powers.len()];
    let mut stray = 0.0_f64;
    for t in e.terms() {
        match powers.iter().position(|&p| t.rate == 0.0 && t.power == p) {
            Some(i) => coeffs[i] = t.coeff,
            None => stray = stray.max(t.coeff.abs()),
        }
    }
    (coeffs, stray)
}

/// Least squares `min |X c - b|` with equilibrated columns; fails when the
/// normal matrix condition number exceeds [`MAX_NORMAL_COND`].
fn lstsq(cols: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>, ClassifyError> {
    let rows = rhs.len();
    let p = cols.len();
    // max-abs then 2-norm, so that squaring cannot overflow
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| {
            let m = max_abs(c.iter().copied());
            m * c.iter().map(|v| (v / m).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    if norms.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(ClassifyError::IllConditioned { cond: f64::INFINITY });
    }
    let x = DMatrix::from_fn(rows, p, |i, j| cols[j][i] / norms[j]);
    let b = DVector::from_column_slice(rhs);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(cond <= MAX_NORMAL_COND) {
        return Err(ClassifyError::IllConditioned { cond });
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|_| ClassifyError::IllConditioned { cond })?;
    Ok(sol.iter().zip(&norms).map(|(v, n)| v / n).collect())
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn eval_grid(f: &ScalarField, grid: &[f64]) -> Result<Vec<f64>, ClassifyError> {
    grid.iter().map(|&y| f.eval(y).map_err(Into::into)).collect()
}

fn psi_grid(m: &RadialMetric, grid: &[f64]) -> Result<Vec<f64>, ClassifyError> {
    grid.iter().map(|&y| m.psi(y).map_err(Into::into)).collect()
}

fn powers_of(grid: &[f64], p: f64) -> Vec<f64> {
    grid.iter().map(|&y| if p.fract() == 0.0 { y.powi(p as i32) } else { y.powf(p) }).collect()
}

// ---------------------------------------------------------------------------
// extremal

fn extremal_powers(n: usize) -> Vec<f64> {
    if n == 1 {
        vec![0.0, 1.0, 2.0, 3.0]
    } else {
        vec![1.0 - n as f64, 2.0 - n as f64, 1.0, 2.0, 3.0]
    }
}

fn extremal_params(n: usize, c: &[f64], tol_abs: f64) -> ExtremalParams {
    // `0.0 - x` rather than `-x` so absent terms give +0
    let (a, b, cc, d) = if n == 1 {
        (0.0 - c[0], 1.0 - c[1], 0.0 - c[2], 0.0 - c[3])
    } else {
        (0.0 - c[0], 0.0 - c[1], 0.0 - c[3], 0.0 - c[4])
    };
    let small = |v: f64| v.abs() <= tol_abs;
    let flat = if n == 1 { small(cc) && small(d) } else { small(a) && small(b) && small(cc) && small(d) };
    ExtremalParams { a, b, c: cc, d, flat }
}

pub fn classify_extremal(m: &RadialMetric, cfg: &Config) -> Result<Membership<ExtremalParams>, ClassifyError> {
    let n = m.dim();
    let powers = extremal_powers(n);
    if let Some(psi) = m.symbolic_psi() {
        let scale = psi.max_abs_coeff().max(1.0);
        let (c, stray) = split_fit(psi, &powers);
        let mut mismatch = stray;
        if n >= 2 {
            mismatch = mismatch.max((c[2] - 1.0).abs());
        }
        let params = extremal_params(n, &c, cfg.tol * scale);
        return Ok(Membership::decide(params, mismatch / scale, cfg.tol));
    }
    let grid = m.grid(cfg.samples);
    let psi = psi_grid(m, &grid)?;
    let scale = max_abs(psi.iter().copied()).max(f64::MIN_POSITIVE);
    let (cols, rhs): (Vec<Vec<f64>>, Vec<f64>) = if n == 1 {
        (powers.iter().map(|&p| powers_of(&grid, p)).collect(), psi.clone())
    } else {
        let cols = [powers[0], powers[1], 2.0, 3.0].iter().map(|&p| powers_of(&grid, p)).collect();
        (cols, psi.iter().zip(&grid).map(|(p, y)| p - y).collect())
    };
    let sol = lstsq(&cols, &rhs)?;
    let resid = (0..grid.len())
        .map(|i| (rhs[i] - cols.iter().zip(&sol).map(|(c, s)| c[i] * s).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    let coeffs = if n == 1 { sol.clone() } else { vec![sol[0], sol[1], 1.0, sol[2], sol[3]] };
    let params = extremal_params(n, &coeffs, cfg.tol * scale.max(1.0));
    Ok(Membership::decide(params, resid / scale, cfg.tol))
}

// ---------------------------------------------------------------------------
// Kähler–Einstein

pub fn classify_ke(m: &RadialMetric, cfg: &Config) -> Result<Membership<KeParams>, ClassifyError> {
    let n = m.dim();
    let sigma = sigma_from_psi(m);
    let (slope, residual) = match &sigma {
        ScalarField::Symbolic(s) => {
            let scale = s.max_abs_coeff().max(1.0);
            let (c, stray) = split_fit(s, &[0.0, 1.0]);
            let mut mismatch = stray;
            if n >= 2 {
                mismatch = mismatch.max((c[0] - n as f64).abs());
            }
            (c[1], mismatch / scale)
        }
        ScalarField::Numeric(_) => {
            let grid = m.grid(cfg.samples);
            let vals = eval_grid(&sigma, &grid)?;
            let scale = max_abs(vals.iter().copied()).max(1.0);
            let (a, b) = if n == 1 {
                let sol = lstsq(&[vec![1.0; grid.len()], grid.clone()], &vals)?;
                (sol[0], sol[1])
            } else {
                let rhs: Vec<f64> = vals.iter().map(|v| v - n as f64).collect();
                let sol = lstsq(std::slice::from_ref(&grid), &rhs)?;
                (n as f64, sol[0])
            };
            let resid = grid.iter().zip(&vals).map(|(y, v)| (v - a - b * y).abs()).fold(0.0, f64::max);
            (b, resid / scale)
        }
    };
    let lambda = -2.0 * slope;
    let a_param = match classify_extremal(m, cfg)? {
        Membership::Member { params, .. } => Some(params.a),
        Membership::NotMember { .. } => None,
    };
    let a_zero = a_param.is_some_and(|a| a.abs() <= cfg.tol * 1f64.max(a.abs()).max(1.0));
    let defined_at_origin = m.y_range().lo == 0.0 && a_zero;
    let space_form = if n == 1 { true } else { a_zero };
    Ok(Membership::decide(
        KeParams { einstein_constant: lambda, defined_at_origin, space_form },
        residual,
        cfg.tol,
    ))
}

// ---------------------------------------------------------------------------
// Kähler–Ricci solitons

/// Closed-form soliton profile (`mu != 0`).
pub fn krs_profile(n: usize, p: &KrsParams) -> Result<ExpLaurentExpr, ClassifyError> {
    let (mu, lambda) = (p.mu, p.lambda);
    if mu == 0.0 || !mu.is_finite() {
        return Err(ClassifyError::ParamError("the closed form needs mu != 0".into()));
    }
    let nu = p.nu.unwrap_or(0.0);
    let mut terms = vec![Term::new(nu, 1.0 - n as f64, mu), Term::new(lambda / mu, 1.0, 0.0)];
    if n == 1 {
        let k1 = p.k1.ok_or_else(|| ClassifyError::ParamError("n = 1 solitons need k".into()))?;
        terms.push(Term::new(lambda / (mu * mu) - (k1 + 1.0) / mu, 0.0, 0.0));
    } else {
        let lead = (lambda - mu) / mu.powi(n as i32 + 1);
        let mut fact_ratio = (1..=n).map(|v| v as f64).product::<f64>(); // n!/j! at j = 0
        let mut mu_j = 1.0;
        for j in 0..n {
            terms.push(Term::new(lead * fact_ratio * mu_j, (j + 1) as f64 - n as f64, 0.0));
            fact_ratio /= (j + 1) as f64;
            mu_j *= mu;
        }
    }
    Ok(ExpLaurentExpr::from_terms(terms))
}

/// `sigma` of the closed-form soliton, derived from the profile:
/// `n + mu nu e^{mu y} / y^{n-1} + (lambda-mu)/mu^{1+n} Σ_{j=1}^{n} n!/(j-1)! mu^j y^{j-n}`.
pub fn krs_sigma(n: usize, p: &KrsParams) -> ExpLaurentExpr {
    let (mu, lambda, nu) = (p.mu, p.lambda, p.nu.unwrap_or(0.0));
    let mut terms = vec![Term::new(n as f64, 0.0, 0.0), Term::new(mu * nu, 1.0 - n as f64, mu)];
    let lead = (lambda - mu) / mu.powi(n as i32 + 1);
    for j in 1..=n {
        let ratio: f64 = (j..=n).map(|v| v as f64).product(); // n!/(j-1)!
        terms.push(Term::new(lead * ratio * mu.powi(j as i32), j as f64 - n as f64, 0.0));
    }
    ExpLaurentExpr::from_terms(terms)
}

/// The same sum written with exponent `y^{n-j}` and the `j = n` term folded
/// into `n lambda / mu`; kept only to measure how far it is from [`krs_sigma`].
pub fn krs_sigma_flipped_exponent(n: usize, p: &KrsParams) -> ExpLaurentExpr {
    let (mu, lambda, nu) = (p.mu, p.lambda, p.nu.unwrap_or(0.0));
    let mut terms = vec![Term::new(n as f64 * lambda / mu, 0.0, 0.0), Term::new(mu * nu, 1.0 - n as f64, mu)];
    let lead = (lambda - mu) / mu.powi(n as i32 + 1);
    for j in 1..n {
        let ratio: f64 = (j..=n).map(|v| v as f64).product();
        terms.push(Term::new(lead * ratio * mu.powi(j as i32), n as f64 - j as f64, 0.0));
    }
    ExpLaurentExpr::from_terms(terms)
}

/// Comparison of the derived soliton `sigma` with the flipped-exponent form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaDiscrepancy {
    /// Max over the grid of `|sigma - n - mu psi + lambda y|` for the derived
    /// sigma, relative to `max(1, max |sigma|)`.
    pub derived_residual: f64,
    /// Max over the grid of `|derived - flipped|`, relative likewise.
    pub flipped_deviation: f64,
    pub note: String,
}

pub fn krs_sigma_discrepancy(n: usize, p: &KrsParams, grid: &[f64]) -> Result<SigmaDiscrepancy, ClassifyError> {
    let psi = krs_profile(n, p)?;
    let derived = krs_sigma(n, p);
    let flipped = krs_sigma_flipped_exponent(n, p);
    let mut scale = 1.0_f64;
    let mut resid = 0.0_f64;
    let mut dev = 0.0_f64;
    for &y in grid {
        let s = derived.evaluate(y).map_err(GeometryError::from)?;
        let ps = psi.evaluate(y).map_err(GeometryError::from)?;
        let fl = flipped.evaluate(y).map_err(GeometryError::from)?;
        scale = scale.max(s.abs());
        resid = resid.max((s - n as f64 - p.mu * ps + p.lambda * y).abs());
        dev = dev.max((s - fl).abs());
    }
    let (resid, dev) = (resid / scale, dev / scale);
    let note = format!(
        "soliton sigma: the sum derived from the closed-form profile carries y^(j-n); \
         writing it with y^(n-j) deviates by {dev:.3e} (relative) on the grid, \
         while the derived form satisfies the soliton equation to {resid:.3e}"
    );
    Ok(SigmaDiscrepancy { derived_residual: resid, flipped_deviation: dev, note })
}

pub fn classify_krs(m: &RadialMetric, cfg: &Config) -> Result<Membership<KrsParams>, ClassifyError> {
    let n = m.dim();
    let nf = n as f64;
    let grid = m.grid(cfg.samples.max(32));
    let psi = psi_grid(m, &grid)?;
    let dpsi: Vec<f64> = grid.iter().map(|&y| m.psi_dot(y)).collect::<Result<_, _>>()?;
    let scale = 1.0 + max_abs(dpsi.iter().copied());
    // sigma - n = mu psi - lambda y   (n >= 2)
    // psi'      = mu psi + kappa - lambda y   (n = 1, kappa = k + 1)
    let lhs: Vec<f64> = (0..grid.len())
        .map(|i| if n == 1 { dpsi[i] } else { dpsi[i] + (nf - 1.0) * psi[i] / grid[i] - nf })
        .collect();
    let neg_y: Vec<f64> = grid.iter().map(|y| -y).collect();
    let mut cols = vec![psi.clone(), neg_y.clone()];
    if n == 1 {
        cols.push(vec![1.0; grid.len()]);
    }
    let sol = lstsq(&cols, &lhs)?;
    let residual = |s: &[f64], cols: &[Vec<f64>]| {
        (0..grid.len())
            .map(|i| (lhs[i] - cols.iter().zip(s).map(|(c, v)| c[i] * v).sum::<f64>()).abs())
            .fold(0.0, f64::max)
            / scale
    };

    if sol[0].abs() <= cfg.tol {
        // trivial branch: refit with mu = 0
        let mut cols0 = vec![neg_y];
        if n == 1 {
            cols0.push(vec![1.0; grid.len()]);
        }
        let s0 = lstsq(&cols0, &lhs)?;
        let params = KrsParams {
            mu: 0.0,
            lambda: s0[0],
            nu: None,
            k1: (n == 1).then(|| s0[1] - 1.0),
            trivial: true,
        };
        return Ok(Membership::decide(params, residual(&s0, &cols0), cfg.tol));
    }

    let (mu, lambda) = (sol[0], sol[1]);
    let k1 = (n == 1).then(|| sol[2] - 1.0);
    let res = residual(&sol, &cols);
    if res > cfg.tol {
        return Ok(Membership::NotMember { residual: res });
    }
    let base = KrsParams { mu, lambda, nu: Some(0.0), k1, trivial: false };
    let nu = match m.symbolic_psi() {
        Some(e) => e
            .terms()
            .iter()
            .find(|t| t.power == 1.0 - nf && t.rate != 0.0 && (t.rate - mu).abs() <= 1e-6 * mu.abs().max(1.0))
            .map_or(0.0, |t| t.coeff),
        None => {
            let y = grid[grid.len() / 2];
            let particular = krs_profile(n, &base)?.evaluate(y).map_err(GeometryError::from)?;
            (m.psi(y)? - particular) * y.powi(n as i32 - 1) * (-mu * y).exp()
        }
    };
    // nontrivial iff not flat: nu != 0 (n = 1) or nu != 0 or lambda != mu (n >= 2)
    let tiny = |v: f64| v.abs() <= cfg.tol * v.abs().max(1.0);
    let trivial = if n == 1 { tiny(nu) } else { tiny(nu) && tiny(lambda - mu) };
    Ok(Membership::Member { params: KrsParams { nu: Some(nu), trivial, ..base }, residual: res })
}

// ---------------------------------------------------------------------------
// generalized cscK

/// `u = (A_k + B_k/y^n)^{1/k}`: principal root for even `k`, real
/// sign-preserving root for odd `k`.
pub fn kcsck_root(n: usize, k: usize, a_k: f64, b_k: f64, y: f64) -> Result<f64, ClassifyError> {
    let rad = a_k + b_k / y.powi(n as i32);
    if k.is_multiple_of(2) {
        if rad < 0.0 {
            return Err(ClassifyError::SignError { k, y, radicand: rad });
        }
        Ok(rad.powf(1.0 / k as f64))
    } else if k == 1 {
        Ok(rad)
    } else {
        Ok(rad.signum() * rad.abs().powf(1.0 / k as f64))
    }
}

/// `sigma(y) = n - y (A_k + B_k/y^n)^{1/k}`; `NaN` where the even root is undefined.
pub fn kcsck_sigma(n: usize, k: usize, a_k: f64, b_k: f64) -> ScalarFn {
    Arc::new(move |y| match kcsck_root(n, k, a_k, b_k, y) {
        Ok(u) => n as f64 - y * u,
        Err(_) => f64::NAN,
    })
}

pub fn classify_kcsck(m: &RadialMetric, k: usize, cfg: &Config) -> Result<Membership<KcsckParams>, ClassifyError> {
    let n = m.dim();
    if k == 0 || k > n {
        return Err(GeometryError::Range { k, n }.into());
    }
    let nf = n as f64;
    match sigma_from_psi(m) {
        ScalarField::Symbolic(sigma) => {
            let u = ExpLaurentExpr::constant(nf).sub(&sigma).mul_monomial(1.0, -1.0);
            let f = u.powi(k as u32);
            let scale = f.max_abs_coeff().max(1.0);
            let (c, stray) = split_fit(&f, &[0.0, -nf]);
            Ok(Membership::decide(KcsckParams::new(n, k, c[0], c[1]), stray / scale, cfg.tol))
        }
        sigma @ ScalarField::Numeric(_) => {
            let grid = m.grid(cfg.samples);
            let vals = eval_grid(&sigma, &grid)?;
            let f: Vec<f64> = grid
                .iter()
                .zip(&vals)
                .map(|(y, s)| {
                    let u = (nf - s) / y;
                    (0..k).fold(1.0, |acc, _| acc * u)
                })
                .collect();
            let cols = vec![vec![1.0; grid.len()], powers_of(&grid, -nf)];
            let sol = lstsq(&cols, &f)?;
            let scale = max_abs(f.iter().copied()).max(1.0);
            let resid = (0..grid.len())
                .map(|i| (f[i] - sol[0] - sol[1] * cols[1][i]).abs())
                .fold(0.0, f64::max);
            Ok(Membership::decide(KcsckParams::new(n, k, sol[0], sol[1]), resid / scale, cfg.tol))
        }
    }
}

// ---------------------------------------------------------------------------
// constructors

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyParams {
    Flat,
    Extremal { a: f64, b: f64, c: f64, d: f64 },
    /// `psi = y - A/y^{n-1} - C y^2` (n ≥ 2), `psi = y - A - C y^2` (n = 1).
    Ke { a: f64, c: f64 },
    Krs { mu: f64, lambda: f64, nu: f64, k1: f64 },
    /// Integrated from `psi(y0) = psi0` over `y_span` (default `(y0/4, 4 y0)`).
    Kcsck { k: usize, a_k: f64, b_k: f64, y0: f64, psi0: f64, y_span: Option<(f64, f64)>, tol: f64 },
}

fn extremal_expr(n: usize, a: f64, b: f64, c: f64, d: f64) -> ExpLaurentExpr {
    let nf = n as f64;
    let terms = if n == 1 {
        vec![Term::new(1.0 - b, 1.0, 0.0), Term::new(-a, 0.0, 0.0), Term::new(-c, 2.0, 0.0), Term::new(-d, 3.0, 0.0)]
    } else {
        vec![
            Term::new(1.0, 1.0, 0.0),
            Term::new(-a, 1.0 - nf, 0.0),
            Term::new(-b, 2.0 - nf, 0.0),
            Term::new(-c, 2.0, 0.0),
            Term::new(-d, 3.0, 0.0),
        ]
    };
    ExpLaurentExpr::from_terms(terms)
}

pub fn construct_family(n: usize, params: &FamilyParams) -> Result<RadialMetric, ClassifyError> {
    if n == 0 {
        return Err(ClassifyError::ParamError("dimension must be >= 1".into()));
    }
    let symbolic = |psi: ExpLaurentExpr| {
        RadialMetric::symbolic_auto(n, psi).map_err(|e| ClassifyError::ParamError(e.to_string()))
    };
    match *params {
        FamilyParams::Flat => symbolic(ExpLaurentExpr::y()),
        FamilyParams::Extremal { a, b, c, d } => symbolic(extremal_expr(n, a, b, c, d)),
        FamilyParams::Ke { a, c } => symbolic(extremal_expr(n, a, 0.0, c, 0.0)),
        FamilyParams::Krs { mu, lambda, nu, k1 } => {
            if mu == 0.0 {
                return Err(ClassifyError::ParamError("mu = 0 solitons are Kähler–Einstein; use the ke family".into()));
            }
            let p = KrsParams { mu, lambda, nu: Some(nu), k1: Some(k1), trivial: false };
            symbolic(krs_profile(n, &p)?)
        }
        FamilyParams::Kcsck { k, a_k, b_k, y0, psi0, y_span, tol } => {
            if k == 0 || k > n {
                return Err(GeometryError::Range { k, n }.into());
            }
            if !(psi0 > 0.0 && y0 > 0.0) {
                return Err(ClassifyError::ParamError("need y0 > 0 and psi0 > 0".into()));
            }
            kcsck_root(n, k, a_k, b_k, y0).map_err(|e| ClassifyError::ParamError(e.to_string()))?;
            let span = y_span.unwrap_or((0.25 * y0, 4.0 * y0));
            let sigma = kcsck_sigma(n, k, a_k, b_k);
            let integrated = psi_from_sigma_numeric(sigma.clone(), n, y0, psi0, span, tol)?;
            let profile = integrated.profile.with_sigma(sigma);
            Ok(RadialMetric::numeric(n, profile, integrated.y_range)?)
        }
    }
}

// ---------------------------------------------------------------------------
// full report

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalReport {
    pub member: bool,
    pub params: Option<ExtremalParams>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeReport {
    pub member: bool,
    pub einstein_constant: Option<f64>,
    pub defined_at_origin: bool,
    pub space_form: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrsReport {
    pub member: bool,
    pub trivial: bool,
    pub params: Option<KrsParams>,
    pub lambda_solitonic: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KcsckReport {
    pub k: usize,
    pub member: bool,
    pub params: Option<KcsckParams>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub extremal: ExtremalReport,
    pub ke: KeReport,
    pub krs: KrsReport,
    pub kcsck: Vec<KcsckReport>,
    pub notes: Vec<String>,
}

impl ClassificationReport {
    pub fn is_ke(&self) -> bool {
        self.ke.member
    }

    pub fn csck_levels(&self) -> Vec<usize> {
        self.kcsck.iter().filter(|r| r.member).map(|r| r.k).collect()
    }
}

pub fn classify(m: &RadialMetric, cfg: &Config) -> Result<ClassificationReport, ClassifyError> {
    let n = m.dim();
    let mut notes = Vec::new();
    let ext = classify_extremal(m, cfg)?;
    let ke = classify_ke(m, cfg)?;
    let ke_params = ke.params().copied();

    if let (Some(kp), Some(ep)) = (ke_params, ext.params()) {
        let expected = 2.0 * ep.c * (n as f64 + 1.0);
        if (kp.einstein_constant - expected).abs() > 1e-6 * expected.abs().max(1.0) {
            notes.push(format!(
                "Einstein constant {} disagrees with 2C(n+1) = {}",
                kp.einstein_constant, expected
            ));
        }
    }
    if ke.is_member() && !ext.is_member() {
        notes.push("KE profile not recognized as extremal".into());
    }

    let krs = match classify_krs(m, cfg) {
        Ok(Membership::Member { params, residual }) => KrsReport {
            member: true,
            trivial: params.trivial,
            lambda_solitonic: Some(params.lambda),
            params: Some(params),
            residual: Some(residual),
        },
        Ok(Membership::NotMember { residual }) => {
            KrsReport { member: false, trivial: false, params: None, lambda_solitonic: None, residual: Some(residual) }
        }
        Err(ClassifyError::IllConditioned { cond }) => match ke_params {
            // psi proportional to y on the grid: the soliton fit is degenerate,
            // but a KE metric is a trivial soliton
            Some(kp) => {
                notes.push(format!(
                    "soliton fit degenerate (condition {cond:.3e}); KE metric reported as trivial soliton"
                ));
                let lambda = kp.einstein_constant / 2.0;
                KrsReport {
                    member: true,
                    trivial: true,
                    params: Some(KrsParams {
                        mu: 0.0,
                        lambda,
                        nu: None,
                        // n = 1: psi' = k + 1 - lambda y
                        k1: (n == 1).then(|| {
                            let y = m.grid(3)[1];
                            sigma_from_psi(m).eval(y).unwrap_or(f64::NAN) + lambda * y - 1.0
                        }),
                        trivial: true,
                    }),
                    lambda_solitonic: Some(lambda),
                    residual: None,
                }
            }
            None => {
                notes.push(format!("soliton fit degenerate (condition {cond:.3e})"));
                KrsReport { member: false, trivial: false, params: None, lambda_solitonic: None, residual: None }
            }
        },
        Err(e) => return Err(e),
    };
    if let (Some(kp), Some(ls)) = (ke_params, krs.lambda_solitonic) {
        if krs.trivial && (kp.einstein_constant - 2.0 * ls).abs() > 1e-9 * kp.einstein_constant.abs().max(1.0) {
            notes.push(format!(
                "scale mismatch: Einstein constant {} vs twice the solitonic constant {}",
                kp.einstein_constant,
                2.0 * ls
            ));
        }
    }
    if krs.member && krs.trivial && !ke.is_member() {
        notes.push("trivial soliton not recognized as KE".into());
    }

    let mut kcsck = Vec::with_capacity(n);
    for k in 1..=n {
        let r = classify_kcsck(m, k, cfg)?;
        kcsck.push(KcsckReport { k, member: r.is_member(), params: r.params().copied(), residual: r.residual() });
    }

    let ke_report = KeReport {
        member: ke.is_member(),
        einstein_constant: ke_params.map(|p| p.einstein_constant),
        defined_at_origin: ke_params.is_some_and(|p| p.defined_at_origin),
        space_form: ke_params.is_some_and(|p| p.space_form),
        residual: ke.residual(),
    };
    let ext_report = ExtremalReport { member: ext.is_member(), params: ext.params().copied(), residual: ext.residual() };
    if ext_report.params.is_some_and(|p| p.flat) {
        notes.push("flat".into());
    }
    Ok(ClassificationReport { extremal: ext_report, ke: ke_report, krs, kcsck, notes })
}

// ---------------------------------------------------------------------------
// intersection identities

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Vacuous,
    Confirmed,
    #[serde(rename = "VIOLATED")]
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Implication {
    pub id: String,
    pub statement: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub classification: ClassificationReport,
    pub implications: Vec<Implication>,
    pub notes: Vec<String>,
}

impl TheoremReport {
    pub fn violated(&self) -> bool {
        self.implications.iter().any(|i| i.status == Status::Violated)
    }
}

fn implication(id: &str, statement: &str, premise: bool, conclusion: bool, detail: String) -> Implication {
    let status = match (premise, conclusion) {
        (false, _) => Status::Vacuous,
        (true, true) => Status::Confirmed,
        (true, false) => Status::Violated,
    };
    Implication { id: id.into(), statement: statement.into(), status, detail }
}

pub fn verify_theorem(m: &RadialMetric, cfg: &Config) -> Result<TheoremReport, ClassifyError> {
    let report = classify(m, cfg)?;
    let ke = report.ke.member;
    let levels = report.csck_levels();
    let ext = report.extremal.member;
    let krs = report.krs.member;
    let nontrivial_krs = krs && !report.krs.trivial;

    let implications = vec![
        implication(
            "i",
            "extremal and KRS implies KE",
            ext && krs,
            ke,
            format!("extremal={ext} krs={krs} ke={ke}"),
        ),
        implication(
            "ii",
            "k-cscK and h-cscK with k != h implies KE",
            levels.len() >= 2,
            ke,
            format!("cscK levels {levels:?}, ke={ke}"),
        ),
        implication(
            "iii",
            "k-cscK with k > 1 and extremal implies KE",
            ext && levels.iter().any(|&k| k > 1),
            ke,
            format!("cscK levels {levels:?}, extremal={ext}, ke={ke}"),
        ),
        implication(
            "iv",
            "k-cscK and nontrivial KRS is impossible",
            nontrivial_krs && !levels.is_empty(),
            false,
            format!("cscK levels {levels:?}, nontrivial krs={nontrivial_krs}"),
        ),
    ];

    let mut notes = Vec::new();
    if let (Some(p), true) = (report.krs.params, nontrivial_krs) {
        if m.dim() >= 2 {
            let d = krs_sigma_discrepancy(m.dim(), &p, &m.grid(cfg.samples))?;
            notes.push(d.note);
        }
    }
    Ok(TheoremReport { classification: report, implications, notes })
}

// ---------------------------------------------------------------------------
// seeded property suites

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// extremal draws with a non-KE obstruction are never solitons
    ExtremalNotKrs,
    /// k-cscK draws with B_k != 0 have nonconstant rho_h, h != k
    KcsckOtherLevels,
    /// k-cscK draws with B_k != 0, k > 1, are never extremal
    KcsckNotExtremal,
    /// nonflat soliton draws have nonconstant rho_k for every k
    KrsNotKcsck,
}

impl Suite {
    pub const ALL: [Suite; 4] =
        [Suite::ExtremalNotKrs, Suite::KcsckOtherLevels, Suite::KcsckNotExtremal, Suite::KrsNotKcsck];

    pub fn label(&self) -> &'static str {
        match self {
            Suite::ExtremalNotKrs => "i",
            Suite::KcsckOtherLevels => "ii",
            Suite::KcsckNotExtremal => "iii",
            Suite::KrsNotKcsck => "iv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub draws: usize,
    pub rejected_draws: usize,
    pub violations: usize,
    pub details: Vec<String>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Random extremal parameters with a non-KE obstruction.
pub fn draw_extremal(rng: &mut ChaCha8Rng) -> (usize, FamilyParams) {
    loop {
        let n = rng.random_range(1..=5usize);
        let [a, b, c, d] = [(); 4].map(|_| uniform(rng, -2.0, 2.0));
        // for n = 1 the B-term is linear and does not obstruct KE
        let obstruction = if n == 1 { d.abs() } else { b.abs() + d.abs() };
        if obstruction > 0.1 {
            return (n, FamilyParams::Extremal { a, b, c, d });
        }
    }
}

/// Random k-cscK Cauchy data with `|B_k| > 0.1` and positive radicand at `y0 = 1`.
pub fn draw_kcsck(rng: &mut ChaCha8Rng, k_min: usize) -> (usize, FamilyParams) {
    loop {
        let n = rng.random_range(2..=5usize);
        let k = rng.random_range(1..=n);
        let a_k = uniform(rng, -2.0, 2.0);
        let b_k = uniform(rng, -2.0, 2.0);
        let psi0 = uniform(rng, 0.2, 2.0);
        if k >= k_min && b_k.abs() > 0.1 && a_k + b_k > 0.0 {
            return (n, FamilyParams::Kcsck { k, a_k, b_k, y0: 1.0, psi0, y_span: None, tol: 1e-10 });
        }
    }
}

/// Random nonflat soliton parameters (`|mu| > 0.1`).
pub fn draw_krs(rng: &mut ChaCha8Rng) -> (usize, FamilyParams) {
    loop {
        let n = rng.random_range(1..=5usize);
        let mu = uniform(rng, -2.0, 2.0);
        let lambda = uniform(rng, -2.0, 2.0);
        let nu = uniform(rng, -2.0, 2.0);
        let k1 = uniform(rng, -2.0, 2.0);
        let nonflat = if n == 1 { nu.abs() > 0.1 } else { nu.abs() > 0.1 || (lambda - mu).abs() > 0.1 };
        if mu.abs() > 0.1 && nonflat {
            return (n, FamilyParams::Krs { mu, lambda, nu, k1 });
        }
    }
}

fn suite_seed(seed: u64, suite: Suite) -> u64 {
    let tag = match suite {
        Suite::ExtremalNotKrs => 0x11,
        Suite::KcsckOtherLevels => 0x22,
        Suite::KcsckNotExtremal => 0x33,
        Suite::KrsNotKcsck => 0x44,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

/// Runs `draws` valid draws of one property; draws without a usable
/// validity interval are redrawn and counted in `rejected_draws`.
pub fn run_suite(suite: Suite, draws: usize, seed: u64, cfg: &Config) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed(seed, suite));
    let mut report = SuiteReport { suite, draws: 0, rejected_draws: 0, violations: 0, details: Vec::new() };
    while report.draws < draws {
        let (n, params) = match suite {
            Suite::ExtremalNotKrs => draw_extremal(&mut rng),
            Suite::KcsckOtherLevels => draw_kcsck(&mut rng, 1),
            Suite::KcsckNotExtremal => draw_kcsck(&mut rng, 2),
            Suite::KrsNotKcsck => draw_krs(&mut rng),
        };
        let m = match construct_family(n, &params) {
            Ok(m) => m,
            Err(_) => {
                report.rejected_draws += 1;
                continue;
            }
        };
        match check_draw(suite, &m, &params, cfg) {
            Ok(None) => report.draws += 1,
            Ok(Some(why)) => {
                report.draws += 1;
                report.violations += 1;
                report.details.push(format!("n={n} {params:?}: {why}"));
            }
            Err(_) => report.rejected_draws += 1,
        }
    }
    report
}

/// `Some(reason)` when the draw contradicts the property.
fn check_draw(suite: Suite, m: &RadialMetric, params: &FamilyParams, cfg: &Config) -> Result<Option<String>, ClassifyError> {
    let grid = m.grid(cfg.samples);
    let n = m.dim();
    match suite {
        Suite::ExtremalNotKrs => match classify_krs(m, cfg) {
            Ok(Membership::Member { params, .. }) => Ok(Some(format!("classified as soliton {params:?}"))),
            Ok(Membership::NotMember { .. }) | Err(ClassifyError::IllConditioned { .. }) => Ok(None),
            Err(e) => Err(e),
        },
        Suite::KcsckOtherLevels => {
            let FamilyParams::Kcsck { k, .. } = *params else { unreachable!() };
            for h in (1..=n).filter(|&h| h != k) {
                if let Constancy::Constant(v) = rho_k(m, h)?.constancy(&grid, cfg.tol)? {
                    return Ok(Some(format!("rho_{h} constant = {v}")));
                }
            }
            Ok(None)
        }
        Suite::KcsckNotExtremal => match classify_extremal(m, cfg) {
            Ok(Membership::Member { params, .. }) => Ok(Some(format!("classified as extremal {params:?}"))),
            Ok(Membership::NotMember { .. }) | Err(ClassifyError::IllConditioned { .. }) => Ok(None),
            Err(e) => Err(e),
        },
        Suite::KrsNotKcsck => {
            for k in 1..=n {
                if let Constancy::Constant(v) = rho_k(m, k)?.constancy(&grid, cfg.tol)? {
                    return Ok(Some(format!("rho_{k} constant = {v}")));
                }
            }
            Ok(None)
        }
    }
}
