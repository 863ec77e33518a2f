//! Brute-force cross-checks of the closed-form curvature formulas.
//!
//! * `rho_k` from the polynomial `det(g + s Ric) / det(g)` sampled at a few
//!   values of `s` and solved as a Vandermonde system;
//! * the Ricci potential derivative `L'(r)` by finite differences of
//!   `L = -(n-1) log y - log psi + n log r` along an integrated table;
//! * Riemann components at axis points by finite differences of the metric
//!   on a 5x5 complex stencil, re-integrating `y(r)` at every stencil point.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExpLaurentExpr, Term};
use crate::geometry::{
    metric_components, positive_component, rho_k, ricci_components, riemann_axis, sigma_from_psi, GeometryError,
    RadialMetric, YRange,
};
use crate::ode::{integrate_y, solve_y_at, OdeError, PotentialTable, DEFAULT_ROWS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("singular metric at the site (det g = {det})")]
    SingularMatrix { det: f64 },
    #[error("Vandermonde system too ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("stencil point leaves the validity interval: {0}")]
    StencilOutOfDomain(String),
    #[error("table too short: {rows} rows, need at least 32")]
    TableTooShort { rows: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub const RHO_THRESHOLD: f64 = 1e-8;
pub const RICCI_THRESHOLD: f64 = 1e-5;
pub const RIEMANN_THRESHOLD: f64 = 1e-4;
/// Largest accepted Vandermonde condition number.
pub const MAX_VANDERMONDE_COND: f64 = 1e6;
/// Tolerance of the local re-integrations feeding the Riemann stencil.
pub const STENCIL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub quantity: String,
    /// Sample sites, one coordinate tuple per entry.
    pub points: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub oracle: Vec<f64>,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl OracleReport {
    fn new(quantity: &str, points: Vec<Vec<f64>>, reference: Vec<f64>, oracle: Vec<f64>, threshold: f64) -> Self {
        let max_rel_err = reference
            .iter()
            .zip(&oracle)
            .map(|(r, o)| rel_err(*o, *r))
            .fold(0.0, f64::max);
        OracleReport {
            quantity: quantity.into(),
            points,
            reference,
            oracle,
            max_rel_err,
            threshold,
            pass: max_rel_err <= threshold,
        }
    }
}

/// `|a - b| / max(1, |b|)`; `NaN` inputs count as infinitely wrong.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let e = (a - b).abs() / b.abs().max(1.0);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

fn det(m: &DMatrix<Complex64>) -> Complex64 {
    m.clone().lu().determinant()
}

fn vandermonde(nodes: &[Complex64]) -> DMatrix<Complex64> {
    let p = nodes.len();
    DMatrix::from_fn(p, p, |i, j| nodes[i].powu(j as u32))
}

fn condition(v: &DMatrix<Complex64>) -> f64 {
    let sv = v.clone().singular_values();
    sv.max() / sv.min()
}

/// `rho_1 .. rho_n` at the site `z` (with `y_at = y(|z|^2)`) from the
/// polynomial `P(s) = det(g + s Ric) / det(g)`.
///
/// `P` is sampled at the `n + 1` points `s_j = h w^j` on the circle of
/// radius `h = 0.5 / max(1, |g^{-1} Ric|_F)`, `w = exp(2 pi i / (n + 1))`,
/// and the coefficients come from the Vandermonde solve in `t = s / h`.
/// On the circle that system is unitary up to scale, so rounding in `P`
/// is not amplified.
pub fn rho_det_oracle(m: &RadialMetric, z: &[Complex64], y_at: f64) -> Result<Vec<f64>, OracleError> {
    let n = m.dim();
    let g = metric_components(m, z, y_at)?;
    let ric = ricci_components(m, z, y_at)?;
    let (g, ric) = (g.matrix(), ric.matrix());
    let det_g = det(g);
    if !(det_g.re > 0.0) {
        return Err(OracleError::SingularMatrix { det: det_g.re });
    }
    let ginv = g.clone().try_inverse().ok_or(OracleError::SingularMatrix { det: det_g.re })?;
    let radius = (&ginv * ric).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let h = 0.5 / radius.max(1.0);

    let p = n + 1;
    let nodes: Vec<Complex64> =
        (0..p).map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / p as f64)).collect();
    let v = vandermonde(&nodes);
    let cond = condition(&v);
    if cond > MAX_VANDERMONDE_COND {
        return Err(OracleError::IllConditioned { cond });
    }
    let vals = DVector::from_iterator(
        p,
        nodes.iter().map(|&t| {
            let m = g + ric.map(|c| c * (t * h));
            det(&m) / det_g
        }),
    );
    let coeffs = v.lu().solve(&vals).ok_or(OracleError::IllConditioned { cond: f64::INFINITY })?;
    Ok((1..=n).map(|k| coeffs[k].re / h.powi(k as i32)).collect())
}

/// [`rho_det_oracle`] against [`rho_k`] at the given sites.
pub fn rho_det_report(m: &RadialMetric, sites: &[(Vec<Complex64>, f64)]) -> Result<OracleReport, OracleError> {
    let n = m.dim();
    let fields: Vec<_> = (1..=n).map(|k| rho_k(m, k)).collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    let mut reference = Vec::new();
    let mut oracle = Vec::new();
    for (z, y) in sites {
        let o = rho_det_oracle(m, z, *y)?;
        for (k, f) in fields.iter().enumerate() {
            let mut pt: Vec<f64> = z.iter().flat_map(|c| [c.re, c.im]).collect();
            pt.push(*y);
            pt.push((k + 1) as f64);
            points.push(pt);
            reference.push(f.eval(*y)?);
            oracle.push(o[k]);
        }
    }
    Ok(OracleReport::new("rho_k", points, reference, oracle, RHO_THRESHOLD))
}

/// Finite-difference weights for the first derivative at `x0` on `xs`.
fn first_derivative_weights(xs: &[f64], x0: f64) -> Vec<f64> {
    // derivative of the Lagrange basis polynomials at x0
    (0..xs.len())
        .map(|i| {
            let denom: f64 = (0..xs.len()).filter(|&j| j != i).map(|j| xs[i] - xs[j]).product();
            let mut sum = 0.0;
            for m in (0..xs.len()).filter(|&m| m != i) {
                let prod: f64 = (0..xs.len()).filter(|&j| j != i && j != m).map(|j| x0 - xs[j]).product();
                sum += prod;
            }
            sum / denom
        })
        .collect()
}

/// Compares `L'(r)` from 5-point differences of
/// `L = -(n-1) log y - log psi(y) + n log r` along the table with
/// `(n - sigma(y)) / r`, on the interior 80% of the rows.
pub fn ricci_fd_oracle(m: &RadialMetric, table: &PotentialTable) -> Result<OracleReport, OracleError> {
    let rows = &table.rows;
    if rows.len() < 32 {
        return Err(OracleError::TableTooShort { rows: rows.len() });
    }
    let n = m.dim() as f64;
    let sigma = sigma_from_psi(m);
    let l: Vec<f64> = rows
        .iter()
        .map(|row| Ok(-(n - 1.0) * row.y.ln() - m.psi(row.y)?.ln() + n * row.t))
        .collect::<Result<_, GeometryError>>()?;
    let len = rows.len();
    let (first, last) = (len / 10, len - len / 10);
    let mut points = Vec::new();
    let mut reference = Vec::new();
    let mut oracle = Vec::new();
    for i in first.max(2)..last.min(len - 2) {
        let ts: Vec<f64> = (i - 2..=i + 2).map(|j| rows[j].t).collect();
        let w = first_derivative_weights(&ts, rows[i].t);
        let dl_dt: f64 = w.iter().zip(i - 2..=i + 2).map(|(w, j)| w * l[j]).sum();
        let row = &rows[i];
        points.push(vec![row.t, row.r, row.y]);
        oracle.push(dl_dt / row.r);
        reference.push((n - sigma.eval(row.y)?) / row.r);
    }
    Ok(OracleReport::new("ricci_potential_derivative", points, reference, oracle, RICCI_THRESHOLD))
}

/// Table for [`ricci_fd_oracle`]: integrates over `t_span` and, when `y`
/// reaches an end of its range early, re-integrates over the part actually
/// covered so that all [`DEFAULT_ROWS`] rows resolve the profile.
pub fn oracle_table(m: &RadialMetric, y0: f64, t_span: (f64, f64), tol: f64) -> Result<PotentialTable, OdeError> {
    let first = integrate_y(m, 0.0, y0, t_span, tol)?;
    let (a, b) = (first.rows[0].t, first.rows[first.len() - 1].t);
    if first.len() >= DEFAULT_ROWS - 1 || !(a < 0.0 && b > 0.0) {
        return Ok(first);
    }
    integrate_y(m, 0.0, y0, (0.99 * a, 0.99 * b), tol)
}

/// Sign convention of curvature components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// `R = ∂∂̄g - ∂g g^{-1} ∂̄g`, the one used by [`riemann_axis`].
    Axis,
    /// `R = -∂∂̄g + ∂g g^{-1} ∂̄g`.
    Opposite,
}

/// `R_{i j̄ k k̄}` at the axis point `(sqrt(r), 0, ..., 0)` by finite
/// differences in `z_k` (5x5 stencil, step `1e-4 sqrt(r)`), with `y` at each
/// stencil point obtained by integrating `dy/dt = psi` from `(log r, y_at)`.
/// Indices are zero-based.
pub fn riemann_component_fd(
    m: &RadialMetric,
    r: f64,
    y_at: f64,
    i: usize,
    j: usize,
    k: usize,
    convention: Convention,
) -> Result<f64, OracleError> {
    let n = m.dim();
    if i >= n || j >= n || k >= n {
        return Err(GeometryError::Domain(format!("index out of range for dimension {n}")).into());
    }
    if !(r > 0.0) || !m.y_range().contains(y_at) {
        return Err(GeometryError::Domain(format!("invalid axis site r = {r}, y = {y_at}")).into());
    }
    let h = 1e-4 * r.sqrt();
    let mut ys: HashMap<u64, f64> = HashMap::new();
    let mut metric_at = |a: i32, b: i32| -> Result<DMatrix<Complex64>, OracleError> {
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        z[0] = Complex64::new(r.sqrt(), 0.0);
        z[k] += Complex64::new(a as f64 * h, b as f64 * h);
        let rr: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        let y = match ys.get(&rr.to_bits()) {
            Some(&y) => y,
            None => {
                let y = if rr == r {
                    y_at
                } else {
                    solve_y_at(m, r.ln(), y_at, rr.ln(), STENCIL_TOL).map_err(|e: OdeError| {
                        OracleError::StencilOutOfDomain(format!("r' = {rr}: {e}"))
                    })?
                };
                ys.insert(rr.to_bits(), y);
                y
            }
        };
        metric_components(m, &z, y)
            .map(|g| g.matrix().clone())
            .map_err(|e| OracleError::StencilOutOfDomain(e.to_string()))
    };

    let d1 = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
    let d2 = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
    let zero = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let (mut gx, mut gy, mut gxx, mut gyy) = (zero.clone(), zero.clone(), zero.clone(), zero.clone());
    let g0 = metric_at(0, 0)?;
    for s in -2..=2i32 {
        let w = (s + 2) as usize;
        let gxs = metric_at(s, 0)?;
        let gys = metric_at(0, s)?;
        gx += gxs.map(|c| c * d1[w]);
        gy += gys.map(|c| c * d1[w]);
        gxx += gxs.map(|c| c * d2[w]);
        gyy += gys.map(|c| c * d2[w]);
    }
    let iu = Complex64::new(0.0, 1.0);
    // Wirtinger derivatives in z_k
    let dz = (&gx - gy.map(|c| c * iu)).map(|c| c * (0.5 / h));
    let dzbar = (&gx + gy.map(|c| c * iu)).map(|c| c * (0.5 / h));
    let lap = (&gxx + &gyy).map(|c| c * (0.25 / (h * h)));
    let ginv = g0.try_inverse().ok_or(OracleError::SingularMatrix { det: 0.0 })?;
    let quad = &dz * &ginv * &dzbar;
    let value = (lap[(i, j)] - quad[(i, j)]).re;
    Ok(match convention {
        Convention::Axis => value,
        Convention::Opposite => -value,
    })
}

/// Finite-difference `R_{1 1̄ 1 1̄}` against the closed form.
pub fn riemann_fd_oracle(m: &RadialMetric, r: f64, y_at: f64) -> Result<OracleReport, OracleError> {
    let axis = riemann_axis(m, r, y_at)?;
    let fd = riemann_component_fd(m, r, y_at, 0, 0, 0, Convention::Axis)?;
    Ok(OracleReport::new("riemann_1111", vec![vec![r, y_at]], vec![axis.r1111], vec![fd], RIEMANN_THRESHOLD))
}

/// Random exp-Laurent profile with 1-4 terms and its dimension (1..=4).
/// Rates are drawn from `{0, ±1/2, ±1}` and powers from `-2..=3`. The
/// validity interval is the component around a random seed `y_s ∈ [0.2, 5]`
/// on which `1e-2 < psi/y < 1e2`, clipped to `[y_s/4, 4 y_s]`.
pub fn random_profile(rng: &mut ChaCha8Rng) -> (usize, RadialMetric) {
    loop {
        let n = rng.random_range(1..=4usize);
        let count = rng.random_range(1..=4usize);
        let terms: Vec<Term> = (0..count)
            .map(|_| {
                let coeff = rng.random_range(-1.5..1.5);
                let power = rng.random_range(-2..=3) as f64;
                let rate = [0.0, 0.0, 0.0, 0.5, -0.5, 1.0, -1.0][rng.random_range(0..7usize)];
                Term::new(coeff, power, rate)
            })
            .collect();
        let psi = ExpLaurentExpr::from_terms(terms);
        let seed = rng.random_range(0.2f64.ln()..5f64.ln()).exp();
        // keep the metric well-conditioned: its eigenvalues are psi/r and y/r
        let f = |y: f64| {
            let q = psi.evaluate(y).unwrap_or(f64::NAN) / y;
            (q - 1e-2).min(1e2 - q)
        };
        if psi.is_zero() || !(f(seed) > 0.0) {
            continue;
        }
        let Ok(bounds) = YRange::new(seed / 4.0, seed * 4.0) else { continue };
        let (lo, hi) = positive_component(&f, seed, bounds);
        // skip slivers
        if hi / lo < 1.5 {
            continue;
        }
        if let Ok(m) = YRange::new(lo, hi).and_then(|r| RadialMetric::symbolic(n, psi.clone(), r)) {
            return (n, m);
        }
    }
}

/// Random point with `|z|^2 = r`.
pub fn random_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<Complex64> {
    let raw: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let norm: f64 = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-3);
    raw.iter().map(|c| c * (r.sqrt() / norm)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::SeedableRng;

    fn sym(n: usize, s: &str) -> RadialMetric {
        RadialMetric::symbolic_auto(n, parse(s).unwrap()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rho_flat_vanishes() {
        let m = sym(3, "y");
        let rho = rho_det_oracle(&m, &[c(0.3, 0.1), c(-0.2, 0.5), c(0.4, 0.0)], 0.7).unwrap();
        assert!(rho.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn rho_surface_scalar_curvature() {
        let m = sym(1, "y - 0.7*y^2");
        let rho = rho_det_oracle(&m, &[c(0.8, 0.3)], 0.4).unwrap();
        assert!((rho[0] - 1.4).abs() < 1e-9);
    }

    #[test]
    fn rho_matches_closed_form() {
        let psi = ExpLaurentExpr::monomial(1.0 / 3.0, 1.0).add(&ExpLaurentExpr::monomial(0.2, -2.0));
        let m = RadialMetric::symbolic_auto(3, psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sites: Vec<_> = (0..8)
            .map(|_| {
                let r = rng.random_range(0.5..2.0);
                (random_point(&mut rng, 3, r), rng.random_range(0.3..3.0))
            })
            .collect();
        let rep = rho_det_report(&m, &sites).unwrap();
        assert!(rep.pass, "{}", rep.max_rel_err);
        for (z, y) in &sites {
            let rho = rho_det_oracle(&m, z, *y).unwrap();
            assert!(rho[2].abs() < 1e-10);
            assert!((rho[0] - 2.0 * 2.0 / y).abs() < 1e-9 * (4.0 / y).max(1.0));
        }
    }

    #[test]
    fn ricci_differences() {
        for (n, s, y0) in [(2, "y", 1.0), (2, "y - 0.125*y^2", 1.0), (2, "y - y^2 + y^3", 0.3)] {
            let m = sym(n, s);
            let tab = integrate_y(&m, 0.0, y0, (-1.0, 1.0), 1e-10).unwrap();
            let rep = ricci_fd_oracle(&m, &tab).unwrap();
            assert!(rep.pass, "{s}: {}", rep.max_rel_err);
        }
        // KE with lambda = 1: L'(r) = y / (2r)
        let m = sym(2, "y - 0.16666666666666666*y^2");
        let tab = integrate_y(&m, 0.0, 1.0, (-1.0, 1.0), 1e-10).unwrap();
        let rep = ricci_fd_oracle(&m, &tab).unwrap();
        for (p, o) in rep.points.iter().zip(&rep.oracle) {
            assert!((o - p[2] / (2.0 * p[1])).abs() < 1e-6);
        }
    }

    #[test]
    fn riemann_examples() {
        let flat = sym(2, "y");
        let rep = riemann_fd_oracle(&flat, 1.0, 1.0).unwrap();
        assert!(rep.pass && rep.oracle[0].abs() < 1e-6);

        // psi'' (1/2) = 1, psi(1/2) = 3/8; the site r = 1 is tied to y = 1/2
        let m = sym(2, "y - y^2 + y^3");
        let rep = riemann_fd_oracle(&m, 1.0, 0.5).unwrap();
        assert!((rep.reference[0] - 9.0 / 64.0).abs() < 1e-15);
        assert!(rep.pass, "{:?}", rep);

        let m = sym(3, "y - 0.05*y^2");
        let rep = riemann_fd_oracle(&m, 2.0, 1.3).unwrap();
        assert!(rep.pass, "{:?}", rep);
    }

    #[test]
    fn opposite_convention_flips_sign() {
        let m = sym(2, "y - y^2");
        let a = riemann_component_fd(&m, 0.5, 1.0 / 3.0, 0, 0, 0, Convention::Axis).unwrap();
        let b = riemann_component_fd(&m, 0.5, 1.0 / 3.0, 0, 0, 0, Convention::Opposite).unwrap();
        assert_eq!(a, -b);
        assert!(a < 0.0);
    }

    #[test]
    fn transverse_components() {
        // R_{1 1̄ i ī} = psi (psi' y - psi) / (y r^2), R_{i ī i ī} = 2 (psi - y) / r^2,
        // R_{i ī j j̄} = (psi - y) / r^2
        for (s, r, y) in [("y - y^2 + y^3", 1.0, 0.5), ("y - 0.3*y^2 + 0.1*y^-1", 1.5, 0.8)] {
            let m = sym(3, s);
            let axis = riemann_axis(&m, r, y).unwrap();
            let r11ii = riemann_component_fd(&m, r, y, 1, 1, 0, Convention::Axis).unwrap();
            let riiii = riemann_component_fd(&m, r, y, 1, 1, 1, Convention::Axis).unwrap();
            let riijj = riemann_component_fd(&m, r, y, 1, 1, 2, Convention::Axis).unwrap();
            assert!(rel_err(r11ii, axis.r11ii) < 1e-4, "{s}: {r11ii} vs {}", axis.r11ii);
            assert!(rel_err(riiii, axis.riiii) < 1e-4, "{s}: {riiii} vs {}", axis.riiii);
            assert!(rel_err(riijj, axis.riijj) < 1e-4, "{s}: {riijj} vs {}", axis.riijj);
        }
    }
}
