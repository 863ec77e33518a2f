//! Numerical integration: `y(t)` from a profile, the potential `f(r)`, the
//! sigma Cauchy problem for `psi(y)`, and validity-domain probing.
//!
//! The integrator is the Dormand–Prince 5(4) pair with PI step control and
//! error measured per unit step. Output rows are produced by landing steps
//! exactly on the requested abscissae; cubic Hermite interpolation on the
//! accepted steps is used where a continuous profile is needed.

use std::cell::Cell;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{positive_component, GeometryError, NumericProfile, RadialMetric, ScalarFn, YRange};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size control failed at t = {t} (last state {state:?}): {reason}")]
    StepFailure { t: f64, state: Vec<f64>, reason: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Smallest admissible step magnitude.
pub const H_FLOOR: f64 = 1e-300;
/// Integration stops once `psi` falls below this fraction of its running maximum.
pub const EPS_STOP: f64 = 1e-10;
/// Integration stops once `y` falls below this value.
pub const Y_FLOOR: f64 = 1e-12;
/// Rows of a potential table when not specified.
pub const DEFAULT_ROWS: usize = 801;
/// Relative error a single step is always allowed (round-off level).
const ROUNDOFF: f64 = 16.0 * f64::EPSILON;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side `du/dt = f(t, u)`.
pub trait Rhs {
    fn eval(&self, t: f64, u: &[f64], du: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> Rhs for F {
    fn eval(&self, t: f64, u: &[f64], du: &mut [f64]) {
        self(t, u, du)
    }
}

/// Accepted step endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub t: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Accepted nodes in integration order, starting with the initial state.
    pub nodes: Vec<Node>,
    /// States at the requested output abscissae that were reached.
    pub hits: Vec<Node>,
    /// True when the validity predicate stopped the integration early.
    pub stopped: bool,
    /// True when the error control could no longer resolve `t` (typically a
    /// finite-time blow-up); the last node is the last accepted state.
    pub stalled: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Node {
        self.nodes.last().expect("trajectory has the initial node")
    }
}

/// Result of one Dormand–Prince step: new state, its derivative, error norm.
fn dp_step(f: &dyn Rhs, t: f64, u: &[f64], du: &[f64], h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = u.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(du.to_vec());
    let mut tmp = vec![0.0; d];
    for s in 1..7 {
        for i in 0..d {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj[i];
            }
            tmp[i] = u[i] + h * acc;
        }
        let mut ks = vec![0.0; d];
        f.eval(t + C[s] * h, &tmp, &mut ks);
        k.push(ks);
    }
    // stage 7 is evaluated at the fifth-order solution (FSAL)
    let unew = tmp;
    let dunew = k[6].clone();
    let err: Vec<f64> = (0..d)
        .map(|i| h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
        .collect();
    (unew, dunew, err)
}

/// Dormand–Prince 5(4) with PI control.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    /// Local error tolerance per unit step, relative to `max(1, |u|)`.
    pub tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Dopri5 { tol, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Integrates from `t0` towards `t_end`, landing exactly on each of
    /// `t_out` (ordered in the direction of integration). Stops early, with
    /// the step refined by halving, once `valid(t, u)` turns false or the
    /// trial state is not finite.
    pub fn integrate(
        &self,
        f: &dyn Rhs,
        t0: f64,
        u0: &[f64],
        t_end: f64,
        t_out: &[f64],
        valid: &mut dyn FnMut(f64, &[f64]) -> bool,
    ) -> Result<Trajectory, OdeError> {
        if !(self.tol > 0.0) {
            return Err(OdeError::Invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut du0 = vec![0.0; u0.len()];
        f.eval(t0, u0, &mut du0);
        let mut node = Node { t: t0, u: u0.to_vec(), du: du0 };
        let mut traj = Trajectory { nodes: vec![node.clone()], hits: Vec::new(), stopped: false, stalled: false };
        if t_end == t0 {
            return Ok(traj);
        }

        let unorm = node.u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let dnorm = node.du.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut h = 0.01 * unorm.max(1e-3) / dnorm.max(1e-12);
        h = h.min(self.h_max).min((t_end - t0).abs()) * dir;

        let (alpha, beta) = (0.7 / 5.0, 0.4 / 5.0);
        let mut err_prev = 1e-4_f64;
        let mut next_out = 0usize;
        let mut steps = 0usize;
        let mut rejected_last = false;
        let mut event_seen = false;

        while (t_end - node.t) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(OdeError::StepFailure {
                    t: node.t,
                    state: node.u.clone(),
                    reason: format!("exceeded {} steps", self.max_steps),
                });
            }
            if h.abs() < H_FLOOR {
                return Err(OdeError::StepFailure {
                    t: node.t,
                    state: node.u.clone(),
                    reason: "step size underflow".into(),
                });
            }
            // clip to the next output abscissa or the end of the span
            let target = t_out.get(next_out).copied().unwrap_or(t_end);
            let mut step = h;
            let mut lands = false;
            if (node.t + step - target) * dir >= 0.0 {
                step = target - node.t;
                lands = true;
            }
            if !lands && step.abs() < 4.0 * f64::EPSILON * node.t.abs().max(1.0) {
                // t no longer advances: y is running off in finite time
                traj.stalled = true;
                return Ok(traj);
            }
            let (unew, dunew, err) = dp_step(f, node.t, &node.u, &node.du, step);
            let finite = unew.iter().chain(dunew.iter()).all(|v| v.is_finite());
            let err_norm = if finite {
                err.iter()
                    .zip(node.u.iter().zip(unew.iter()))
                    .map(|(e, (a, b))| {
                        // error per unit step, but never asked below round-off
                        let sc = 1f64.max(a.abs()).max(b.abs());
                        e.abs() / (sc * (self.tol * step.abs() + ROUNDOFF))
                    })
                    .fold(0.0_f64, f64::max)
            } else {
                f64::INFINITY
            };

            if err_norm.is_finite() && err_norm <= 1.0 {
                let tnew = if lands { target } else { node.t + step };
                if !valid(tnew, &unew) {
                    // event inside the step: shrink towards it
                    if step.abs() <= 1e-12 * node.t.abs().max(1.0) {
                        traj.stopped = true;
                        return Ok(traj);
                    }
                    h = 0.5 * step;
                    rejected_last = true;
                    event_seen = true;
                    continue;
                }
                if event_seen && unew == node.u {
                    // pinned against the event at floating-point resolution
                    traj.stopped = true;
                    return Ok(traj);
                }
                node = Node { t: tnew, u: unew, du: dunew };
                traj.nodes.push(node.clone());
                if lands && next_out < t_out.len() {
                    traj.hits.push(node.clone());
                    next_out += 1;
                }
                let fac = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-alpha) * err_prev.powf(beta)).clamp(0.2, 5.0)
                };
                let fac = if rejected_last { fac.min(1.0) } else { fac };
                err_prev = err_norm.max(1e-4);
                // a clipped step says nothing about the natural step size
                let base = if lands { h.abs().max(step.abs()) } else { step.abs() };
                h = (base * fac).min(self.h_max) * dir;
                rejected_last = false;
            } else if !finite {
                if !valid(node.t + step, &unew) && step.abs() <= 1e-12 * node.t.abs().max(1.0) {
                    traj.stopped = true;
                    return Ok(traj);
                }
                h = 0.25 * step;
                rejected_last = true;
            } else {
                let fac = (0.9 * err_norm.powf(-alpha)).clamp(0.2, 1.0);
                h = step * fac;
                rejected_last = true;
            }
        }
        Ok(traj)
    }
}

fn stall_error(last: &Node) -> OdeError {
    OdeError::StepFailure {
        t: last.t,
        state: last.u.clone(),
        reason: "step size fell below the resolution of t".into(),
    }
}

/// Fixed-step Dormand–Prince (fifth-order solution, no control).
pub fn dopri5_fixed(f: &dyn Rhs, t0: f64, u0: &[f64], t1: f64, steps: usize) -> Vec<f64> {
    let h = (t1 - t0) / steps as f64;
    let mut u = u0.to_vec();
    let mut du = vec![0.0; u.len()];
    f.eval(t0, &u, &mut du);
    for i in 0..steps {
        let (unew, dunew, _) = dp_step(f, t0 + i as f64 * h, &u, &du, h);
        u = unew;
        du = dunew;
    }
    u
}

/// Piecewise cubic Hermite interpolant on increasing abscissae.
#[derive(Debug, Clone)]
pub struct HermiteSpline {
    x: Vec<f64>,
    u: Vec<f64>,
    du: Vec<f64>,
}

impl HermiteSpline {
    pub fn new(x: Vec<f64>, u: Vec<f64>, du: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == u.len() && x.len() == du.len());
        assert!(x.windows(2).all(|w| w[0] < w[1]), "abscissae must increase");
        HermiteSpline { x, u, du }
    }

    pub fn lo(&self) -> f64 {
        self.x[0]
    }

    pub fn hi(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// `NaN` outside `[lo, hi]`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(x >= self.lo() && x <= self.hi()) {
            return f64::NAN;
        }
        let i = match self.x.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= self.x.len() => self.x.len() - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.u[i] + h10 * h * self.du[i] + h01 * self.u[i + 1] + h11 * h * self.du[i + 1]
    }
}

/// One row of a potential table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialRow {
    pub t: f64,
    pub r: f64,
    pub y: f64,
    pub f: f64,
    pub f_prime: f64,
}

/// Sampled solution `y(t)` with `r = e^t` and, once reconstructed, the
/// potential `f(r)` and `f'(r)`. Rows are ordered by increasing `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialTable {
    pub rows: Vec<PotentialRow>,
    pub t0: f64,
    pub y0: f64,
    /// Lower endpoint of the momentum interval met by the integration, if any.
    pub y_inf: Option<f64>,
    /// Upper endpoint met by the integration, if any (`+inf` on blow-up).
    pub y_sup: Option<f64>,
    pub has_potential: bool,
}

impl PotentialTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn t(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn r(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r).collect()
    }

    pub fn index_of_t0(&self) -> Option<usize> {
        self.rows.iter().position(|r| r.t == self.t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Exit {
    None,
    PsiSmall,
    Floor,
    OutOfRange,
    Blowup,
}

fn side_grid(t0: f64, end: f64, dt: f64) -> Vec<f64> {
    let len = (end - t0).abs();
    if len == 0.0 {
        return Vec::new();
    }
    let count = ((len / dt).round() as usize).max(1);
    (1..=count)
        .map(|j| if j == count { end } else { t0 + (end - t0) * j as f64 / count as f64 })
        .collect()
}

/// [`integrate_y_rows`] with [`DEFAULT_ROWS`] rows.
pub fn integrate_y(m: &RadialMetric, t0: f64, y0: f64, t_span: (f64, f64), tol: f64) -> Result<PotentialTable, OdeError> {
    integrate_y_rows(m, t0, y0, t_span, tol, DEFAULT_ROWS)
}

/// Solves `dy/dt = psi(y)`, `y(t0) = y0`, over `t_span`, sampling about
/// `rows` uniformly spaced rows (with `t0` always one of them).
///
/// Each direction stops early where `y` leaves the metric's range, drops
/// below [`Y_FLOOR`], or `psi` drops below [`EPS_STOP`] times its running
/// maximum; the corresponding boundary is then located and stored in
/// `y_inf` / `y_sup`.
pub fn integrate_y_rows(
    m: &RadialMetric,
    t0: f64,
    y0: f64,
    t_span: (f64, f64),
    tol: f64,
    rows: usize,
) -> Result<PotentialTable, OdeError> {
    let (a, b) = t_span;
    if !(a <= t0 && t0 <= b) || !(a < b) {
        return Err(OdeError::Invalid(format!("t0 = {t0} must lie in the span [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(OdeError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    if rows < 3 {
        return Err(OdeError::Invalid("need at least 3 rows".into()));
    }
    let range = m.y_range();
    if !range.contains(y0) {
        return Err(OdeError::Invalid(format!("y0 = {y0} outside the metric's y-range")));
    }
    let psi = |y: f64| m.psi(y).unwrap_or(f64::NAN);
    let psi0 = psi(y0);
    if !(psi0 > 0.0) {
        return Err(OdeError::Invalid(format!("psi(y0) = {psi0} must be positive")));
    }
    let rhs = |_t: f64, u: &[f64], du: &mut [f64]| du[0] = psi(u[0]);
    let dt = (b - a) / (rows - 1) as f64;
    let solver = Dopri5::new(tol);

    let run = |end: f64| -> Result<(Trajectory, Exit), OdeError> {
        let exit = Cell::new(Exit::None);
        let max_psi = Cell::new(psi0);
        let mut valid = |_t: f64, u: &[f64]| {
            let y = u[0];
            let why = if !y.is_finite() || y > 1e300 {
                Exit::Blowup
            } else if y < Y_FLOOR {
                Exit::Floor
            } else if !range.contains(y) {
                Exit::OutOfRange
            } else {
                let p = psi(y);
                if !(p >= EPS_STOP * max_psi.get()) {
                    Exit::PsiSmall
                } else {
                    max_psi.set(max_psi.get().max(p));
                    Exit::None
                }
            };
            if why != Exit::None {
                exit.set(why);
            }
            why == Exit::None
        };
        let grid = side_grid(t0, end, dt);
        let traj = solver.integrate(&rhs, t0, &[y0], end, &grid, &mut valid)?;
        let last = traj.last();
        if traj.stalled {
            // the step collapses only where y runs into an end of its
            // range in finite t (a singularity of psi or a blow-up)
            let heading_up = (end > t0) == (last.du[0] > 0.0);
            let why = match (heading_up, range.hi.is_finite()) {
                (true, false) => Exit::Blowup,
                _ => Exit::OutOfRange,
            };
            return Ok((traj, why));
        }
        let why = if traj.stopped { exit.get() } else { Exit::None };
        Ok((traj, why))
    };

    let boundary = |why: Exit, last_y: f64, upward: bool| -> Option<f64> {
        match why {
            Exit::None => None,
            Exit::Floor => Some(0.0),
            Exit::Blowup => Some(if upward { f64::INFINITY } else { 0.0 }),
            Exit::OutOfRange => Some(if upward { range.hi } else { range.lo }),
            Exit::PsiSmall => {
                let (lo, hi) = positive_component(&psi, last_y, range);
                Some(if upward { hi } else { lo })
            }
        }
    };

    let (fwd, why_f) = run(b)?;
    let (bwd, why_b) = run(a)?;
    let mut out: Vec<PotentialRow> = bwd
        .hits
        .iter()
        .rev()
        .chain(std::iter::once(&fwd.nodes[0]))
        .chain(fwd.hits.iter())
        .map(|n| PotentialRow { t: n.t, r: n.t.exp(), y: n.u[0], f: f64::NAN, f_prime: f64::NAN })
        .collect();
    out.dedup_by(|x, y| x.t == y.t);
    Ok(PotentialTable {
        rows: out,
        t0,
        y0,
        y_inf: boundary(why_b, bwd.last().u[0], false),
        y_sup: boundary(why_f, fwd.last().u[0], true),
        has_potential: false,
    })
}

/// Gauss–Legendre integral over `[x0, x1]` of the cubic through `pts`.
fn interval_integral(pts: &[(f64, f64)], x0: f64, x1: f64) -> f64 {
    let lagrange = |x: f64| -> f64 {
        pts.iter()
            .enumerate()
            .map(|(i, &(xi, fi))| {
                let w: f64 = pts
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &(xj, _))| (x - xj) / (xi - xj))
                    .product();
                w * fi
            })
            .sum()
    };
    let mid = 0.5 * (x0 + x1);
    let half = 0.5 * (x1 - x0);
    let g = 1.0 / 3f64.sqrt();
    half * (lagrange(mid - half * g) + lagrange(mid + half * g))
}

/// Fills `f_prime = y / r` and `f = ∫ f'(r) dr`, normalized to vanish at `t0`.
///
/// The quadrature runs in `t` (`f'(r) dr = y dt`), integrating on each
/// interval the cubic through the four nearest rows (Simpson-type, fourth
/// order on nonuniform grids).
pub fn reconstruct_potential(table: &PotentialTable) -> PotentialTable {
    let mut out = table.clone();
    let n = out.rows.len();
    for row in out.rows.iter_mut() {
        row.f_prime = row.y / row.r;
    }
    if n == 0 {
        return out;
    }
    let pts: Vec<(f64, f64)> = out.rows.iter().map(|r| (r.t, r.y)).collect();
    let mut cum = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let lo = i.saturating_sub(1).min(n.saturating_sub(4));
        let hi = (lo + 4).min(n);
        cum[i + 1] = cum[i] + interval_integral(&pts[lo..hi], pts[i].0, pts[i + 1].0);
    }
    let anchor = out.index_of_t0().map(|i| cum[i]).unwrap_or(0.0);
    for (row, c) in out.rows.iter_mut().zip(cum) {
        row.f = c - anchor;
    }
    out.has_potential = true;
    out
}

/// `y` at `t_to` along the solution through `(t_from, y_from)`.
pub fn solve_y_at(m: &RadialMetric, t_from: f64, y_from: f64, t_to: f64, tol: f64) -> Result<f64, OdeError> {
    let psi = |y: f64| m.psi(y).unwrap_or(f64::NAN);
    let rhs = |_t: f64, u: &[f64], du: &mut [f64]| du[0] = psi(u[0]);
    let range = m.y_range();
    let mut valid = |_t: f64, u: &[f64]| range.contains(u[0]) && psi(u[0]) > 0.0;
    let traj = Dopri5::new(tol).integrate(&rhs, t_from, &[y_from], t_to, &[], &mut valid)?;
    if traj.stalled {
        return Err(stall_error(traj.last()));
    }
    if traj.stopped {
        return Err(OdeError::Invalid(format!("solution leaves the y-range before t = {t_to}")));
    }
    Ok(traj.last().u[0])
}

/// Numeric profile on the sub-interval where the solution stays positive.
#[derive(Debug, Clone)]
pub struct IntegratedProfile {
    pub profile: NumericProfile,
    pub y_range: YRange,
    pub spline: Arc<HermiteSpline>,
}

/// Solves `dpsi/dy = sigma(y) - (n-1) psi / y`, `psi(y0) = psi0`, over
/// `y_span`, truncated where `psi` stops being positive or `sigma` stops
/// being finite. Steps are capped at 1/1024 of the span so that the
/// Hermite interpolant between accepted steps keeps the integration accuracy.
pub fn psi_from_sigma_numeric(
    sigma: ScalarFn,
    n: usize,
    y0: f64,
    psi0: f64,
    y_span: (f64, f64),
    tol: f64,
) -> Result<IntegratedProfile, OdeError> {
    let (a, b) = y_span;
    if !(psi0 > 0.0) || !(y0 > 0.0) {
        return Err(OdeError::Invalid(format!("need psi0 > 0 and y0 > 0 (got {psi0}, {y0})")));
    }
    if !(0.0 <= a && a <= y0 && y0 <= b && a < b) {
        return Err(OdeError::Invalid(format!("y0 = {y0} must lie in [{a}, {b}] with a >= 0")));
    }
    let nm1 = n as f64 - 1.0;
    let rhs = |y: f64, u: &[f64], du: &mut [f64]| du[0] = sigma(y) - nm1 * u[0] / y;
    let solver = Dopri5::new(tol).with_h_max((b - a) / 1024.0);
    let run = |end: f64| -> Result<Trajectory, OdeError> {
        let max_psi = Cell::new(psi0);
        let mut valid = |y: f64, u: &[f64]| {
            let ok = y > 0.0 && u[0].is_finite() && u[0] >= EPS_STOP * max_psi.get() && sigma(y).is_finite();
            if ok {
                max_psi.set(max_psi.get().max(u[0]));
            }
            ok
        };
        let traj = solver.integrate(&rhs, y0, &[psi0], end, &[], &mut valid)?;
        if traj.stalled {
            return Err(stall_error(traj.last()));
        }
        Ok(traj)
    };
    let fwd = run(b)?;
    let bwd = run(a.max(Y_FLOOR))?;
    let mut nodes: Vec<&Node> = bwd.nodes.iter().rev().chain(fwd.nodes.iter().skip(1)).collect();
    nodes.dedup_by(|x, y| x.t == y.t);
    if nodes.len() < 2 {
        return Err(OdeError::Invalid("integration produced no usable steps".into()));
    }
    let spline = Arc::new(HermiteSpline::new(
        nodes.iter().map(|n| n.t).collect(),
        nodes.iter().map(|n| n.u[0]).collect(),
        nodes.iter().map(|n| n.du[0]).collect(),
    ));
    let y_range = YRange::new(spline.lo(), spline.hi())?;
    let s = spline.clone();
    let profile = NumericProfile::new(Arc::new(move |y| s.eval(y)), "sigma-integration");
    Ok(IntegratedProfile { profile, y_range, spline })
}

/// Maximal sub-interval of the metric's range containing `y_seed` on which
/// `psi > 0`.
pub fn domain_probe(m: &RadialMetric, y_seed: f64) -> Result<(f64, f64), OdeError> {
    let psi = |y: f64| m.psi(y).unwrap_or(f64::NAN);
    if !(psi(y_seed) > 0.0) {
        return Err(OdeError::Invalid(format!("psi({y_seed}) must be positive")));
    }
    Ok(positive_component(&psi, y_seed, m.y_range()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn metric(n: usize, s: &str) -> RadialMetric {
        RadialMetric::symbolic_auto(n, parse(s).unwrap()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn exponential_solution() {
        let m = metric(2, "y");
        let tab = integrate_y(&m, 0.0, 1.0, (0.0, 1.0), 1e-10).unwrap();
        let last = tab.rows.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert!(rel(last.y, 1f64.exp()) < 1e-9);
        assert!(tab.rows.windows(2).all(|w| w[0].y < w[1].y && w[0].r < w[1].r));
        assert_eq!(tab.y_inf, None);
        assert_eq!(tab.y_sup, None);
    }

    #[test]
    fn power_solution() {
        let m = metric(3, "0.5*y");
        let tab = integrate_y(&m, 0.0, 1.0, (-1.0, 2.0), 1e-10).unwrap();
        for row in &tab.rows {
            assert!(rel(row.y, row.r.powf(0.5)) < 1e-9);
        }
    }

    #[test]
    fn logistic_solution() {
        let m = metric(2, "y - y^2");
        let tab = integrate_y(&m, 0.0, 0.5, (-5.0, 5.0), 1e-10).unwrap();
        for row in &tab.rows {
            let exact = 1.0 / (1.0 + (-row.t).exp());
            assert!((row.y - exact).abs() <= 1e-9 * exact, "{} {}", row.t, row.y);
        }
        assert_eq!(tab.index_of_t0().map(|i| tab.rows[i].y), Some(0.5));
    }

    #[test]
    fn residual_matches_psi() {
        let m = metric(2, "y - y^2 + y^3");
        let tol = 1e-8;
        let tab = integrate_y(&m, 0.0, 0.3, (-3.0, 1.0), tol).unwrap();
        let rows = &tab.rows;
        for w in rows.windows(3) {
            let dy = (w[2].y - w[0].y) / (w[2].t - w[0].t);
            let p = m.psi(w[1].y).unwrap();
            // central difference truncation on the output grid is O(dt^2)
            let dt = w[2].t - w[1].t;
            assert!(rel(dy, p) <= 10.0 * tol + dt * dt, "{} {}", dy, p);
        }
    }

    #[test]
    fn stops_at_root_of_psi() {
        let m = metric(2, "y - y^2");
        let tab = integrate_y(&m, 0.0, 0.5, (-60.0, 60.0), 1e-8).unwrap();
        assert!((tab.y_sup.unwrap() - 1.0).abs() < 1e-11);
        assert_eq!(tab.y_inf, Some(0.0));
        assert!(tab.rows.windows(2).all(|w| w[0].y < w[1].y));
        assert!(tab.rows.iter().all(|r| r.y > 0.0 && r.y < 1.0));
    }

    #[test]
    fn blowup_is_reported() {
        let m = metric(1, "y^2");
        let tab = integrate_y(&m, 0.0, 1.0, (0.0, 2.0), 1e-8).unwrap();
        assert_eq!(tab.y_sup, Some(f64::INFINITY));
        assert!(tab.rows.last().unwrap().t < 1.0);
    }

    #[test]
    fn flat_potential() {
        let m = metric(2, "y");
        let tab = reconstruct_potential(&integrate_y(&m, 0.0, 1.0, (-2.0, 2.0), 1e-10).unwrap());
        for row in &tab.rows {
            assert!((row.f - (row.r - 1.0)).abs() < 1e-9, "{} {}", row.r, row.f);
            assert!((row.f_prime * row.r - row.y).abs() <= 2.0 * f64::EPSILON * row.y);
        }
    }

    #[test]
    fn logistic_potential() {
        let m = metric(2, "y - y^2");
        let tab = reconstruct_potential(&integrate_y(&m, 0.0, 0.5, (-4.0, 4.0), 1e-10).unwrap());
        for row in &tab.rows {
            let exact = (1.0 + row.r).ln() - 2f64.ln();
            assert!((row.f - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn sigma_constant_cauchy_problem() {
        let (n, c, d) = (3usize, 1.0, 0.2);
        let p = psi_from_sigma_numeric(Arc::new(move |_| c), n, 1.0, c / 3.0 + d, (0.5, 4.0), 1e-10).unwrap();
        for i in 0..=100 {
            let y = 0.5 + 3.5 * i as f64 / 100.0;
            let exact = c / 3.0 * y + d / (y * y);
            assert!(rel(p.spline.eval(y), exact) < 1e-8, "{y}");
        }
        let p = psi_from_sigma_numeric(Arc::new(move |_| c), n, 1.0, c / 3.0, (0.5, 4.0), 1e-10).unwrap();
        assert!(rel(p.spline.eval(3.0), 1.0) < 1e-10);
    }

    #[test]
    fn sigma_cauchy_problem_truncates_at_root() {
        // sigma of y - y^2 for n = 2 is 2 - 3y; psi0 at y = 1/2 gives psi = y - y^2
        let p = psi_from_sigma_numeric(Arc::new(|y| 2.0 - 3.0 * y), 2, 0.5, 0.25, (0.1, 3.0), 1e-10).unwrap();
        assert!(p.y_range.hi <= 1.0 && p.y_range.hi > 1.0 - 1e-6);
        assert_eq!(p.y_range.lo, 0.1);
    }

    #[test]
    fn probe_examples() {
        assert_eq!(domain_probe(&metric(2, "y - y^2 + y^3"), 1.0 / 3.0).unwrap(), (0.0, f64::INFINITY));
        let (lo, hi) = domain_probe(&metric(2, "y - y^2"), 0.5).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_step_order() {
        let f = |_t: f64, u: &[f64], du: &mut [f64]| du[0] = u[0];
        let e1 = (dopri5_fixed(&f, 0.0, &[1.0], 1.0, 10)[0] - 1f64.exp()).abs();
        let e2 = (dopri5_fixed(&f, 0.0, &[1.0], 1.0, 20)[0] - 1f64.exp()).abs();
        assert!(e1 / e2 > 25.0, "{}", e1 / e2);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let xs = vec![0.0, 0.7, 1.5, 3.0];
        let s = HermiteSpline::new(xs.clone(), xs.iter().map(|&x| f(x)).collect(), xs.iter().map(|&x| df(x)).collect());
        for x in [0.1, 0.9, 2.2, 3.0] {
            assert!((s.eval(x) - f(x)).abs() < 1e-13);
        }
        assert!(s.eval(3.1).is_nan());
    }
}
