//! Command-line front end.
//!
//! Every command produces a report that is rendered deterministically:
//! JSON with lexicographically sorted keys and floats with 17 significant
//! digits, CSV with a header row and `\n` line endings, or flat text.

use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::classify::{self, run_suite, verify_theorem, Config, Suite};
use crate::expr::{parse, Constancy};
use crate::geometry::{curvature_sample, hsc_sign_scan, rho_k, sigma_from_psi, HermitianMatrix, RadialMetric, YRange};
use crate::ode::{integrate_y_rows, reconstruct_potential, solve_y_at, PotentialTable, DEFAULT_ROWS};
use crate::oracle::{oracle_table, random_point, rho_det_report, ricci_fd_oracle, riemann_fd_oracle, OracleReport};

pub const GRAMMAR: &str = "\
Profile grammar (--psi):
    expr    := term ((\"+\"|\"-\") term)*
    term    := factor (\"*\" factor)*
    factor  := NUMBER | \"y\" (\"^\" SNUMBER)? | \"exp\" \"(\" SNUMBER \"*\" \"y\" \")\"
    SNUMBER := (\"-\")? NUMBER
  e.g. \"y - y^2 + y^3\", \"-y + 12*y^-2 - 12*y^-1 + 6\", \"2*exp(-1*y)*y^-2 + y\"

Complex vectors (--z, --xi): comma-separated entries such as 0.8,0.1+0.2i,-1i";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "kahler-radial",
    version,
    about = "Curvature, classification and potentials of radial Kähler metrics given by a momentum profile psi(y)",
    after_help = GRAMMAR
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Momentum profile psi(y)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub psi: Option<String>,
    /// Complex dimension n
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Level k of rho_k / k-cscK
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Validity interval LO:HI of y (HI may be inf); detected when omitted
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub y_range: Option<String>,
    /// Grid samples (default 256; potential: rows, default 801)
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Tolerance (default 1e-8; potential: ODE tolerance, default 1e-10)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<std::path::PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 1 on negative results
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Membership in the extremal, KE, soliton and k-cscK families
    Classify,
    /// Tabulate rho_k over the grid
    Rho,
    /// Metric, Ricci and (on the axis) Riemann/HSC at one point
    Curvature {
        #[arg(long, allow_hyphen_values = true)]
        z: String,
        /// Direction for the holomorphic sectional curvature
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        /// y at r = |z|^2; otherwise integrated from --y0 at --t0
        #[arg(long)]
        y_at: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
    },
    /// Integrate y(t) and reconstruct the Kähler potential
    Potential {
        #[arg(long)]
        y0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, default_value = "-2:2", allow_hyphen_values = true)]
        t_range: String,
    },
    /// Sign changes of psi'' (holomorphic sectional curvature along the axis)
    ScanHsc,
    /// Intersection identities for one profile, or seeded random suites
    Verify {
        /// Run every property suite with N draws instead
        #[arg(long)]
        random: Option<usize>,
    },
    /// Brute-force cross-checks of rho_k, Ricci and Riemann
    Oracle {
        /// Anchor y at r = 1 (default: centre of the y-range)
        #[arg(long)]
        y0: Option<f64>,
        #[arg(long, default_value = "-1:1", allow_hyphen_values = true)]
        t_range: String,
        /// Random sites for the rho_k check
        #[arg(long, default_value_t = 16)]
        sites: usize,
    },
}

/// Rendered report plus whether it is a negative result.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub body: String,
    pub negative: bool,
}

/// Parses `LO:HI`.
pub fn parse_interval(text: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text.split_once(':').ok_or_else(|| anyhow!("expected LO:HI, got {text:?}"))?;
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad lower bound in {text:?}"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad upper bound in {text:?}"))?;
    if !(lo < hi) || lo.is_nan() {
        bail!("empty interval {text:?}");
    }
    Ok((lo, hi))
}

/// Parses a comma-separated complex vector.
pub fn parse_complex_vec(text: &str) -> Result<Vec<Complex64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            Complex64::from_str(s).map_err(|_| anyhow!("bad complex number {s:?}"))
        })
        .collect()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.common;
        if c.dim == Some(0) {
            bail!("--dim must be at least 1");
        }
        if matches!(c.samples, Some(s) if s < 8) {
            bail!("--samples must be at least 8");
        }
        if matches!(c.tol, Some(t) if !(t > 0.0)) {
            bail!("--tol must be positive");
        }
        if let (Some(k), Some(n)) = (c.k, c.dim) {
            if k == 0 || k > n {
                bail!("--k must lie in 1..={n}");
            }
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        self.common.tol.unwrap_or(1e-8)
    }

    fn samples(&self) -> usize {
        self.common.samples.unwrap_or(256)
    }

    fn metric(&self) -> Result<RadialMetric> {
        let c = &self.common;
        let text = c.psi.as_deref().ok_or_else(|| anyhow!("--psi is required\n\n{GRAMMAR}"))?;
        let n = c.dim.ok_or_else(|| anyhow!("--dim is required"))?;
        let psi = parse(text).map_err(|e| anyhow!("{e}\n\n{GRAMMAR}"))?;
        Ok(match &c.y_range {
            Some(r) => {
                let (lo, hi) = parse_interval(r)?;
                RadialMetric::symbolic(n, psi, YRange::new(lo, hi)?)?
            }
            None => RadialMetric::symbolic_auto(n, psi)?,
        })
    }
}

/// Runs one command and renders its report.
pub fn dispatch(cfg: &RunConfig) -> Result<Output> {
    cfg.validate()?;
    let format = cfg.common.format;
    match &cfg.command {
        Command::Classify => {
            let m = cfg.metric()?;
            let report = classify::classify(&m, &Config { tol: cfg.tol(), samples: cfg.samples() })?;
            let negative = match cfg.common.k {
                Some(k) => !report.kcsck.iter().any(|r| r.k == k && r.member),
                None => {
                    !(report.extremal.member
                        || report.ke.member
                        || report.krs.member
                        || report.kcsck.iter().any(|r| r.member))
                }
            };
            Ok(Output { body: render_value(&to_value(&report), format.unwrap_or(Format::Json))?, negative })
        }
        Command::Rho => rho_command(cfg, format.unwrap_or(Format::Json)),
        Command::Curvature { z, xi, y_at, y0, t0 } => {
            let m = cfg.metric()?;
            let z = parse_complex_vec(z)?;
            if z.len() != m.dim() {
                bail!("--z has {} entries, expected {}", z.len(), m.dim());
            }
            let xi = xi.as_deref().map(parse_complex_vec).transpose()?;
            if matches!(&xi, Some(x) if x.len() != m.dim()) {
                bail!("--xi must have {} entries", m.dim());
            }
            let r: f64 = z.iter().map(|c| c.norm_sqr()).sum();
            let y = match (y_at, y0) {
                (Some(y), _) => *y,
                (None, Some(y0)) => solve_y_at(&m, *t0, *y0, r.ln(), 1e-12)?,
                (None, None) => bail!("curvature needs --y-at or --y0"),
            };
            let s = curvature_sample(&m, &z, y, xi.as_deref())?;
            let sigma = sigma_from_psi(&m).eval(y)?;
            let rho: Vec<f64> =
                (1..=m.dim()).map(|k| rho_k(&m, k).and_then(|f| f.eval(y))).collect::<Result<_, _>>()?;
            let v = json!({
                "point": complex_list(&s.point),
                "r": r,
                "y": s.y,
                "psi": m.psi(y)?,
                "sigma": sigma,
                "rho": rho,
                "metric": matrix_value(&s.g),
                "metric_eigenvalues": s.g.eigenvalues(),
                "ricci": matrix_value(&s.ric),
                "ricci_eigenvalues": s.ric.eigenvalues(),
                "riemann_axis": s.riemann_axis,
                "hsc": s.hsc,
                "xi": s.xi.as_deref().map(complex_list),
            });
            Ok(Output { body: render_value(&v, format.unwrap_or(Format::Json))?, negative: false })
        }
        Command::Potential { y0, t0, t_range } => {
            let m = cfg.metric()?;
            let span = parse_interval(t_range)?;
            let rows = cfg.common.samples.unwrap_or(DEFAULT_ROWS);
            let tol = cfg.common.tol.unwrap_or(1e-10);
            let table = reconstruct_potential(&integrate_y_rows(&m, *t0, *y0, span, tol, rows)?);
            let body = match format.unwrap_or(Format::Csv) {
                Format::Csv => potential_csv(&table)?,
                f => render_value(&to_value(&table), f)?,
            };
            Ok(Output { body, negative: false })
        }
        Command::ScanHsc => {
            let m = cfg.metric()?;
            let (lo, hi) = match &cfg.common.y_range {
                Some(r) => parse_interval(r)?,
                None => m.y_range().window(),
            };
            let hi = if hi.is_finite() { hi } else { m.y_range().window().1 };
            let brackets = hsc_sign_scan(&m, lo, hi, cfg.samples())?;
            let body = match format.unwrap_or(Format::Json) {
                Format::Csv => {
                    let mut w = csv_writer();
                    w.write_record(["lo", "hi", "root", "psi_at_root", "psi_positive"])?;
                    for b in &brackets {
                        w.write_record([
                            fmt_float(b.lo),
                            fmt_float(b.hi),
                            fmt_float(b.root),
                            fmt_float(b.psi_at_root),
                            b.psi_positive.to_string(),
                        ])?;
                    }
                    finish_csv(w)?
                }
                f => render_value(&json!({ "scan_range": [lo, hi], "count": brackets.len(), "brackets": brackets }), f)?,
            };
            Ok(Output { body, negative: brackets.is_empty() })
        }
        Command::Verify { random } => {
            let ccfg = Config { tol: cfg.tol(), samples: cfg.samples() };
            let f = format.unwrap_or(Format::Json);
            match random {
                Some(draws) => {
                    let suites: Vec<_> = Suite::ALL.iter().map(|s| run_suite(*s, *draws, cfg.common.seed, &ccfg)).collect();
                    let violations: usize = suites.iter().map(|s| s.violations).sum();
                    let v = json!({ "seed": cfg.common.seed, "draws": draws, "violations": violations, "suites": suites });
                    Ok(Output { body: render_value(&v, f)?, negative: violations > 0 })
                }
                None => {
                    let m = cfg.metric()?;
                    let report = verify_theorem(&m, &ccfg)?;
                    Ok(Output { body: render_value(&to_value(&report), f)?, negative: report.violated() })
                }
            }
        }
        Command::Oracle { y0, t_range, sites } => oracle_command(cfg, *y0, t_range, *sites, format.unwrap_or(Format::Json)),
    }
}

fn rho_command(cfg: &RunConfig, format: Format) -> Result<Output> {
    let m = cfg.metric()?;
    let n = m.dim();
    let levels: Vec<usize> = match cfg.common.k {
        Some(k) => vec![k],
        None => (1..=n).collect(),
    };
    let grid = m.grid(cfg.samples());
    let mut columns = Vec::new();
    let mut entries = Vec::new();
    let mut negative = false;
    for &k in &levels {
        let f = rho_k(&m, k)?;
        let values: Vec<f64> = grid.iter().map(|&y| f.eval(y)).collect::<Result<_, _>>()?;
        let constancy = f.constancy(&grid, cfg.tol())?;
        negative |= !constancy.is_constant();
        let value = match constancy {
            Constancy::Constant(c) => Some(c),
            Constancy::NonConstant => None,
        };
        entries.push(json!({
            "k": k,
            "constant": constancy.is_constant(),
            "value": value,
            "symbolic": f.as_symbolic().map(|e| e.to_string()),
            "values": values,
        }));
        columns.push(values);
    }
    let body = match format {
        Format::Csv => {
            let mut w = csv_writer();
            let mut header = vec!["y".to_string()];
            header.extend(levels.iter().map(|k| format!("rho_{k}")));
            w.write_record(&header)?;
            for (i, y) in grid.iter().enumerate() {
                let mut rec = vec![fmt_float(*y)];
                rec.extend(columns.iter().map(|c| fmt_float(c[i])));
                w.write_record(&rec)?;
            }
            finish_csv(w)?
        }
        f => render_value(&json!({ "dim": n, "y": grid, "rho": entries }), f)?,
    };
    Ok(Output { body, negative: negative && cfg.common.k.is_some() })
}

fn oracle_command(cfg: &RunConfig, y0: Option<f64>, t_range: &str, sites: usize, format: Format) -> Result<Output> {
    let m = cfg.metric()?;
    let n = m.dim();
    let (lo, hi) = m.y_range().window();
    let y0 = y0.unwrap_or((lo * hi).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.common.seed);
    let site_list: Vec<_> = (0..sites)
        .map(|_| {
            let r = rng.random_range(0.5..2.0);
            let y = rng.random_range(lo..hi);
            (random_point(&mut rng, n, r), y)
        })
        .collect();
    let mut reports = Vec::new();
    let mut all_pass = true;
    let mut push = |name: &str, res: Result<OracleReport, crate::oracle::OracleError>| match res {
        Ok(r) => {
            all_pass &= r.pass;
            reports.push(to_value(&r));
        }
        Err(e) => {
            all_pass = false;
            reports.push(json!({ "quantity": name, "pass": false, "error": e.to_string() }));
        }
    };
    push("rho_k", rho_det_report(&m, &site_list));
    let table = oracle_table(&m, y0, parse_interval(t_range)?, 1e-10)?;
    push("ricci_potential_derivative", ricci_fd_oracle(&m, &table));
    push("riemann_1111", riemann_fd_oracle(&m, 1.0, y0));
    let v = json!({ "pass": all_pass, "reports": reports });
    Ok(Output { body: render_value(&v, format)?, negative: !all_pass })
}

/// Parses arguments, runs the command and writes the report; returns the
/// exit status (0 success, 1 negative result under `--strict`, 2 error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cfg) {
        Ok(out) => {
            let written = match &cfg.common.out {
                Some(path) => std::fs::write(path, &out.body).with_context(|| format!("writing {}", path.display())),
                None => {
                    print!("{}", out.body);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return 2;
            }
            if cfg.common.strict && out.negative {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

// ---------------------------------------------------------------------------
// rendering

pub fn to_value<T: Serialize>(report: &T) -> Value {
    serde_json::to_value(report).expect("reports serialize to JSON")
}

/// Floats with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        format!("{:.16e}", 0.0)
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn complex_list(v: &[Complex64]) -> Value {
    Value::Array(v.iter().map(|c| json!([c.re, c.im])).collect())
}

fn matrix_value(m: &HermitianMatrix) -> Value {
    let n = m.dim();
    Value::Array((0..n).map(|i| complex_list(&(0..n).map(|j| m.get(i, j)).collect::<Vec<_>>())).collect())
}

pub fn render_value(v: &Value, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = String::new();
            write_json(v, 0, &mut s);
            s.push('\n');
            Ok(s)
        }
        Format::Text => {
            let mut s = String::new();
            write_text(v, "", &mut s);
            Ok(s)
        }
        Format::Csv => bail!("this report has no tabular form; use --format json or text"),
    }
}

fn json_number(n: &serde_json::Number) -> String {
    if n.is_f64() {
        fmt_float(n.as_f64().unwrap_or(f64::NAN))
    } else {
        n.to_string()
    }
}

fn write_json(v: &Value, indent: usize, out: &mut String) {
    let pad = |k: usize| "  ".repeat(k);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&json_number(n)),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_json(x, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, x) in items.iter().enumerate() {
                    out.push_str(&pad(indent + 1));
                    write_json(x, indent + 1, out);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&pad(indent));
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_json(&map[k.as_str()], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

fn write_text(v: &Value, path: &str, out: &mut String) {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                write_text(&map[k.as_str()], &join(k), out);
            }
        }
        Value::Array(items) if items.iter().any(|x| x.is_array() || x.is_object()) => {
            for (i, x) in items.iter().enumerate() {
                write_text(x, &join(&i.to_string()), out);
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(text_scalar).collect();
            let _ = writeln!(out, "{path} = [{}]", parts.join(", "));
        }
        scalar => {
            let _ = writeln!(out, "{path} = {}", text_scalar(scalar));
        }
    }
}

fn text_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            // shortest round-trip digits; exponent form outside [1e-4, 1e7)
            Some(x) if n.is_f64() && x != 0.0 && !(1e-4..1e7).contains(&x.abs()) => format!("{x:e}"),
            Some(x) if n.is_f64() => x.to_string(),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    Ok(String::from_utf8(bytes)?)
}

/// `t,r,y,f,f_prime` table.
pub fn potential_csv(table: &PotentialTable) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["t", "r", "y", "f", "f_prime"])?;
    for row in &table.rows {
        w.write_record([row.t, row.r, row.y, row.f, row.f_prime].map(fmt_float))?;
    }
    finish_csv(w)
}
