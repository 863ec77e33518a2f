//! Exact calculus over one-variable exp-Laurent expressions.
//!
//! An [`ExpLaurentExpr`] is a finite sum of terms `c * y^p * exp(mu*y)` with
//! concrete real coefficients. The class is closed under addition,
//! multiplication, differentiation and multiplication by monomials `y^q`,
//! which is all the curvature formulas for radial metrics need.
//!
//! Expressions are kept in a normalized form: powers and rates within
//! `1e-12` of an integer are snapped to it, terms sharing a `(power, rate)`
//! key are merged, negligible coefficients are dropped, and terms are
//! sorted by `(rate, power)`. Two normalized expressions denote the same
//! function exactly when their term lists are equal.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const SNAP_TOL: f64 = 1e-12;
const DROP_REL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("numeric literal `{literal}` at position {pos} is outside double range")]
    Overflow { pos: usize, literal: String },
    #[error("cannot evaluate at y = {y}: expression has negative or fractional powers")]
    Domain { y: f64 },
    #[error("no closed-form antiderivative for term y^{power} * exp({rate}*y)")]
    UnsupportedTerm { power: f64, rate: f64 },
}

/// A single term `coeff * y^power * exp(rate * y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub power: f64,
    pub rate: f64,
}

impl Term {
    pub fn new(coeff: f64, power: f64, rate: f64) -> Self {
        Term { coeff, power, rate }
    }

    fn key_cmp(&self, other: &Term) -> Ordering {
        self.rate
            .total_cmp(&other.rate)
            .then(self.power.total_cmp(&other.power))
    }

    fn same_key(&self, other: &Term) -> bool {
        self.rate == other.rate && self.power == other.power
    }

    fn has_integer_power(&self) -> bool {
        self.power.fract() == 0.0 && self.power.abs() <= i32::MAX as f64
    }

    /// `y^power * exp(rate*y)` without the coefficient.
    fn basis_value(&self, y: f64) -> f64 {
        let p = if self.power == 0.0 {
            1.0
        } else if self.has_integer_power() {
            y.powi(self.power as i32)
        } else {
            y.powf(self.power)
        };
        if self.rate == 0.0 {
            p
        } else {
            p * (self.rate * y).exp()
        }
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= SNAP_TOL {
        // avoid -0.0 keys
        r + 0.0
    } else {
        v
    }
}

/// Result of [`ExpLaurentExpr::constancy_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constancy {
    Constant(f64),
    NonConstant,
}

impl Constancy {
    pub fn is_constant(&self) -> bool {
        matches!(self, Constancy::Constant(_))
    }
}

/// Finite sum of `c * y^p * exp(mu*y)` terms in normalized form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpLaurentExpr {
    terms: Vec<Term>,
}

impl ExpLaurentExpr {
    pub fn zero() -> Self {
        ExpLaurentExpr { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms([Term::new(c, 0.0, 0.0)])
    }

    /// `c * y^power`
    pub fn monomial(c: f64, power: f64) -> Self {
        Self::from_terms([Term::new(c, power, 0.0)])
    }

    /// `c * y^power * exp(rate*y)`
    pub fn term(c: f64, power: f64, rate: f64) -> Self {
        Self::from_terms([Term::new(c, power, rate)])
    }

    /// The identity function `y`.
    pub fn y() -> Self {
        Self::monomial(1.0, 1.0)
    }

    /// Builds a normalized expression from arbitrary terms.
    pub fn from_terms<I: IntoIterator<Item = Term>>(terms: I) -> Self {
        let mut raw: Vec<Term> = terms
            .into_iter()
            .map(|t| Term::new(t.coeff, snap(t.power), snap(t.rate)))
            .filter(|t| t.coeff != 0.0)
            .collect();
        // Sorting by coefficient inside a key makes merged sums independent
        // of the order the terms were generated in.
        raw.sort_by(|a, b| a.key_cmp(b).then(a.coeff.total_cmp(&b.coeff)));

        let mut merged: Vec<Term> = Vec::with_capacity(raw.len());
        for t in raw {
            match merged.last_mut() {
                Some(last) if last.same_key(&t) => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        let max = merged.iter().fold(0.0_f64, |m, t| m.max(t.coeff.abs()));
        let floor = DROP_REL * max;
        merged.retain(|t| t.coeff != 0.0 && t.coeff.abs() >= floor);
        ExpLaurentExpr { terms: merged }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True if some term has a nonzero exponential rate.
    pub fn has_exponential(&self) -> bool {
        self.terms.iter().any(|t| t.rate != 0.0)
    }

    /// Coefficient of the `(power, rate)` term, zero when absent.
    pub fn coeff_of(&self, power: f64, rate: f64) -> f64 {
        let (power, rate) = (snap(power), snap(rate));
        self.terms
            .iter()
            .find(|t| t.power == power && t.rate == rate)
            .map_or(0.0, |t| t.coeff)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.coeff.abs()))
    }

    /// Evaluates the expression at `y`.
    ///
    /// Uses compensated summation, so the result is within a few ulps of
    /// the sum of the absolute term values.
    pub fn evaluate(&self, y: f64) -> Result<f64, ExprError> {
        if y <= 0.0 && self.terms.iter().any(|t| !(t.has_integer_power() && t.power >= 0.0)) {
            return Err(ExprError::Domain { y });
        }
        Ok(neumaier_sum(self.terms.iter().map(|t| t.coeff * t.basis_value(y))))
    }

    /// Sum of `|c * y^p * exp(mu*y)|` over terms; the natural error scale of
    /// [`evaluate`](Self::evaluate).
    pub fn abs_magnitude(&self, y: f64) -> Result<f64, ExprError> {
        if y <= 0.0 && self.terms.iter().any(|t| !(t.has_integer_power() && t.power >= 0.0)) {
            return Err(ExprError::Domain { y });
        }
        Ok(self.terms.iter().map(|t| (t.coeff * t.basis_value(y)).abs()).sum())
    }

    pub fn differentiate(&self) -> Self {
        let mut out = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.power != 0.0 {
                out.push(Term::new(t.coeff * t.power, t.power - 1.0, t.rate));
            }
            if t.rate != 0.0 {
                out.push(Term::new(t.coeff * t.rate, t.power, t.rate));
            }
        }
        Self::from_terms(out)
    }

    /// Antiderivative with zero constant of integration.
    ///
    /// Pure powers other than `y^-1` integrate directly; `y^m exp(mu y)`
    /// with `m` a nonnegative integer uses repeated integration by parts.
    pub fn antiderivative(&self) -> Result<Self, ExprError> {
        let mut out = Vec::new();
        for t in &self.terms {
            if t.rate == 0.0 {
                if t.power == -1.0 {
                    return Err(ExprError::UnsupportedTerm { power: t.power, rate: t.rate });
                }
                out.push(Term::new(t.coeff / (t.power + 1.0), t.power + 1.0, 0.0));
            } else {
                if !(t.has_integer_power() && t.power >= 0.0) {
                    return Err(ExprError::UnsupportedTerm { power: t.power, rate: t.rate });
                }
                // ∫ y^m e^{μy} = e^{μy} Σ_j (-1)^j m!/(m-j)! y^{m-j} / μ^{j+1}
                let m = t.power as i64;
                let mut c = t.coeff / t.rate;
                for j in 0..=m {
                    out.push(Term::new(c, (m - j) as f64, t.rate));
                    c *= -((m - j) as f64) / t.rate;
                }
            }
        }
        Ok(Self::from_terms(out))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| Term::new(t.coeff * c, t.power, t.rate)))
    }

    /// Multiplication by `c * y^power`.
    pub fn mul_monomial(&self, c: f64, power: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term::new(t.coeff * c, t.power + power, t.rate)),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(other.terms.iter()).copied())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .copied()
                .chain(other.terms.iter().map(|t| Term::new(-t.coeff, t.power, t.rate))),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push(Term::new(a.coeff * b.coeff, a.power + b.power, a.rate + b.rate));
            }
        }
        Self::from_terms(out)
    }

    /// `self^k` by repeated multiplication.
    pub fn powi(&self, k: u32) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Constant iff every non-constant term has `|coeff| <= tol_abs`.
    pub fn constancy_check(&self, tol_abs: f64) -> Constancy {
        let mut value = 0.0;
        for t in &self.terms {
            if t.power == 0.0 && t.rate == 0.0 {
                value = t.coeff;
            } else if t.coeff.abs() > tol_abs {
                return Constancy::NonConstant;
            }
        }
        Constancy::Constant(value)
    }

    /// Coefficients of `y^p` for each requested power, or `None` when some
    /// term lies outside the span of the requested monomials.
    pub fn laurent_fit(&self, powers: &[f64]) -> Option<Vec<f64>> {
        let powers: Vec<f64> = powers.iter().map(|&p| snap(p)).collect();
        let mut coeffs = vec![0.0; powers.len()];
        for t in &self.terms {
            if t.rate != 0.0 {
                return None;
            }
            let slot = powers.iter().position(|&p| p == t.power)?;
            coeffs[slot] = t.coeff;
        }
        Some(coeffs)
    }
}

fn neumaier_sum<I: Iterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl std::ops::Add for &ExpLaurentExpr {
    type Output = ExpLaurentExpr;
    fn add(self, rhs: Self) -> ExpLaurentExpr {
        ExpLaurentExpr::add(self, rhs)
    }
}

impl std::ops::Sub for &ExpLaurentExpr {
    type Output = ExpLaurentExpr;
    fn sub(self, rhs: Self) -> ExpLaurentExpr {
        ExpLaurentExpr::sub(self, rhs)
    }
}

impl std::ops::Mul for &ExpLaurentExpr {
    type Output = ExpLaurentExpr;
    fn mul(self, rhs: Self) -> ExpLaurentExpr {
        ExpLaurentExpr::mul(self, rhs)
    }
}

impl std::ops::Neg for &ExpLaurentExpr {
    type Output = ExpLaurentExpr;
    fn neg(self) -> ExpLaurentExpr {
        self.scale(-1.0)
    }
}

// ---------------------------------------------------------------------------
// Printing

impl fmt::Display for ExpLaurentExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let neg = t.coeff.is_sign_negative();
            match (i, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            let c = t.coeff.abs();
            let mut factors: Vec<String> = Vec::new();
            if c != 1.0 || (t.power == 0.0 && t.rate == 0.0) {
                factors.push(format!("{c}"));
            }
            if t.power == 1.0 {
                factors.push("y".to_string());
            } else if t.power != 0.0 {
                factors.push(format!("y^{}", t.power));
            }
            if t.rate != 0.0 {
                factors.push(format!("exp({}*y)", t.rate));
            }
            f.write_str(&factors.join("*"))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing
//
//   expr    := term (("+"|"-") term)* ;
//   term    := factor ("*" factor)* ;
//   factor  := NUMBER | "y" ("^" SNUMBER)? | "exp" "(" SNUMBER "*" "y" ")" ;
//   SNUMBER := ("-")? NUMBER ;
//
// A leading "-" on the first term is allowed. `exp(y)` and `exp(-y)` are
// accepted as shorthands for a unit rate.

impl FromStr for ExpLaurentExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

pub fn parse(text: &str) -> Result<ExpLaurentExpr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let terms = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(ExpLaurentExpr::from_terms(terms))
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Vec<Term>, ExprError> {
        let mut terms = Vec::new();
        if self.peek().is_none() {
            return Err(self.error("empty expression"));
        }
        let mut sign = if self.eat(b'-') { -1.0 } else { 1.0 };
        loop {
            let mut t = self.term()?;
            t.coeff *= sign;
            terms.push(t);
            sign = match self.peek() {
                Some(b'+') => 1.0,
                Some(b'-') => -1.0,
                _ => break,
            };
            self.pos += 1;
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term, ExprError> {
        let mut t = Term::new(1.0, 0.0, 0.0);
        self.factor(&mut t)?;
        while self.eat(b'*') {
            self.factor(&mut t)?;
        }
        Ok(t)
    }

    fn factor(&mut self, t: &mut Term) -> Result<(), ExprError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                t.coeff *= self.number()?;
                Ok(())
            }
            Some(b'y') => {
                self.pos += 1;
                let p = if self.eat(b'^') { self.snumber()? } else { 1.0 };
                t.power += p;
                Ok(())
            }
            Some(b'e') if self.src[self.pos..].starts_with(b"exp") => {
                self.pos += 3;
                self.expect(b'(')?;
                let rate = if self.peek() == Some(b'y') {
                    1.0
                } else if self.src[self.pos..].starts_with(b"-") && self.after_minus_is_y() {
                    self.pos += 1;
                    -1.0
                } else {
                    let r = self.snumber()?;
                    self.expect(b'*')?;
                    r
                };
                self.expect(b'y')?;
                self.expect(b')')?;
                t.rate += rate;
                Ok(())
            }
            Some(_) => Err(self.error("expected a number, `y` or `exp(...)`")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn after_minus_is_y(&self) -> bool {
        let mut i = self.pos + 1;
        while i < self.src.len() && self.src[i].is_ascii_whitespace() {
            i += 1;
        }
        self.src.get(i) == Some(&b'y')
    }

    fn snumber(&mut self) -> Result<f64, ExprError> {
        let neg = self.eat(b'-');
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("expected a number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            // only treat as exponent if digits follow; `2*exp(...)` must not be eaten
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let lit = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii literal");
        let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
            pos: start,
            msg: format!("malformed number `{lit}`"),
        })?;
        if !v.is_finite() {
            return Err(ExprError::Overflow { pos: start, literal: lit.to_string() });
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuples(e: &ExpLaurentExpr) -> Vec<(f64, f64, f64)> {
        e.terms().iter().map(|t| (t.coeff, t.power, t.rate)).collect()
    }

    #[test]
    fn parse_cubic_profile() {
        let e: ExpLaurentExpr = "y - y^2 + y^3".parse().unwrap();
        assert_eq!(tuples(&e), vec![(1.0, 1.0, 0.0), (-1.0, 2.0, 0.0), (1.0, 3.0, 0.0)]);
        assert_eq!(tuples(&parse("y").unwrap()), vec![(1.0, 1.0, 0.0)]);
    }

    #[test]
    fn parse_reorders_by_rate_then_power() {
        let e = parse("2*y^-2*exp(0.5*y) + 3").unwrap();
        assert_eq!(tuples(&e), vec![(3.0, 0.0, 0.0), (2.0, -2.0, 0.5)]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("y +"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("2y"), Err(ExprError::Syntax { pos: 1, .. })));
        assert!(matches!(parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("exp(2*x)"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("1e400*y"), Err(ExprError::Overflow { pos: 0, .. })));
    }

    #[test]
    fn parse_merges_and_cancels() {
        assert!(parse("y - y").unwrap().is_zero());
        let e = parse("y*y*2 + exp(y)*exp(-y)").unwrap();
        assert_eq!(tuples(&e), vec![(1.0, 0.0, 0.0), (2.0, 2.0, 0.0)]);
        assert_eq!(parse("-3").unwrap(), ExpLaurentExpr::constant(-3.0));
    }

    #[test]
    fn print_canonical() {
        for s in ["y - y^2 + y^3", "3 + 2*y^-2*exp(0.5*y)", "-0.5*y^2", "0", "exp(-1*y)"] {
            assert_eq!(parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn evaluate_examples() {
        let psi = parse("y - y^2 + y^3").unwrap();
        assert!((psi.evaluate(1.0 / 3.0).unwrap() - 7.0 / 27.0).abs() < 1e-15);
        assert_eq!(parse("y").unwrap().evaluate(5.0).unwrap(), 5.0);
        let e = ExpLaurentExpr::term(1.0, 0.0, 1.0);
        assert!((e.evaluate(2.0).unwrap() - 7.38905609893065).abs() < 1e-13);
    }

    #[test]
    fn evaluate_domain() {
        let e = parse("y^-1").unwrap();
        assert!(matches!(e.evaluate(0.0), Err(ExprError::Domain { .. })));
        assert!(matches!(parse("y^0.5").unwrap().evaluate(-1.0), Err(ExprError::Domain { .. })));
        assert_eq!(parse("y^2 + 1").unwrap().evaluate(-2.0).unwrap(), 5.0);
    }

    #[test]
    fn differentiate_examples() {
        assert_eq!(parse("y^3").unwrap().differentiate(), parse("3*y^2").unwrap());
        let psi = parse("y - y^2 + y^3").unwrap();
        assert_eq!(psi.differentiate().differentiate(), parse("-2 + 6*y").unwrap());
        // e^{μy}/y^{n-1}, μ = 0.5, n = 3
        let e = ExpLaurentExpr::term(1.0, -2.0, 0.5);
        let expected = ExpLaurentExpr::from_terms([
            Term::new(0.5, -2.0, 0.5),
            Term::new(-2.0, -3.0, 0.5),
        ]);
        assert_eq!(e.differentiate(), expected);
    }

    #[test]
    fn combine_examples() {
        let y = ExpLaurentExpr::y();
        assert_eq!(y.mul(&y), ExpLaurentExpr::monomial(1.0, 2.0));
        // n - σ for σ = n - A y
        let sigma = parse("3 - 0.25*y").unwrap();
        let diff = ExpLaurentExpr::constant(3.0).add(&sigma.scale(-1.0));
        assert_eq!(diff, ExpLaurentExpr::monomial(0.25, 1.0));
        let a = ExpLaurentExpr::term(1.0, 0.0, 1.5);
        let b = ExpLaurentExpr::term(1.0, 0.0, -0.25);
        assert_eq!(a.mul(&b), ExpLaurentExpr::term(1.0, 0.0, 1.25));
    }

    #[test]
    fn antiderivative_examples() {
        assert_eq!(parse("3*y^2").unwrap().antiderivative().unwrap(), parse("y^3").unwrap());
        let e = ExpLaurentExpr::term(1.0, 1.0, 2.0);
        let expected = ExpLaurentExpr::from_terms([
            Term::new(-0.25, 0.0, 2.0),
            Term::new(0.5, 1.0, 2.0),
        ]);
        assert_eq!(e.antiderivative().unwrap(), expected);
        assert!(matches!(
            parse("y^-1").unwrap().antiderivative(),
            Err(ExprError::UnsupportedTerm { .. })
        ));
        assert!(matches!(
            ExpLaurentExpr::term(1.0, -2.0, 1.0).antiderivative(),
            Err(ExprError::UnsupportedTerm { .. })
        ));
    }

    #[test]
    fn constancy_examples() {
        assert_eq!(ExpLaurentExpr::constant(2.0).constancy_check(0.0), Constancy::Constant(2.0));
        assert_eq!(ExpLaurentExpr::zero().constancy_check(0.0), Constancy::Constant(0.0));
        assert_eq!(parse("y + 3").unwrap().constancy_check(1e-12), Constancy::NonConstant);
    }

    #[test]
    fn laurent_fit_examples() {
        let psi = parse("y - y^2 + y^3").unwrap();
        let fit = psi.laurent_fit(&[-1.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(fit, vec![0.0, 0.0, 1.0, -1.0, 1.0]);
        assert!(parse("exp(1*y)").unwrap().laurent_fit(&[1.0, 2.0, 3.0]).is_none());
        assert_eq!(parse("y").unwrap().laurent_fit(&[1.0]).unwrap(), vec![1.0]);
        assert!(parse("y^4").unwrap().laurent_fit(&[1.0]).is_none());
    }

    #[test]
    fn snapping_merges_near_integer_keys() {
        let e = ExpLaurentExpr::from_terms([
            Term::new(1.0, 2.0 + 1e-13, 0.0),
            Term::new(1.0, 2.0, 0.0),
        ]);
        assert_eq!(e.terms(), &[Term::new(2.0, 2.0, 0.0)]);
    }

    #[test]
    fn drops_cancellation_residue() {
        let e = ExpLaurentExpr::from_terms([Term::new(1.0, 1.0, 0.0), Term::new(1e-17, 2.0, 0.0)]);
        assert_eq!(e, ExpLaurentExpr::y());
    }
}
