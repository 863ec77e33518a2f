use kahler_radial::expr::{parse, ExpLaurentExpr, Term};
use proptest::prelude::*;

// dyadic coefficients keep sums and products exact
fn term() -> impl Strategy<Value = Term> {
    (-16i32..=16, -3i32..=3, prop::sample::select(vec![0.0, 0.0, 0.5, -0.5, 1.0, -1.0]))
        .prop_map(|(c, p, r)| Term::new(c as f64 / 4.0, p as f64, r))
}

fn expr() -> impl Strategy<Value = ExpLaurentExpr> {
    prop::collection::vec(term(), 0..5).prop_map(ExpLaurentExpr::from_terms)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-11 * scale.max(1.0)
}

proptest! {
    #[test]
    fn display_parses_back(e in expr()) {
        let back = parse(&e.to_string()).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn addition_commutes(a in expr(), b in expr()) {
        prop_assert_eq!(a.add(&b), b.add(&a));
    }

    #[test]
    fn multiplication_associates(a in expr(), b in expr(), c in expr()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
    }

    #[test]
    fn difference_with_itself_vanishes(a in expr()) {
        prop_assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn evaluation_is_a_ring_map(a in expr(), b in expr(), y in 0.3f64..3.0) {
        let (va, vb) = (a.evaluate(y).unwrap(), b.evaluate(y).unwrap());
        let scale = a.abs_magnitude(y).unwrap().max(1.0) * b.abs_magnitude(y).unwrap().max(1.0);
        prop_assert!(close(a.add(&b).evaluate(y).unwrap(), va + vb, scale));
        prop_assert!(close(a.mul(&b).evaluate(y).unwrap(), va * vb, scale));
    }

    #[test]
    fn derivative_matches_differences(a in expr(), y in 0.5f64..2.0) {
        let h = 1e-4;
        let fd = (a.evaluate(y - 2.0 * h).unwrap() - 8.0 * a.evaluate(y - h).unwrap()
            + 8.0 * a.evaluate(y + h).unwrap() - a.evaluate(y + 2.0 * h).unwrap()) / (12.0 * h);
        let scale = a.max_abs_coeff().max(1.0) * 1e4;
        prop_assert!((a.differentiate().evaluate(y).unwrap() - fd).abs() <= 1e-11 * scale);
    }

    #[test]
    fn product_rule(a in expr(), b in expr()) {
        let lhs = a.mul(&b).differentiate();
        let rhs = a.differentiate().mul(&b).add(&a.mul(&b.differentiate()));
        prop_assert!(lhs.sub(&rhs).is_zero());
    }

    #[test]
    fn antiderivative_inverts_derivative(a in expr()) {
        if let Ok(big) = a.antiderivative() {
            let d = big.differentiate().sub(&a);
            prop_assert!(d.max_abs_coeff() <= 1e-12 * a.max_abs_coeff().max(1.0));
        }
    }

    #[test]
    fn powers_are_repeated_products(a in prop::collection::vec(term(), 0..3).prop_map(ExpLaurentExpr::from_terms), k in 0u32..4) {
        let mut p = ExpLaurentExpr::constant(1.0);
        for _ in 0..k {
            p = p.mul(&a);
        }
        prop_assert_eq!(a.powi(k), p);
    }
}

#[test]
fn grammar_examples() {
    let e = parse("-y + 12*y^-2 - 12*y^-1 + 6").unwrap();
    assert!((e.evaluate(3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    let e = parse("2*exp(-1*y)*y^-2 + y").unwrap();
    assert!((e.evaluate(1.0).unwrap() - (2.0 / 1f64.exp() + 1.0)).abs() < 1e-15);
    assert!(parse("y^").is_err());
    assert!(parse("exp(y*2)").is_err());
    assert!(parse("").is_err());
}
