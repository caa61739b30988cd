use super::{Ast, BinaryOp, UnaryOp, Var};

/// Exact symbolic partial derivative of `ast` with respect to `var`,
/// simplified.
pub fn differentiate(ast: &Ast, var: Var) -> Ast {
    simplify(&raw_derivative(ast, var))
}

/// Alias kept for call sites that read better as a noun.
pub fn derivative(ast: &Ast, var: Var) -> Ast {
    differentiate(ast, var)
}

fn contains(ast: &Ast, var: Var) -> bool {
    match ast {
        Ast::Const(_) => false,
        Ast::Var(v) => *v == var,
        Ast::Unary(_, a) => contains(a, var),
        Ast::Binary(_, a, b) => contains(a, var) || contains(b, var),
    }
}

fn c(v: f64) -> Ast {
    Ast::Const(v)
}

fn mul(a: Ast, b: Ast) -> Ast {
    Ast::binary(BinaryOp::Mul, a, b)
}

fn div(a: Ast, b: Ast) -> Ast {
    Ast::binary(BinaryOp::Div, a, b)
}

fn add(a: Ast, b: Ast) -> Ast {
    Ast::binary(BinaryOp::Add, a, b)
}

fn sub(a: Ast, b: Ast) -> Ast {
    Ast::binary(BinaryOp::Sub, a, b)
}

fn raw_derivative(ast: &Ast, var: Var) -> Ast {
    if !contains(ast, var) {
        return c(0.0);
    }
    match ast {
        Ast::Const(_) => c(0.0),
        Ast::Var(v) => c(if *v == var { 1.0 } else { 0.0 }),
        Ast::Unary(op, a) => {
            let da = raw_derivative(a, var);
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => Ast::unary(UnaryOp::Neg, da),
                UnaryOp::Sin => mul(da, Ast::unary(UnaryOp::Cos, a)),
                UnaryOp::Cos => Ast::unary(UnaryOp::Neg, mul(da, Ast::unary(UnaryOp::Sin, a))),
                UnaryOp::Tan => div(
                    da,
                    Ast::binary(BinaryOp::Pow, Ast::unary(UnaryOp::Cos, a), c(2.0)),
                ),
                UnaryOp::Exp => mul(da, Ast::unary(UnaryOp::Exp, a)),
                UnaryOp::Log => div(da, a),
                UnaryOp::Sqrt => div(da, mul(c(2.0), Ast::unary(UnaryOp::Sqrt, a))),
            }
        }
        Ast::Binary(op, a, b) => {
            let da = raw_derivative(a, var);
            let db = raw_derivative(b, var);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                BinaryOp::Div => {
                    if contains(&b, var) {
                        div(
                            sub(mul(da, b.clone()), mul(a, db)),
                            Ast::binary(BinaryOp::Pow, b, c(2.0)),
                        )
                    } else {
                        div(da, b)
                    }
                }
                BinaryOp::Pow => {
                    if !contains(&b, var) {
                        // b * a^(b-1) * a'
                        let lowered = Ast::binary(BinaryOp::Pow, a, sub(b.clone(), c(1.0)));
                        mul(mul(b, lowered), da)
                    } else {
                        // a^b * (b' log a + b a' / a)
                        let power = Ast::binary(BinaryOp::Pow, a.clone(), b.clone());
                        let log_term = mul(db, Ast::unary(UnaryOp::Log, a.clone()));
                        let base_term = div(mul(b, da), a);
                        mul(power, add(log_term, base_term))
                    }
                }
            }
        }
    }
}

/// Fold constants and apply algebraic identities bottom-up. The result is
/// equal to the input as a real function wherever both are defined.
pub fn simplify(ast: &Ast) -> Ast {
    match ast {
        Ast::Const(_) | Ast::Var(_) => ast.clone(),
        Ast::Unary(op, a) => make_unary(*op, simplify(a)),
        Ast::Binary(op, a, b) => make_binary(*op, simplify(a), simplify(b)),
    }
}

fn fold(value: f64, otherwise: impl FnOnce() -> Ast) -> Ast {
    // non-finite folds stay symbolic so evaluation reports the domain error
    if value.is_finite() {
        Ast::Const(value)
    } else {
        otherwise()
    }
}

fn make_unary(op: UnaryOp, a: Ast) -> Ast {
    if let Some(v) = a.as_const() {
        return fold(op.apply(v), || Ast::unary(op, a));
    }
    if op == UnaryOp::Neg {
        match a {
            Ast::Unary(UnaryOp::Neg, inner) => return *inner,
            Ast::Binary(BinaryOp::Mul, l, r) if l.as_const().is_some() => {
                let k = l.as_const().unwrap_or_default();
                return make_mul(Ast::Const(-k), *r);
            }
            _ => {}
        }
    }
    Ast::unary(op, a)
}

fn make_binary(op: BinaryOp, a: Ast, b: Ast) -> Ast {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return fold(op.apply(x, y), || Ast::binary(op, a, b));
    }
    match op {
        BinaryOp::Add => {
            if a.is_zero() {
                b
            } else if b.is_zero() {
                a
            } else if let Ast::Unary(UnaryOp::Neg, nb) = b {
                Ast::binary(BinaryOp::Sub, a, *nb)
            } else {
                Ast::binary(BinaryOp::Add, a, b)
            }
        }
        BinaryOp::Sub => {
            if b.is_zero() {
                a
            } else if a.is_zero() {
                make_unary(UnaryOp::Neg, b)
            } else if let Ast::Unary(UnaryOp::Neg, nb) = b {
                Ast::binary(BinaryOp::Add, a, *nb)
            } else {
                Ast::binary(BinaryOp::Sub, a, b)
            }
        }
        BinaryOp::Mul => make_mul(a, b),
        BinaryOp::Div => {
            if a.is_zero() {
                return Ast::Const(0.0);
            }
            if b.is_const(1.0) {
                return a;
            }
            if let Some(k) = b.as_const() {
                if k != 0.0 {
                    if let Ast::Binary(BinaryOp::Mul, l, r) = &a {
                        if let Some(m) = l.as_const() {
                            return make_mul(Ast::Const(m / k), (**r).clone());
                        }
                    }
                    let inv = 1.0 / k;
                    // exact reciprocal only (powers of two)
                    if inv.is_finite() && inv * k == 1.0 && is_power_of_two(k) {
                        return make_mul(Ast::Const(inv), a);
                    }
                }
            }
            Ast::binary(BinaryOp::Div, a, b)
        }
        BinaryOp::Pow => {
            if b.is_zero() {
                Ast::Const(1.0)
            } else if b.is_const(1.0) {
                a
            } else if a.is_const(1.0) {
                Ast::Const(1.0)
            } else {
                Ast::binary(BinaryOp::Pow, a, b)
            }
        }
    }
}

fn is_power_of_two(k: f64) -> bool {
    let m = k.abs();
    m.is_normal() && {
        let bits = m.to_bits();
        bits & ((1u64 << 52) - 1) == 0
    }
}

fn make_mul(a: Ast, b: Ast) -> Ast {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return fold(x * y, || Ast::binary(BinaryOp::Mul, a, b));
    }
    if a.is_zero() || b.is_zero() {
        return Ast::Const(0.0);
    }
    if a.is_const(1.0) {
        return b;
    }
    if b.is_const(1.0) {
        return a;
    }
    // constants to the left
    if b.as_const().is_some() {
        return make_mul(b, a);
    }
    if let Some(k) = a.as_const() {
        if k == -1.0 {
            return make_unary(UnaryOp::Neg, b);
        }
        return match b {
            Ast::Binary(BinaryOp::Mul, l, r) if l.as_const().is_some() => {
                let m = l.as_const().unwrap_or_default();
                make_mul(Ast::Const(k * m), *r)
            }
            Ast::Unary(UnaryOp::Neg, inner) => make_mul(Ast::Const(-k), *inner),
            other => Ast::binary(BinaryOp::Mul, Ast::Const(k), other),
        };
    }
    // (k * x) * y -> k * (x * y)
    if let Ast::Binary(BinaryOp::Mul, l, r) = &a {
        if let Some(k) = l.as_const() {
            return make_mul(Ast::Const(k), make_mul((**r).clone(), b));
        }
    }
    Ast::binary(BinaryOp::Mul, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(text: &str) -> Ast {
        parse(text, 2, 2).unwrap()
    }

    #[test]
    fn power_rule_with_constant_denominator() {
        assert_eq!(differentiate(&p("u1^2/2"), Var::U(0)), p("u1"));
    }

    #[test]
    fn chain_rule_through_sin() {
        assert_eq!(
            differentiate(&p("sin(x1*u1)"), Var::X(0)),
            p("u1*cos(x1*u1)")
        );
    }

    #[test]
    fn independent_variable_gives_structural_zero() {
        assert!(differentiate(&p("x1*u1"), Var::T).is_zero());
    }

    #[test]
    fn simplify_identities() {
        let two = Ast::Const(2.0);
        let u1 = Ast::Var(Var::U(0));
        let nested = Ast::binary(
            BinaryOp::Mul,
            Ast::binary(
                BinaryOp::Div,
                Ast::binary(BinaryOp::Mul, two.clone(), u1.clone()),
                two,
            ),
            Ast::Const(1.0),
        );
        assert_eq!(simplify(&nested), u1);
        assert_eq!(simplify(&p("x1+0")), p("x1"));
        assert_eq!(simplify(&p("3*4")), Ast::Const(12.0));
        assert_eq!(simplify(&p("x1^1")), p("x1"));
        assert_eq!(simplify(&p("x1^0")), Ast::Const(1.0));
        assert_eq!(simplify(&p("-(-x1)")), p("x1"));
        assert_eq!(simplify(&p("0/x1")), Ast::Const(0.0));
        assert_eq!(simplify(&p("x1*0")), Ast::Const(0.0));
    }

    #[test]
    fn division_by_constant_zero_is_left_for_evaluation() {
        let s = simplify(&p("x1/0"));
        assert!(matches!(s, Ast::Binary(BinaryOp::Div, ..)));
        let s = simplify(&p("1/0"));
        assert!(matches!(s, Ast::Binary(BinaryOp::Div, ..)));
    }

    #[test]
    fn general_power_uses_log_rewrite() {
        // d/dx x^x = x^x (log x + 1)
        let d = differentiate(&p("x1^x1"), Var::X(0));
        let x: f64 = 1.7;
        let got = d.eval_point(&|_| x);
        assert!((got - x.powf(x) * (x.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn elementary_derivatives_at_a_point() {
        let x = 0.7_f64;
        let cases: [(&str, f64); 6] = [
            ("tan(x1)", 1.0 / x.cos().powi(2)),
            ("log(x1)", 1.0 / x),
            ("sqrt(x1)", 0.5 / x.sqrt()),
            ("exp(2*x1)", 2.0 * (2.0 * x).exp()),
            ("cos(x1)", -x.sin()),
            ("1/x1", -1.0 / (x * x)),
        ];
        for (text, expected) in cases {
            let d = differentiate(&p(text), Var::X(0));
            let got = d.eval_point(&|_| x);
            assert!(
                (got - expected).abs() < 1e-12,
                "{text}: {got} vs {expected}"
            );
        }
    }
}
