//! Shared helpers for the integration suites.
#![allow(dead_code)]

use colloc_ad::expr::{Ast, BinaryOp, UnaryOp, Var};
use rand::{Rng, RngCore};

pub const VARS: [Var; 4] = [Var::X(0), Var::X(1), Var::U(0), Var::T];

const CONSTS: [f64; 7] = [-1.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0];

fn bin(op: BinaryOp, a: Ast, b: Ast) -> Ast {
    Ast::binary(op, a, b)
}

fn un(op: UnaryOp, a: Ast) -> Ast {
    Ast::unary(op, a)
}

/// Random expression over `x1, x2, u1, t` that is defined everywhere: log,
/// sqrt and division only see arguments bounded away from zero.
pub fn random_expr(rng: &mut dyn RngCore, depth: usize) -> Ast {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.75) {
            Ast::var(VARS[rng.random_range(0..VARS.len())])
        } else {
            Ast::constant(CONSTS[rng.random_range(0..CONSTS.len())])
        };
    }
    let sub = |rng: &mut dyn RngCore| random_expr(rng, depth - 1);
    let a = sub(rng);
    match rng.random_range(0..12) {
        0 => bin(BinaryOp::Add, a, sub(rng)),
        1 => bin(BinaryOp::Sub, a, sub(rng)),
        2 | 3 => bin(BinaryOp::Mul, a, sub(rng)),
        4 => un(UnaryOp::Neg, a),
        5 => un(UnaryOp::Sin, a),
        6 => un(UnaryOp::Cos, a),
        7 => un(UnaryOp::Exp, un(UnaryOp::Sin, a)),
        8 => {
            let sq = bin(BinaryOp::Mul, a.clone(), a);
            un(UnaryOp::Log, bin(BinaryOp::Add, Ast::constant(1.5), sq))
        }
        9 => {
            let sq = bin(BinaryOp::Mul, a.clone(), a);
            un(UnaryOp::Sqrt, bin(BinaryOp::Add, Ast::constant(1.0), sq))
        }
        10 => {
            let den = bin(
                BinaryOp::Add,
                Ast::constant(2.0),
                un(UnaryOp::Cos, sub(rng)),
            );
            bin(BinaryOp::Div, a, den)
        }
        _ => {
            // positive base with either an integer or a variable exponent
            if rng.random_bool(0.5) {
                bin(BinaryOp::Pow, a, Ast::constant(2.0))
            } else {
                let base = un(UnaryOp::Exp, un(UnaryOp::Sin, a));
                bin(BinaryOp::Pow, base, un(UnaryOp::Cos, sub(rng)))
            }
        }
    }
}

/// Evaluate with `args[i]` bound to `VARS[i]`.
pub fn eval(ast: &Ast, args: &[f64]) -> f64 {
    ast.eval_point(&|v| args[VARS.iter().position(|w| *w == v).expect("known variable")])
}

/// Relative error with an absolute floor of one.
pub fn rel_err(got: f64, reference: f64) -> f64 {
    (got - reference).abs() / reference.abs().max(1.0)
}
