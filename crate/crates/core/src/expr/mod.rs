//! User expressions: parsing, symbolic differentiation and column-wise evaluation.
//!
//! Expressions describe the running cost `f(x, u, t)` and each dynamics
//! component `g_j(x, u, t)`. Variables are `x1..x{n_x}`, `u1..u{n_u}` and `t`.

mod diff;
mod eval;
mod parse;
mod partials;

use std::fmt;

use thiserror::Error;

pub use diff::{derivative, differentiate, simplify};
pub use eval::{eval_columns, Bindings, CompiledExpr, Scratch};
pub use parse::parse;
pub use partials::{partial_spec, PartialSpecSource};

/// A variable that may appear in an expression. Indices are 0-based; the
/// textual form is 1-based (`x1` is `Var::X(0)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    U(usize),
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::T => write!(f, "t"),
        }
    }
}

impl Var {
    /// All variables of a problem in canonical order: states, controls, time.
    pub fn all(n_x: usize, n_u: usize) -> Vec<Var> {
        (0..n_x)
            .map(Var::X)
            .chain((0..n_u).map(Var::U))
            .chain(std::iter::once(Var::T))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Tan => a.tan(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
            UnaryOp::Sqrt => a.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => pow(a, b),
        }
    }
}

/// `a^b` with integer exponents routed through `powi` so that negative
/// bases work for `x^2`, `x^3`, ...
#[inline]
pub(crate) fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

/// Expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Ast>),
    Binary(BinaryOp, Box<Ast>, Box<Ast>),
}

impl Ast {
    pub fn constant(c: f64) -> Ast {
        Ast::Const(c)
    }

    pub fn var(v: Var) -> Ast {
        Ast::Var(v)
    }

    pub fn unary(op: UnaryOp, a: Ast) -> Ast {
        Ast::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Ast, b: Ast) -> Ast {
        Ast::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Ast::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self, value: f64) -> bool {
        matches!(self, Ast::Const(c) if *c == value)
    }

    /// True when the tree is the symbolic constant zero.
    pub fn is_zero(&self) -> bool {
        self.is_const(0.0)
    }

    /// Variables referenced by the tree, sorted and deduplicated.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Ast::Const(_) => {}
            Ast::Var(v) => out.push(*v),
            Ast::Unary(_, a) => a.collect_vars(out),
            Ast::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Ast::Const(_) | Ast::Var(_) => 1,
            Ast::Unary(_, a) => 1 + a.size(),
            Ast::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Evaluate at a single point. `lookup` supplies variable values.
    pub fn eval_point(&self, lookup: &impl Fn(Var) -> f64) -> f64 {
        match self {
            Ast::Const(c) => *c,
            Ast::Var(v) => lookup(*v),
            Ast::Unary(op, a) => op.apply(a.eval_point(lookup)),
            Ast::Binary(op, a, b) => op.apply(a.eval_point(lookup), b.eval_point(lookup)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Ast::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Ast::Const(_) | Ast::Var(_) => 5,
            Ast::Unary(UnaryOp::Neg, _) => 3,
            Ast::Unary(..) => 5,
            Ast::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Ast::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Ast::Binary(BinaryOp::Pow, ..) => 4,
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Const(c) => {
                if c.is_finite() {
                    write!(f, "{c:?}")
                } else {
                    // not expressible in the grammar; only reachable through folding
                    write!(f, "({c})")
                }
            }
            Ast::Var(v) => write!(f, "{v}"),
            Ast::Unary(UnaryOp::Neg, a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Ast::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Ast::Binary(op, a, b) => {
                // minimum precedence each operand needs to print without parens
                let (left_min, right_min) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (1, 2),
                    BinaryOp::Mul | BinaryOp::Div => (2, 3),
                    BinaryOp::Pow => (5, 3),
                };
                write_operand(f, a, left_min)?;
                write!(f, "{}", op.symbol())?;
                write_operand(f, b, right_min)
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, a: &Ast, min: u8) -> fmt::Result {
    if a.precedence() < min {
        write!(f, "({a})")
    } else {
        write!(f, "{a}")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: found {found}, expected {}", expected.join(" or "))]
    Syntax {
        position: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unknown variable `{name}`")]
    UnknownVariable { name: String },
    #[error("unknown function `{name}`")]
    UnknownFunction { name: String },
    #[error("non-finite value evaluating `{expr}` at mesh row {row}")]
    Domain { row: usize, expr: String },
    #[error("variable `{var}` is not bound")]
    Unbound { var: Var },
    #[error("column length mismatch: expected {expected}, got {got}")]
    ColumnLength { expected: usize, got: usize },
}
