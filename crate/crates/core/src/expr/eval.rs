//! Column-wise evaluation. An [`Ast`] is compiled once into a postfix
//! program; each evaluation then streams whole mesh columns through it.

use super::{Ast, BinaryOp, ExprError, UnaryOp, Var};

#[derive(Clone, Debug)]
enum Instr {
    Const(f64),
    Arg(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// A compiled expression over an ordered argument list.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    program: Vec<Instr>,
    source: String,
    constant: Option<f64>,
}

#[derive(Clone, Copy)]
enum Operand {
    Scalar(f64),
    Arg(usize),
    Buf(usize),
}

/// Reusable column buffers for [`CompiledExpr::eval_into`].
#[derive(Default, Debug)]
pub struct Scratch {
    bufs: Vec<Vec<f64>>,
    free: Vec<usize>,
}

impl Scratch {
    fn take(&mut self, n: usize) -> usize {
        let id = match self.free.pop() {
            Some(id) => id,
            None => {
                self.bufs.push(Vec::new());
                self.bufs.len() - 1
            }
        };
        self.bufs[id].resize(n, 0.0);
        id
    }
}

impl CompiledExpr {
    /// Compile `ast` so that argument `k` of [`eval_into`](Self::eval_into)
    /// binds variable `args[k]`.
    pub fn compile(ast: &Ast, args: &[Var]) -> Result<Self, ExprError> {
        let mut program = Vec::with_capacity(ast.size());
        emit(ast, args, &mut program)?;
        Ok(CompiledExpr {
            program,
            source: ast.to_string(),
            constant: ast.as_const(),
        })
    }

    /// The constant value when the expression has no variables.
    pub fn as_const(&self) -> Option<f64> {
        self.constant
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluate row-wise over `cols` (all of length `out.len()`), writing the
    /// result into `out`. Any non-finite intermediate is a domain error at
    /// the first offending row.
    pub fn eval_into(
        &self,
        cols: &[&[f64]],
        out: &mut [f64],
        scratch: &mut Scratch,
    ) -> Result<(), ExprError> {
        let n = out.len();
        for col in cols {
            if col.len() != n {
                return Err(ExprError::ColumnLength {
                    expected: n,
                    got: col.len(),
                });
            }
        }
        scratch.free.clear();
        scratch.free.extend((0..scratch.bufs.len()).rev());
        let mut stack: Vec<Operand> = Vec::with_capacity(8);
        for instr in &self.program {
            match *instr {
                Instr::Const(c) => stack.push(Operand::Scalar(c)),
                Instr::Arg(k) => stack.push(Operand::Arg(k)),
                Instr::Unary(op) => {
                    let a = stack.pop().expect("well-formed program");
                    let r = match a {
                        Operand::Scalar(v) => Operand::Scalar(op.apply(v)),
                        Operand::Arg(k) => {
                            let id = scratch.take(n);
                            for (o, &x) in scratch.bufs[id].iter_mut().zip(cols[k]) {
                                *o = op.apply(x);
                            }
                            Operand::Buf(id)
                        }
                        Operand::Buf(id) => {
                            for o in scratch.bufs[id].iter_mut() {
                                *o = op.apply(*o);
                            }
                            Operand::Buf(id)
                        }
                    };
                    self.check(&r, scratch)?;
                    stack.push(r);
                }
                Instr::Binary(op) => {
                    let b = stack.pop().expect("well-formed program");
                    let a = stack.pop().expect("well-formed program");
                    let r = binary(op, a, b, cols, n, scratch);
                    self.check(&r, scratch)?;
                    stack.push(r);
                }
            }
        }
        match stack.pop().expect("well-formed program") {
            Operand::Scalar(v) => {
                if !v.is_finite() && n > 0 {
                    return Err(self.domain(0));
                }
                out.fill(v);
            }
            Operand::Arg(k) => {
                out.copy_from_slice(cols[k]);
                if let Some(row) = out.iter().position(|v| !v.is_finite()) {
                    return Err(self.domain(row));
                }
            }
            Operand::Buf(id) => out.copy_from_slice(&scratch.bufs[id]),
        }
        Ok(())
    }

    /// Evaluate at a single point given argument values.
    pub fn eval_point(&self, args: &[f64]) -> Result<f64, ExprError> {
        let cols: Vec<&[f64]> = args.iter().map(std::slice::from_ref).collect();
        let mut out = [0.0];
        self.eval_into(&cols, &mut out, &mut Scratch::default())?;
        Ok(out[0])
    }

    fn domain(&self, row: usize) -> ExprError {
        ExprError::Domain {
            row,
            expr: self.source.clone(),
        }
    }

    fn check(&self, r: &Operand, scratch: &Scratch) -> Result<(), ExprError> {
        match *r {
            Operand::Scalar(v) if !v.is_finite() => Err(self.domain(0)),
            Operand::Buf(id) => match scratch.bufs[id].iter().position(|v| !v.is_finite()) {
                Some(row) => Err(self.domain(row)),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

fn binary(
    op: BinaryOp,
    a: Operand,
    b: Operand,
    cols: &[&[f64]],
    n: usize,
    scratch: &mut Scratch,
) -> Operand {
    use Operand::*;
    match (a, b) {
        (Scalar(x), Scalar(y)) => Scalar(op.apply(x, y)),
        (Buf(ia), Buf(ib)) => {
            let (dst, src) = two_mut(&mut scratch.bufs, ia, ib);
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = op.apply(*d, s);
            }
            scratch.free.push(ib);
            Buf(ia)
        }
        (Buf(ia), other) => {
            let buf = &mut scratch.bufs[ia];
            for (k, d) in buf.iter_mut().enumerate() {
                *d = op.apply(*d, read(other, cols, k));
            }
            Buf(ia)
        }
        (other, Buf(ib)) => {
            let buf = &mut scratch.bufs[ib];
            for (k, d) in buf.iter_mut().enumerate() {
                *d = op.apply(read(other, cols, k), *d);
            }
            Buf(ib)
        }
        (a, b) => {
            let id = scratch.take(n);
            for (k, d) in scratch.bufs[id].iter_mut().enumerate() {
                *d = op.apply(read(a, cols, k), read(b, cols, k));
            }
            Buf(id)
        }
    }
}

#[inline]
fn read(op: Operand, cols: &[&[f64]], k: usize) -> f64 {
    match op {
        Operand::Scalar(v) => v,
        Operand::Arg(j) => cols[j][k],
        Operand::Buf(_) => unreachable!("buffers handled by caller"),
    }
}

fn two_mut(bufs: &mut [Vec<f64>], a: usize, b: usize) -> (&mut Vec<f64>, &Vec<f64>) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = bufs.split_at_mut(b);
        (&mut lo[a], &hi[0])
    } else {
        let (lo, hi) = bufs.split_at_mut(a);
        (&mut hi[0], &lo[b])
    }
}

fn emit(ast: &Ast, args: &[Var], out: &mut Vec<Instr>) -> Result<(), ExprError> {
    match ast {
        Ast::Const(c) => out.push(Instr::Const(*c)),
        Ast::Var(v) => {
            let k = args
                .iter()
                .position(|a| a == v)
                .ok_or(ExprError::Unbound { var: *v })?;
            out.push(Instr::Arg(k));
        }
        Ast::Unary(op, a) => {
            emit(a, args, out)?;
            out.push(Instr::Unary(*op));
        }
        Ast::Binary(op, a, b) => {
            emit(a, args, out)?;
            emit(b, args, out)?;
            out.push(Instr::Binary(*op));
        }
    }
    Ok(())
}

/// Variable-to-column bindings for [`eval_columns`].
#[derive(Default, Clone, Debug)]
pub struct Bindings<'a> {
    vars: Vec<Var>,
    cols: Vec<&'a [f64]>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, var: Var, col: &'a [f64]) -> Self {
        if let Some(k) = self.vars.iter().position(|v| *v == var) {
            self.cols[k] = col;
        } else {
            self.vars.push(var);
            self.cols.push(col);
        }
        self
    }
}

/// Evaluate `ast` element-wise over bound columns.
pub fn eval_columns(ast: &Ast, bindings: &Bindings<'_>) -> Result<Vec<f64>, ExprError> {
    let n = match bindings.cols.first() {
        Some(c) => c.len(),
        None => 1,
    };
    let compiled = CompiledExpr::compile(ast, &bindings.vars)?;
    let mut out = vec![0.0; n];
    compiled.eval_into(&bindings.cols, &mut out, &mut Scratch::default())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn constant_column() {
        let ast = parse("u1^2/2", 1, 1).unwrap();
        let u = [1.0, 1.0];
        let b = Bindings::new().bind(Var::U(0), &u);
        assert_eq!(eval_columns(&ast, &b).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn elementwise_product() {
        let ast = parse("x1*u1", 1, 1).unwrap();
        let x = [0.0, 2.0 / 3.0];
        let u = [1.0, 2.0];
        let b = Bindings::new().bind(Var::X(0), &x).bind(Var::U(0), &u);
        assert_eq!(eval_columns(&ast, &b).unwrap(), vec![0.0, 4.0 / 3.0]);
    }

    #[test]
    fn log_of_zero_reports_row() {
        let ast = parse("log(x1)", 1, 0).unwrap();
        let x = [1.0, 0.0];
        let b = Bindings::new().bind(Var::X(0), &x);
        match eval_columns(&ast, &b) {
            Err(ExprError::Domain { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbound_variable() {
        let ast = parse("x1+t", 1, 0).unwrap();
        let x = [1.0];
        let b = Bindings::new().bind(Var::X(0), &x);
        assert!(matches!(
            eval_columns(&ast, &b),
            Err(ExprError::Unbound { var: Var::T })
        ));
    }

    #[test]
    fn sqrt_of_negative_and_division_by_zero() {
        let b_cols = [4.0, -1.0, 9.0];
        let b = Bindings::new().bind(Var::X(0), &b_cols);
        let ast = parse("sqrt(x1)", 1, 0).unwrap();
        assert!(matches!(
            eval_columns(&ast, &b),
            Err(ExprError::Domain { row: 1, .. })
        ));
        let ast = parse("x1/0", 1, 0).unwrap();
        assert!(matches!(
            eval_columns(&ast, &b),
            Err(ExprError::Domain { row: 0, .. })
        ));
    }

    #[test]
    fn matches_pointwise_evaluation() {
        let ast = parse("sin(x1)*exp(-u1) + (x1 - u1)^3/(1 + t^2) - 2^x1", 1, 1).unwrap();
        let x = [0.1, 0.7, -1.3, 2.0];
        let u = [1.0, -0.5, 0.25, 3.0];
        let t = [0.0, 0.5, 1.0, 1.5];
        let b = Bindings::new()
            .bind(Var::X(0), &x)
            .bind(Var::U(0), &u)
            .bind(Var::T, &t);
        let got = eval_columns(&ast, &b).unwrap();
        for k in 0..4 {
            let want = ast.eval_point(&|v| match v {
                Var::X(_) => x[k],
                Var::U(_) => u[k],
                Var::T => t[k],
            });
            assert_eq!(got[k], want);
        }
    }
}
