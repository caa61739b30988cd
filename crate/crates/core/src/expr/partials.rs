use super::{differentiate, Ast, BinaryOp, Var};

/// Symbolic first and half-second partials of one expression with respect
/// to an ordered argument list.
///
/// Positions are 0-based indices into `args`. Hessian entries satisfy
/// `row <= col`; diagonal entries hold half the second partial.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSpecSource {
    pub args: Vec<Var>,
    pub value: Ast,
    pub grad: Vec<(usize, Ast)>,
    pub hess: Vec<(usize, usize, Ast)>,
}

/// Differentiate `ast` with respect to every argument, dropping symbolic
/// zeros. Arguments the expression does not reference simply produce no
/// entries.
pub fn partial_spec(ast: &Ast, args: &[Var]) -> PartialSpecSource {
    let mut grad = Vec::new();
    let mut hess = Vec::new();
    let firsts: Vec<Ast> = args.iter().map(|&v| differentiate(ast, v)).collect();
    for (i, d) in firsts.iter().enumerate() {
        if d.is_zero() {
            continue;
        }
        grad.push((i, d.clone()));
        for (j, &vj) in args.iter().enumerate().skip(i) {
            let second = differentiate(d, vj);
            if second.is_zero() {
                continue;
            }
            let entry = if i == j {
                super::simplify(&Ast::binary(BinaryOp::Mul, Ast::Const(0.5), second))
            } else {
                second
            };
            hess.push((i, j, entry));
        }
    }
    PartialSpecSource {
        args: args.to_vec(),
        value: ast.clone(),
        grad,
        hess,
    }
}
