//! Recursive-descent parser.
//!
//! ```text
//! expr  := term (('+'|'-') term)*
//! term  := unary (('*'|'/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```

use super::{Ast, BinaryOp, ExprError, UnaryOp, Var};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let literal = &text[start..i];
            let value: f64 = literal.parse().map_err(|_| ExprError::Syntax {
                position: start,
                found: format!("`{literal}`"),
                expected: vec!["number".into()],
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    let found = text[start..].chars().next().unwrap_or(c);
                    return Err(ExprError::Syntax {
                        position: start,
                        found: format!("'{found}'"),
                        expected: vec!["operator".into(), "operand".into()],
                    });
                }
            };
            i += 1;
            out.push((start, tok));
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    n_x: usize,
    n_u: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ExprError {
        let (position, tok) = &self.toks[self.pos];
        ExprError::Syntax {
            position: *position,
            found: tok.describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Ast::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Ast, ExprError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(Ast::unary(UnaryOp::Neg, inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Ast::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Ast::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let op = UnaryOp::from_name(&name)
                        .ok_or_else(|| ExprError::UnknownFunction { name: name.clone() })?;
                    self.bump();
                    let inner = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Ast::unary(op, inner))
                } else {
                    self.variable(&name).map(Ast::Var)
                }
            }
            _ => Err(self.error(&["number", "identifier", "'('", "'-'"])),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&["')'"]))
        }
    }

    fn variable(&self, name: &str) -> Result<Var, ExprError> {
        let unknown = || ExprError::UnknownVariable {
            name: name.to_string(),
        };
        if name == "t" {
            return Ok(Var::T);
        }
        let (kind, digits) = name.split_at(1);
        if digits.is_empty()
            || !digits.bytes().all(|b| b.is_ascii_digit())
            || digits.starts_with('0')
        {
            return Err(unknown());
        }
        let k: usize = digits.parse().map_err(|_| unknown())?;
        match kind {
            "x" if k <= self.n_x => Ok(Var::X(k - 1)),
            "u" if k <= self.n_u => Ok(Var::U(k - 1)),
            _ => Err(unknown()),
        }
    }
}

/// Parse an expression over `x1..x{n_x}`, `u1..u{n_u}` and `t`.
pub fn parse(text: &str, n_x: usize, n_u: usize) -> Result<Ast, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        n_x,
        n_u,
    };
    let ast = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1() -> Ast {
        Ast::Var(Var::X(0))
    }
    fn u1() -> Ast {
        Ast::Var(Var::U(0))
    }

    #[test]
    fn parses_quotient_of_power() {
        let ast = parse("u1^2/2", 1, 1).unwrap();
        let expected = Ast::binary(
            BinaryOp::Div,
            Ast::binary(BinaryOp::Pow, u1(), Ast::Const(2.0)),
            Ast::Const(2.0),
        );
        assert_eq!(ast, expected);
    }

    #[test]
    fn parses_function_call() {
        let ast = parse("sin(x1*u1)", 1, 1).unwrap();
        assert_eq!(
            ast,
            Ast::unary(UnaryOp::Sin, Ast::binary(BinaryOp::Mul, x1(), u1()))
        );
    }

    #[test]
    fn rejects_dangling_operator() {
        match parse("x1 + * u1", 1, 1) {
            Err(ExprError::Syntax {
                position, found, ..
            }) => {
                assert_eq!(position, 5);
                assert_eq!(found, "'*'");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_variables() {
        assert_eq!(
            parse("x3", 2, 1),
            Err(ExprError::UnknownVariable { name: "x3".into() })
        );
        assert!(matches!(
            parse("u0", 2, 1),
            Err(ExprError::UnknownVariable { .. })
        ));
        assert!(matches!(
            parse("q1", 2, 1),
            Err(ExprError::UnknownVariable { .. })
        ));
        assert!(matches!(
            parse("x01", 2, 1),
            Err(ExprError::UnknownVariable { .. })
        ));
    }

    #[test]
    fn rejects_unknown_function() {
        assert_eq!(
            parse("atan(x1)", 1, 0),
            Err(ExprError::UnknownFunction {
                name: "atan".into()
            })
        );
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let ast = parse("-x1^2", 1, 0).unwrap();
        assert_eq!(
            ast,
            Ast::unary(
                UnaryOp::Neg,
                Ast::binary(BinaryOp::Pow, x1(), Ast::Const(2.0))
            )
        );
    }

    #[test]
    fn power_is_right_associative() {
        let ast = parse("x1^2^3", 1, 0).unwrap();
        assert_eq!(
            ast,
            Ast::binary(
                BinaryOp::Pow,
                x1(),
                Ast::binary(BinaryOp::Pow, Ast::Const(2.0), Ast::Const(3.0))
            )
        );
    }

    #[test]
    fn scientific_notation_and_whitespace() {
        let ast = parse("  2.5e-3 *\tt ", 0, 0).unwrap();
        assert_eq!(
            ast,
            Ast::binary(BinaryOp::Mul, Ast::Const(2.5e-3), Ast::Var(Var::T))
        );
        assert_eq!(parse("1E2", 0, 0).unwrap(), Ast::Const(100.0));
    }

    #[test]
    fn subtraction_is_left_associative() {
        let ast = parse("x1-u1-t", 1, 1).unwrap();
        assert_eq!(
            ast,
            Ast::binary(
                BinaryOp::Sub,
                Ast::binary(BinaryOp::Sub, x1(), u1()),
                Ast::Var(Var::T)
            )
        );
    }

    #[test]
    fn reports_unbalanced_parens() {
        assert!(matches!(parse("(x1", 1, 0), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x1)", 1, 0), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("", 1, 0), Err(ExprError::Syntax { .. })));
        assert!(matches!(
            parse("x1 # 2", 1, 0),
            Err(ExprError::Syntax { position: 3, .. })
        ));
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "u1^2/2",
            "-x1^2",
            "(x1+u1)*(t-x1)",
            "x1-(u1-t)",
            "x1/(u1*t)",
            "(-x1)^u1",
            "2^-x1",
            "exp(sin(x1))^2",
        ] {
            let ast = parse(text, 1, 1).unwrap();
            let again = parse(&ast.to_string(), 1, 1).unwrap();
            assert_eq!(ast, again, "{text} printed as {ast}");
        }
    }
}
