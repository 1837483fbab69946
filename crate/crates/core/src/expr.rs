//! A small expression language for target functions over the unit square.
//!
//! Grammar (whitespace-insensitive, no implicit multiplication):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 'x1' | 'x2' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos'
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier '{name}' at offset {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("function '{name}' at offset {pos} takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        pos: usize,
        expected: usize,
        got: usize,
    },
}

impl ExprError {
    pub fn offset(&self) -> usize {
        match self {
            ExprError::Syntax { pos, .. }
            | ExprError::UnknownIdentifier { pos, .. }
            | ExprError::Arity { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Abstract syntax tree of a target expression.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetExpr {
    Num(f64),
    X1,
    X2,
    Pi,
    Neg(Box<TargetExpr>),
    Call(Func, Box<TargetExpr>),
    Bin(BinOp, Box<TargetExpr>, Box<TargetExpr>),
}

impl TargetExpr {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            TargetExpr::Num(v) => *v,
            TargetExpr::X1 => x1,
            TargetExpr::X2 => x2,
            TargetExpr::Pi => std::f64::consts::PI,
            TargetExpr::Neg(e) => -e.eval(x1, x2),
            TargetExpr::Call(f, e) => f.apply(e.eval(x1, x2)),
            TargetExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x1, x2), b.eval(x1, x2));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
        }
    }

    // 0: additive, 1: multiplicative, 2: unary, 3: atom
    fn level(&self) -> u8 {
        match self {
            TargetExpr::Bin(op, _, _) => op.precedence() - 1,
            TargetExpr::Neg(_) => 2,
            _ => 3,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_level: u8) -> fmt::Result {
        let paren = self.level() < min_level;
        if paren {
            f.write_str("(")?;
        }
        match self {
            TargetExpr::Num(v) => write!(f, "{v:?}")?,
            TargetExpr::X1 => f.write_str("x1")?,
            TargetExpr::X2 => f.write_str("x2")?,
            TargetExpr::Pi => f.write_str("pi")?,
            TargetExpr::Neg(e) => {
                f.write_str("-")?;
                e.write_at(f, 2)?;
            }
            TargetExpr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.write_at(f, 0)?;
                f.write_str(")")?;
            }
            TargetExpr::Bin(op, a, b) => {
                let lvl = op.precedence() - 1;
                a.write_at(f, lvl)?;
                write!(f, " {} ", op.symbol())?;
                // left-associative: a right operand of equal precedence needs parentheses
                b.write_at(f, lvl + 1)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for TargetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

impl std::str::FromStr for TargetExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
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
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number '{lit}'"),
                })?;
                out.push((Tok::Num(v), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                // report the char, not the byte, for non-ASCII input
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    pos: i,
                    msg: format!("unexpected character '{ch}'"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<TargetExpr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.at += 1;
            let rhs = self.term()?;
            lhs = TargetExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<TargetExpr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.at += 1;
            let rhs = self.unary()?;
            lhs = TargetExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<TargetExpr, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.at += 1;
            return Ok(TargetExpr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<TargetExpr, ExprError> {
        let pos = self.pos();
        let tok = match self.toks.get(self.at) {
            Some((t, _)) => t.clone(),
            None => return self.syntax("unexpected end of input"),
        };
        self.at += 1;
        match tok {
            Tok::Num(v) => Ok(TargetExpr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x1" => Ok(TargetExpr::X1),
                "x2" => Ok(TargetExpr::X2),
                "pi" => Ok(TargetExpr::Pi),
                "sin" | "cos" => {
                    let func = if name == "sin" { Func::Sin } else { Func::Cos };
                    if self.peek() != Some(&Tok::LParen) {
                        return self.syntax(format!("expected '(' after '{name}'"));
                    }
                    self.at += 1;
                    if self.peek() == Some(&Tok::RParen) {
                        return Err(ExprError::Arity {
                            name,
                            pos,
                            expected: 1,
                            got: 0,
                        });
                    }
                    let arg = self.expr()?;
                    if self.peek() == Some(&Tok::Comma) {
                        let mut got = 1;
                        while self.peek() == Some(&Tok::Comma) {
                            self.at += 1;
                            self.expr()?;
                            got += 1;
                        }
                        return Err(ExprError::Arity {
                            name,
                            pos,
                            expected: 1,
                            got,
                        });
                    }
                    self.expect_rparen()?;
                    Ok(TargetExpr::Call(func, Box::new(arg)))
                }
                _ => Err(ExprError::UnknownIdentifier { name, pos }),
            },
            Tok::Op(c) => Err(ExprError::Syntax {
                pos,
                msg: format!("unexpected operator '{c}'"),
            }),
            Tok::RParen => Err(ExprError::Syntax {
                pos,
                msg: "unexpected ')'".into(),
            }),
            Tok::Comma => Err(ExprError::Syntax {
                pos,
                msg: "unexpected ','".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Tok::RParen) {
            self.at += 1;
            Ok(())
        } else {
            self.syntax("expected ')'")
        }
    }
}

/// Parses a target expression such as `10*x1*x2*sin(pi*x1)*sin(pi*x2)`.
pub fn parse_expr(text: &str) -> Result<TargetExpr, ExprError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return p.syntax("unexpected trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(s: &str, x1: f64, x2: f64) -> f64 {
        parse_expr(s).unwrap().eval(x1, x2)
    }

    #[test]
    fn first_example_target() {
        let v = eval("10*x1*x2*sin(pi*x1)*sin(pi*x2)", 0.5, 0.5);
        assert!((v - 2.5).abs() < 1e-14);
    }

    #[test]
    fn second_example_target() {
        let v = eval("x1*sin(pi*x2)+x2*sin(pi*x1)", 1.0, 0.5);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unclosed_call_reports_end_offset() {
        let err = parse_expr("sin(").unwrap_err();
        assert!(matches!(err, ExprError::Syntax { pos: 4, .. }), "{err:?}");
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 - 2 - 3", 0.0, 0.0), -4.0);
        assert_eq!(eval("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(eval("-2*3 + 1", 0.0, 0.0), -5.0);
        assert_eq!(eval("2 * (3 + 1)", 0.0, 0.0), 8.0);
        assert_eq!(eval("--x1", 3.0, 0.0), 3.0);
        assert_eq!(eval("1.5e1 + 2E-1", 0.0, 0.0), 15.2);
    }

    #[test]
    fn rejects_implicit_multiplication() {
        assert!(matches!(parse_expr("2x1"), Err(ExprError::Syntax { pos: 1, .. })));
        assert!(parse_expr("2 (x1)").is_err());
    }

    #[test]
    fn unknown_identifier_and_arity() {
        assert_eq!(
            parse_expr("exp(x1)").unwrap_err(),
            ExprError::UnknownIdentifier {
                name: "exp".into(),
                pos: 0
            }
        );
        assert!(matches!(
            parse_expr("1 + sin(x1, x2)"),
            Err(ExprError::Arity {
                pos: 4,
                expected: 1,
                got: 2,
                ..
            })
        ));
        assert!(matches!(parse_expr("cos()"), Err(ExprError::Arity { got: 0, .. })));
    }

    #[test]
    fn display_keeps_grouping() {
        for s in ["x1 - (x2 - 1)", "x1 / (x2 * 2)", "-(x1 + x2)", "sin(-x1) * -cos(pi)"] {
            let e = parse_expr(s).unwrap();
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{s} -> {printed}");
        }
        assert_eq!(parse_expr("x1-(x2-1)").unwrap().to_string(), "x1 - (x2 - 1.0)");
    }
}
