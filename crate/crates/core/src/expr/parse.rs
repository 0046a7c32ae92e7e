//! Recursive-descent parser for the infix expression grammar.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom ("^" unary)?
//! atom   := number | "pi" | var | func "(" expr ")" | "(" expr ")"
//! var    := "x" | "y" | "x" digits | "y" digits
//! func   := exp | log | ln | sin | cos | tanh | sqrt | abs | conv
//! ```
//!
//! `conv(K)` is the mean-field convolution leaf; its kernel may only use `x`.

use std::f64::consts::PI;

use super::{Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parse error at byte {pos} in `{input}`: {msg}")]
pub struct ParseError {
    pub input: String,
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

struct Parser<'a> {
    input: &'a str,
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

pub fn parse(input: &str) -> Result<Expr, ParseError> {
    let toks = lex(input)?;
    let mut p = Parser {
        input,
        toks,
        pos: 0,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// Parses a potential of a single variable; `x`, `y` and `z` all denote that
/// variable, which is returned as the slow coordinate `x`.
pub fn parse_potential(input: &str) -> Result<Expr, ParseError> {
    let mut normalized = String::with_capacity(input.len());
    let bytes = input.as_bytes();
    for (i, ch) in input.char_indices() {
        let standalone = (ch == 'y' || ch == 'z')
            && (i == 0 || !is_ident_byte(bytes[i - 1]))
            && (i + 1 == bytes.len() || !is_ident_byte(bytes[i + 1]));
        normalized.push(if standalone { 'x' } else { ch });
    }
    let e = parse(&normalized).map_err(|mut err| {
        err.input = input.to_string();
        err
    })?;
    if e.has_conv() {
        return Err(ParseError {
            input: input.to_string(),
            pos: 0,
            msg: "a potential cannot contain conv(...)".into(),
        });
    }
    Ok(e)
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn lex(input: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let text = &input[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                input: input.to_string(),
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && is_ident_byte(bytes[i]) {
                i += 1;
            }
            out.push((start, Tok::Ident(input[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ParseError {
                        input: input.to_string(),
                        pos: i,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((i, tok));
            i += 1;
        }
    }
    Ok(out)
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ParseError {
        let pos = self
            .toks
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.input.len());
        ParseError {
            input: self.input.to_string(),
            pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {want:?}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Op('-')) {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Op('^')) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(base.pow(exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::c(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "log" | "ln" => Func::Log,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "tanh" => Func::Tanh,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        "conv" => {
                            if arg.depends_on_any_y() || arg.has_conv() {
                                self.pos = start;
                                return Err(self.err("conv kernel may only use x"));
                            }
                            return Ok(Expr::conv(arg));
                        }
                        _ => {
                            self.pos = start;
                            return Err(self.err(&format!("unknown function `{name}`")));
                        }
                    };
                    return Ok(Expr::call(func, arg));
                }
                if name == "pi" {
                    return Ok(Expr::c(PI));
                }
                if let Some(v) = parse_var(&name) {
                    return Ok(Expr::Var(v));
                }
                self.pos = start;
                Err(self.err(&format!("unknown identifier `{name}`")))
            }
            _ => {
                self.pos = start;
                Err(self.err("expected a number, variable, function or `(`"))
            }
        }
    }
}

fn parse_var(name: &str) -> Option<Var> {
    let (head, rest) = name.split_at(1);
    let idx = if rest.is_empty() {
        0
    } else {
        rest.parse::<usize>().ok()?
    };
    match head {
        "x" => Some(Var::X(idx)),
        "y" => Some(Var::Y(idx)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> f64 {
        parse(s).unwrap().eval(&[x], &[y], None).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("(1 - 2) - 3", 0.0, 0.0), -4.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("2 * -y", 0.0, 1.5), -3.0);
    }

    #[test]
    fn functions_and_constants() {
        let v = ev("0.1*(cos(2*pi*y) + sin(2*pi*y))", 0.0, 0.0);
        assert!((v - 0.1).abs() < 1e-15);
        assert!((ev("exp(ln(x))", 2.5, 0.0) - 2.5).abs() < 1e-15);
        assert_eq!(ev("1.5e-1 * 2", 0.0, 0.0), 0.3);
    }

    #[test]
    fn conv_kernel_must_be_slow() {
        assert!(parse("-x - conv(x)").is_ok());
        assert!(parse("conv(y)").is_err());
    }

    #[test]
    fn errors_carry_position() {
        let e = parse("x + * 2").unwrap_err();
        assert_eq!(e.pos, 4);
        assert!(parse("foo(x)").is_err());
        assert!(parse("x $ 2").is_err());
        assert!(parse("(x + 1").is_err());
    }

    #[test]
    fn potential_variable_is_normalized() {
        let q = parse_potential("0.1*(cos(2*pi*y)+sin(2*pi*y))").unwrap();
        assert!(!q.depends_on_any_y());
        let w = parse_potential("z^2/2").unwrap();
        assert_eq!(w.eval(&[3.0], &[], None).unwrap(), 4.5);
        assert!(parse_potential("conv(x)").is_err());
    }
}
