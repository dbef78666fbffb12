use super::{Expr, Func};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: bool },
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        position,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_lowercase() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit()) {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
        } else if c.is_ascii_digit() {
            let start = i;
            let mut integer = true;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                let frac = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == frac {
                    return Err(syntax(i, "expected digits after decimal point"));
                }
                integer = false;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                let digits = j;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j == digits {
                    return Err(syntax(j, "expected exponent digits"));
                }
                i = j;
                integer = false;
            }
            let value: f64 = text[start..i]
                .parse()
                .map_err(|_| syntax(start, "malformed number"))?;
            out.push(Token {
                tok: Tok::Num { value, integer },
                pos: start,
            });
        } else if b"+-*/^(),".contains(&c) {
            out.push(Token {
                tok: Tok::Op(c as char),
                pos: i,
            });
            i += 1;
        } else {
            return Err(syntax(i, format!("unexpected character {:?}", c as char)));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    next: usize,
    arity: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.next).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.next).map_or(self.len, |t| t.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.next += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = lhs + self.term()?;
            } else if self.eat_op('-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = lhs * self.unary()?;
            } else if self.eat_op('/') {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            Ok(-self.unary()?)
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat_op('^') {
            let k = self.exponent()?;
            Ok(base.powi(k))
        } else {
            Ok(base)
        }
    }

    /// `['-'] INT ('^' exponent)?`, folded right-associatively.
    fn exponent(&mut self) -> Result<i32> {
        let pos = self.pos();
        let negative = self.eat_op('-');
        let base = match self.peek() {
            Some(Tok::Num {
                value,
                integer: true,
            }) => *value,
            _ => return Err(syntax(pos, "exponent must be an integer literal")),
        };
        self.next += 1;
        let mut k = if base <= i32::MAX as f64 {
            base as i64
        } else {
            return Err(syntax(pos, "exponent out of range"));
        };
        if self.eat_op('^') {
            let e = self.exponent()?;
            if e < 0 {
                return Err(syntax(pos, "negative exponent in integer power chain"));
            }
            k = u32::try_from(e)
                .ok()
                .and_then(|e| k.checked_pow(e))
                .ok_or_else(|| syntax(pos, "exponent out of range"))?;
        }
        if negative {
            k = -k;
        }
        i32::try_from(k).map_err(|_| syntax(pos, "exponent out of range"))
    }

    fn primary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        let Some(tok) = self.peek().cloned() else {
            return Err(syntax(pos, "unexpected end of input"));
        };
        self.next += 1;
        match tok {
            Tok::Num { value, .. } => Ok(Expr::Const(value)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Op(c) => Err(syntax(pos, format!("unexpected `{c}`"))),
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(f) = Func::from_name(&name) {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(arg.call(f));
                }
                if let Some(digits) = name.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                        let index: usize = digits
                            .parse()
                            .map_err(|_| syntax(pos, "variable index out of range"))?;
                        if index == 0 {
                            return Err(syntax(pos, "variables are numbered from x1"));
                        }
                        if index > self.arity {
                            return Err(Error::Arity {
                                index,
                                arity: self.arity,
                            });
                        }
                        return Ok(Expr::Var(index - 1));
                    }
                }
                Err(syntax(pos, format!("unknown identifier `{name}`")))
            }
        }
    }
}

/// Parses infix text into an expression over `arity` variables `x1..x<arity>`.
pub fn parse(text: &str, arity: usize) -> Result<Expr> {
    if arity == 0 {
        return Err(Error::Dimension("arity must be positive".into()));
    }
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        next: 0,
        arity,
        len: text.len(),
    };
    let e = p.expr()?;
    if p.next < p.tokens.len() {
        return Err(syntax(p.pos(), "trailing input"));
    }
    Ok(e)
}
