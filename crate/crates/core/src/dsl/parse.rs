use super::{BaseKind, KernelExpr, DEFAULT_LOCATION, DEFAULT_STEEPNESS, DEFAULT_WINDOW};
use crate::algebra::{Side, SigmoidFactor, Weight};
use crate::error::{Error, Result};

/// Values given to change-point and change-window hyperparameters the text leaves out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseDefaults {
    pub location: f64,
    pub window: (f64, f64),
    pub steepness: f64,
}

impl Default for ParseDefaults {
    fn default() -> Self {
        ParseDefaults {
            location: DEFAULT_LOCATION,
            window: DEFAULT_WINDOW,
            steepness: DEFAULT_STEEPNESS,
        }
    }
}

impl ParseDefaults {
    /// Defaults bound to a dataset's time range: change points at the
    /// midpoint, change windows over the middle third.
    pub fn for_range(lo: f64, hi: f64) -> ParseDefaults {
        ParseDefaults {
            location: 0.5 * (lo + hi),
            window: (lo + (hi - lo) / 3.0, lo + 2.0 * (hi - lo) / 3.0),
            steepness: DEFAULT_STEEPNESS,
        }
    }
}

/// Parse kernel-expression text such as `CW(SE + CW(WN + SE, WN), C)`.
pub fn parse(text: &str) -> Result<KernelExpr> {
    parse_with_defaults(text, &ParseDefaults::default())
}

pub fn parse_with_defaults(text: &str, defaults: &ParseDefaults) -> Result<KernelExpr> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        defaults: *defaults,
    };
    let expr = p.sum()?;
    let tok = p.peek();
    if tok.kind != Tok::End {
        return Err(syntax(tok.offset, format!("unexpected {}", tok.kind.describe())));
    }
    expr.validate()?;
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Plus,
    Star,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Plus => "`+`".into(),
            Tok::Star => "`*`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'*' => Some(Tok::Star),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            b',' => Some(Tok::Comma),
            b'=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token {
                kind,
                offset: start,
            });
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Tok::Ident(text[start..i].to_string()),
                offset: start,
            });
        } else if c.is_ascii_digit() || c == b'.' || c == b'-' {
            if c == b'-' {
                i += 1;
            }
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let lit = &text[start..i];
            let value: f64 = lit
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{lit}`")))?;
            out.push(Token {
                kind: Tok::Number(value),
                offset: start,
            });
        } else {
            let ch = text[start..].chars().next().unwrap();
            return Err(syntax(start, format!("unexpected character `{ch}`")));
        }
    }
    out.push(Token {
        kind: Tok::End,
        offset: text.len(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    defaults: ParseDefaults,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: Tok) -> Result<Token> {
        let t = self.next();
        if t.kind == kind {
            Ok(t)
        } else {
            Err(syntax(
                t.offset,
                format!("expected {}, found {}", kind.describe(), t.kind.describe()),
            ))
        }
    }

    fn sum(&mut self) -> Result<KernelExpr> {
        let mut terms = vec![self.product()?];
        while self.peek().kind == Tok::Plus {
            self.next();
            terms.push(self.product()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            KernelExpr::Sum(terms)
        })
    }

    fn product(&mut self) -> Result<KernelExpr> {
        let mut factors = vec![self.atom()?];
        while self.peek().kind == Tok::Star {
            self.next();
            factors.push(self.atom()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            KernelExpr::Product(factors)
        })
    }

    fn atom(&mut self) -> Result<KernelExpr> {
        let tok = self.next();
        match tok.kind {
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => self.named(&name, tok.offset),
            other => Err(syntax(
                tok.offset,
                format!("expected a kernel, found {}", other.describe()),
            )),
        }
    }

    fn named(&mut self, name: &str, offset: usize) -> Result<KernelExpr> {
        if let Some(kind) = BaseKind::from_name(name) {
            let mut base = kind.default_kernel();
            for (key, key_offset, value) in self.params()? {
                if !base.set_param(&key, value) {
                    return Err(unknown_param(name, &key, key_offset));
                }
            }
            return Ok(KernelExpr::Base(base));
        }
        match name {
            "CP" => {
                let (left, right) = self.two_args()?;
                let mut location = self.defaults.location;
                let mut steepness = self.defaults.steepness;
                for (key, key_offset, value) in self.params()? {
                    match key.as_str() {
                        "location" => location = value,
                        "steepness" => steepness = value,
                        _ => return Err(unknown_param(name, &key, key_offset)),
                    }
                }
                Ok(KernelExpr::ChangePoint {
                    left: Box::new(left),
                    right: Box::new(right),
                    location,
                    steepness,
                })
            }
            "CW" => {
                let (inside, outside) = self.two_args()?;
                let (mut start, mut end) = self.defaults.window;
                let mut steepness = self.defaults.steepness;
                for (key, key_offset, value) in self.params()? {
                    match key.as_str() {
                        "start" => start = value,
                        "end" => end = value,
                        "steepness" => steepness = value,
                        _ => return Err(unknown_param(name, &key, key_offset)),
                    }
                }
                Ok(KernelExpr::ChangeWindow {
                    inside: Box::new(inside),
                    outside: Box::new(outside),
                    start,
                    end,
                    steepness,
                })
            }
            "BEFORE" | "AFTER" => {
                let inner = self.one_arg()?;
                let side = if name == "BEFORE" {
                    Side::Before
                } else {
                    Side::After
                };
                let mut factor = SigmoidFactor {
                    location: DEFAULT_LOCATION,
                    steepness: DEFAULT_STEEPNESS,
                    side,
                };
                for (key, key_offset, value) in self.params()? {
                    match key.as_str() {
                        "location" => factor.location = value,
                        "steepness" => factor.steepness = value,
                        _ => return Err(unknown_param(name, &key, key_offset)),
                    }
                }
                Ok(KernelExpr::weighted(Weight::Sigmoid(factor), inner))
            }
            "OUTSIDE" => {
                let inner = self.one_arg()?;
                let (mut start, mut end) = DEFAULT_WINDOW;
                let mut steepness = DEFAULT_STEEPNESS;
                for (key, key_offset, value) in self.params()? {
                    match key.as_str() {
                        "start" => start = value,
                        "end" => end = value,
                        "steepness" => steepness = value,
                        _ => return Err(unknown_param(name, &key, key_offset)),
                    }
                }
                Ok(KernelExpr::weighted(
                    Weight::OutsideWindow {
                        start,
                        end,
                        steepness,
                    },
                    inner,
                ))
            }
            _ => Err(Error::UnknownKernel {
                name: name.to_string(),
                offset,
            }),
        }
    }

    fn one_arg(&mut self) -> Result<KernelExpr> {
        self.expect(Tok::LParen)?;
        let inner = self.sum()?;
        self.expect(Tok::RParen)?;
        Ok(inner)
    }

    fn two_args(&mut self) -> Result<(KernelExpr, KernelExpr)> {
        self.expect(Tok::LParen)?;
        let a = self.sum()?;
        self.expect(Tok::Comma)?;
        let b = self.sum()?;
        self.expect(Tok::RParen)?;
        Ok((a, b))
    }

    /// Optional `[name=value, ...]` list.
    fn params(&mut self) -> Result<Vec<(String, usize, f64)>> {
        let mut out: Vec<(String, usize, f64)> = Vec::new();
        if self.peek().kind != Tok::LBracket {
            return Ok(out);
        }
        self.next();
        if self.peek().kind == Tok::RBracket {
            self.next();
            return Ok(out);
        }
        loop {
            let key_tok = self.next();
            let key = match key_tok.kind {
                Tok::Ident(k) => k,
                other => {
                    return Err(syntax(
                        key_tok.offset,
                        format!("expected a hyperparameter name, found {}", other.describe()),
                    ))
                }
            };
            if out.iter().any(|(k, _, _)| *k == key) {
                return Err(syntax(key_tok.offset, format!("duplicate hyperparameter `{key}`")));
            }
            self.expect(Tok::Eq)?;
            let val_tok = self.next();
            let value = match val_tok.kind {
                Tok::Number(v) => v,
                other => {
                    return Err(syntax(
                        val_tok.offset,
                        format!("expected a number, found {}", other.describe()),
                    ))
                }
            };
            out.push((key, key_tok.offset, value));
            let sep = self.next();
            match sep.kind {
                Tok::Comma => continue,
                Tok::RBracket => break,
                other => {
                    return Err(syntax(
                        sep.offset,
                        format!("expected `,` or `]`, found {}", other.describe()),
                    ))
                }
            }
        }
        Ok(out)
    }
}

fn unknown_param(kernel: &str, name: &str, offset: usize) -> Error {
    Error::UnknownHyperparameter {
        kernel: kernel.to_string(),
        name: name.to_string(),
        offset,
    }
}
