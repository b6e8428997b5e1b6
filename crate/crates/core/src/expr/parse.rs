use thiserror::Error;

use super::{Constant, Expr, Func, Grammar, Number, Terminal, MAX_LITERAL_HUNDREDTHS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{token}` at byte {pos}")]
    UnknownSymbol { pos: usize, token: String },
    #[error("`{func}` at byte {pos} takes {expected} argument(s), got {got}")]
    Arity { pos: usize, func: String, expected: usize, got: usize },
    #[error("number `{token}` at byte {pos} exceeds precision 2 or the literal range")]
    Precision { pos: usize, token: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        let delim = ch == '(' || ch == ')' || ch.is_whitespace();
        if delim {
            if let Some(s) = start.take() {
                out.push((s, Tok::Atom(&text[s..i])));
            }
            match ch {
                '(' => out.push((i, Tok::Open)),
                ')' => out.push((i, Tok::Close)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, Tok::Atom(&text[s..])));
    }
    out
}

fn parse_number(pos: usize, token: &str) -> Result<Option<Terminal>, ParseError> {
    let body = token.strip_prefix('-').unwrap_or(token);
    let looks_numeric = !body.is_empty()
        && body.chars().all(|c| c.is_ascii_digit() || c == '.')
        && body.chars().next().is_some_and(|c| c.is_ascii_digit());
    if !looks_numeric {
        return Ok(None);
    }
    let bad = || ParseError::Precision { pos, token: token.to_string() };
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) if !f.is_empty() && !f.contains('.') => (i, f),
        Some(_) => return Err(ParseError::Syntax { pos, msg: format!("malformed number `{token}`") }),
        None => (body, ""),
    };
    if frac.len() > 2 || int.len() > 4 {
        return Err(bad());
    }
    let int: i32 = int.parse().map_err(|_| bad())?;
    let frac_h: i32 = match frac.len() {
        0 => 0,
        1 => frac.parse::<i32>().map_err(|_| bad())? * 10,
        _ => frac.parse().map_err(|_| bad())?,
    };
    let mut h = int * 100 + frac_h;
    if token.starts_with('-') {
        h = -h;
    }
    if h.abs() > MAX_LITERAL_HUNDREDTHS {
        return Err(bad());
    }
    Ok(Some(Terminal::number(Number::from_hundredths(h))))
}

struct Parser<'g, 'a> {
    grammar: &'g Grammar,
    toks: Vec<(usize, Tok<'a>)>,
    at: usize,
    len: usize,
}

impl<'a> Parser<'_, 'a> {
    fn peek(&self) -> Option<&(usize, Tok<'a>)> {
        self.toks.get(self.at)
    }

    fn end_pos(&self) -> usize {
        self.len
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let Some((pos, tok)) = self.peek().cloned() else {
            return Err(ParseError::Syntax { pos: self.end_pos(), msg: "unexpected end of input".into() });
        };
        self.at += 1;
        match tok {
            Tok::Close => Err(ParseError::Syntax { pos, msg: "unexpected `)`".into() }),
            Tok::Atom(a) => self.terminal(pos, a),
            Tok::Open => {
                let Some((fpos, Tok::Atom(name))) = self.peek().cloned() else {
                    let pos = self.peek().map_or(self.end_pos(), |t| t.0);
                    return Err(ParseError::Syntax { pos, msg: "expected function name after `(`".into() });
                };
                self.at += 1;
                let func = Func::from_name(name)
                    .filter(|f| self.grammar.functions.contains(*f))
                    .ok_or_else(|| ParseError::UnknownSymbol { pos: fpos, token: name.to_string() })?;
                let mut children = Vec::with_capacity(func.arity());
                loop {
                    match self.peek() {
                        Some((_, Tok::Close)) => {
                            self.at += 1;
                            break;
                        }
                        Some(_) => children.push(self.expr()?),
                        None => {
                            return Err(ParseError::Syntax {
                                pos: self.end_pos(),
                                msg: format!("unclosed `(` opened at byte {pos}"),
                            })
                        }
                    }
                }
                if children.len() != func.arity() {
                    return Err(ParseError::Arity {
                        pos: fpos,
                        func: name.to_string(),
                        expected: func.arity(),
                        got: children.len(),
                    });
                }
                Ok(Expr::Apply(func, children))
            }
        }
    }

    fn terminal(&self, pos: usize, atom: &str) -> Result<Expr, ParseError> {
        if let Some(t) = parse_number(pos, atom)? {
            return Ok(Expr::Leaf(t));
        }
        if atom == "pi" || atom == "π" {
            return Ok(Expr::constant(Constant::Pi));
        }
        if atom == "θ" && self.grammar.is_variable("th") {
            return Ok(Expr::var("th"));
        }
        if self.grammar.is_variable(atom) {
            return Ok(Expr::var(atom));
        }
        if Func::from_name(atom).is_some() {
            return Err(ParseError::Syntax { pos, msg: format!("function `{atom}` used without parentheses") });
        }
        Err(ParseError::UnknownSymbol { pos, token: atom.to_string() })
    }
}

/// Parses one expression in prefix form under the default grammar.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parse_with(text, &Grammar::default())
}

pub fn parse_with(text: &str, grammar: &Grammar) -> Result<Expr, ParseError> {
    let mut p = Parser { grammar, toks: tokenize(text), at: 0, len: text.len() };
    let e = p.expr()?;
    if let Some((pos, _)) = p.peek() {
        return Err(ParseError::Syntax { pos: *pos, msg: "trailing input".into() });
    }
    Ok(e)
}

/// Parses `lhs = rhs`.
pub fn parse_equation(text: &str, grammar: &Grammar) -> Result<(Expr, Expr), ParseError> {
    let mut p = Parser { grammar, toks: tokenize(text), at: 0, len: text.len() };
    let lhs = p.expr()?;
    match p.peek().cloned() {
        Some((_, Tok::Atom("="))) => p.at += 1,
        Some((pos, _)) => return Err(ParseError::Syntax { pos, msg: "expected `=`".into() }),
        None => return Err(ParseError::Syntax { pos: text.len(), msg: "expected `=`".into() }),
    }
    let rhs = p.expr()?;
    if let Some((pos, _)) = p.peek() {
        return Err(ParseError::Syntax { pos: *pos, msg: "trailing input".into() });
    }
    Ok((lhs, rhs))
}

impl Grammar {
    pub fn parse(&self, text: &str) -> Result<Expr, ParseError> {
        parse_with(text, self)
    }
}
