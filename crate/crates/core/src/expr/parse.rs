use std::collections::BTreeSet;
use std::fmt;

use super::{BinOp, Expression, Func, Symbol};

/// Parse failure with the byte offset and text of the offending token.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {offset} (`{token}`)")]
pub struct ParseDiagnostic {
    pub offset: usize,
    pub token: String,
    pub message: String,
}

/// What a parse is allowed to see: chart dimension and extra named symbols
/// (model parameters, slot names of a product norm, curve parameters).
#[derive(Debug, Clone, Default)]
pub struct ParseContext {
    pub dim: usize,
    pub names: BTreeSet<String>,
}

impl ParseContext {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            names: BTreeSet::new(),
        }
    }

    pub fn with_names<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.names.extend(names.into_iter().map(Into::into));
        self
    }
}

/// Parse `text` with the coordinate symbols `x1..x{dim}` and `v1..v{dim}`.
pub fn parse_expression(text: &str, dim: usize) -> Result<Expression, ParseDiagnostic> {
    parse_with(text, &ParseContext::new(dim))
}

pub fn parse_with(text: &str, ctx: &ParseContext) -> Result<Expression, ParseDiagnostic> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(ParseDiagnostic {
            offset: 0,
            token: String::new(),
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        text,
        tokens,
        pos: 0,
        ctx,
    };
    let expr = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(parser.error_at(tok, "unexpected trailing input"));
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    start: usize,
    end: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || c == b'.' {
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
            let value: f64 = literal.parse().map_err(|_| ParseDiagnostic {
                offset: start,
                token: literal.to_string(),
                message: "malformed number".into(),
            })?;
            TokenKind::Number(value)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            TokenKind::Ident(text[start..i].to_string())
        } else {
            i += 1;
            match c {
                b'+' | b'-' | b'/' | b'^' => TokenKind::Op(c as char),
                b'*' => {
                    // accept `**` as power
                    if i < bytes.len() && bytes[i] == b'*' {
                        i += 1;
                        TokenKind::Op('^')
                    } else {
                        TokenKind::Op('*')
                    }
                }
                b'(' => TokenKind::LParen,
                b')' => TokenKind::RParen,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or('?');
                    return Err(ParseDiagnostic {
                        offset: start,
                        token: ch.to_string(),
                        message: "unexpected character".into(),
                    });
                }
            }
        };
        out.push(Token { kind, start, end: i });
    }
    Ok(out)
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    ctx: &'a ParseContext,
}

impl fmt::Debug for Parser<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Parser").field("pos", &self.pos).finish()
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn error_at(&self, tok: &Token, message: &str) -> ParseDiagnostic {
        ParseDiagnostic {
            offset: tok.start,
            token: self.text[tok.start..tok.end].to_string(),
            message: message.to_string(),
        }
    }

    fn eof_error(&self) -> ParseDiagnostic {
        // offset must stay inside the input
        let offset = self.text.len().saturating_sub(1);
        ParseDiagnostic {
            offset,
            token: String::new(),
            message: "unexpected end of input".into(),
        }
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseDiagnostic> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expression::binary(op, &lhs, &rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expression, ParseDiagnostic> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expression::binary(op, &lhs, &rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expression, ParseDiagnostic> {
        if self.eat_op(&['-']).is_some() {
            return Ok(self.unary()?.neg());
        }
        if self.eat_op(&['+']).is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseDiagnostic> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.exponent()?;
            return Ok(base.pow(&exponent));
        }
        Ok(base)
    }

    // right operand of `^`: right associative, may carry its own sign
    fn exponent(&mut self) -> Result<Expression, ParseDiagnostic> {
        if self.eat_op(&['-']).is_some() {
            return Ok(self.exponent()?.neg());
        }
        if self.eat_op(&['+']).is_some() {
            return self.exponent();
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expression, ParseDiagnostic> {
        let tok = self.next().ok_or_else(|| self.eof_error())?;
        match &tok.kind {
            TokenKind::Number(v) => Ok(Expression::constant(*v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token {
                        kind: TokenKind::RParen,
                        ..
                    }) => Ok(inner),
                    Some(other) => Err(self.error_at(&other, "expected `)`")),
                    None => Err(self.eof_error()),
                }
            }
            TokenKind::Ident(name) => {
                if let Some(func) = Func::from_name(name) {
                    match self.next() {
                        Some(Token {
                            kind: TokenKind::LParen,
                            ..
                        }) => {}
                        Some(other) => return Err(self.error_at(&other, "expected `(` after function name")),
                        None => return Err(self.eof_error()),
                    }
                    let arg = self.expr()?;
                    return match self.next() {
                        Some(Token {
                            kind: TokenKind::RParen,
                            ..
                        }) => Ok(Expression::call(func, &arg)),
                        Some(other) => Err(self.error_at(&other, "expected `)`")),
                        None => Err(self.eof_error()),
                    };
                }
                if name == "abs" {
                    return Err(self.error_at(&tok, "abs is not supported (not smooth)"));
                }
                self.identifier(name, &tok)
            }
            TokenKind::Op(_) | TokenKind::RParen => Err(self.error_at(&tok, "unexpected token")),
        }
    }

    fn identifier(&self, name: &str, tok: &Token) -> Result<Expression, ParseDiagnostic> {
        if self.ctx.names.contains(name) {
            return Ok(Expression::symbol(Symbol::named(name)));
        }
        if name == "pi" {
            return Ok(Expression::constant(std::f64::consts::PI));
        }
        let coordinate = |prefix: char| -> Option<&str> {
            name.strip_prefix(prefix)
                .filter(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        };
        for (prefix, make) in [('x', Symbol::X as fn(usize) -> Symbol), ('v', Symbol::V)] {
            if let Some(digits) = coordinate(prefix) {
                let index: usize = digits
                    .parse()
                    .map_err(|_| self.error_at(tok, "coordinate index too large"))?;
                if index == 0 || index > self.ctx.dim {
                    return Err(self.error_at(
                        tok,
                        &format!("variable index out of range (chart dimension {})", self.ctx.dim),
                    ));
                }
                return Ok(Expression::symbol(make(index - 1)));
            }
        }
        Err(self.error_at(tok, "unknown identifier"))
    }
}
