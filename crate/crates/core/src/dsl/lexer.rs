//! Line-oriented tokenizer and the whitespace canonicalizer built on it.

use super::DslError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Colon,
    Eq,
    Lt,
    Dot,
}

impl Tok {
    fn is_value(&self) -> bool {
        matches!(self, Tok::Ident(_) | Tok::Number(_) | Tok::RParen)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    /// 1-based column.
    pub col: usize,
}

/// One non-blank source line.
#[derive(Clone, Debug)]
pub struct Line {
    /// 1-based line number.
    pub number: usize,
    /// Indentation width in spaces.
    pub indent: usize,
    pub tokens: Vec<Token>,
}

pub const KEYWORDS: &[&str] = &[
    "agent",
    "behavior",
    "do",
    "try",
    "interrupt",
    "when",
    "take",
    "while",
    "param",
    "road",
    "route",
    "spawn",
    "and",
    "not",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Split source into indented token lines. Blank lines are dropped.
pub fn lex(text: &str) -> Result<Vec<Line>, DslError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let mut indent = 0;
        for (col, c) in raw.chars().enumerate() {
            match c {
                ' ' => indent += 1,
                '\t' => {
                    return Err(DslError::syntax(number, col + 1, "tab in indentation"));
                }
                _ => break,
            }
        }
        let tokens = lex_line(&raw[indent..], number, indent)?;
        lines.push(Line { number, indent, tokens });
    }
    Ok(lines)
}

fn lex_line(src: &str, line: usize, offset: usize) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = offset + i + 1;
        if c == ' ' {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            '<' => Some(Tok::Lt),
            '.' => Some(Tok::Dot),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, col });
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let negative = c == '-'
            && !out.last().is_some_and(|t| t.tok.is_value())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_ascii_digit() || negative {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| DslError::syntax(line, col, format!("bad number `{text}`")))?;
            if !value.is_finite() {
                return Err(DslError::syntax(line, col, format!("number `{text}` out of range")));
            }
            out.push(Token {
                tok: Tok::Number(value),
                col,
            });
            continue;
        }
        return Err(DslError::syntax(line, col, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

/// Canonical text of a number literal.
pub fn fmt_number(v: f64) -> String {
    format!("{v}")
}

/// Normalize whitespace without parsing: 4-space indentation per block level,
/// canonical token spacing, canonical number spelling, no blank lines.
pub fn canonicalize(text: &str) -> Result<String, DslError> {
    let lines = lex(text)?;
    let mut stack: Vec<usize> = vec![0];
    let mut out = String::new();
    for line in &lines {
        let top = *stack.last().unwrap_or(&0);
        if line.indent > top {
            stack.push(line.indent);
        } else {
            while stack.len() > 1 && line.indent < *stack.last().unwrap_or(&0) {
                stack.pop();
            }
            if line.indent != *stack.last().unwrap_or(&0) {
                return Err(DslError::syntax(
                    line.number,
                    1,
                    "dedent does not match any outer block",
                ));
            }
        }
        let level = stack.len() - 1;
        out.push_str(&"    ".repeat(level));
        out.push_str(&join_tokens(&line.tokens));
        out.push('\n');
    }
    Ok(out)
}

/// Render a token line with canonical spacing.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut s = String::new();
    let mut depth = 0usize;
    let mut prev: Option<&Tok> = None;
    for t in tokens {
        if let Some(p) = prev {
            if needs_space(p, &t.tok, depth) {
                s.push(' ');
            }
        }
        match &t.tok {
            Tok::Ident(name) => s.push_str(name),
            Tok::Number(v) => s.push_str(&fmt_number(*v)),
            Tok::LParen => {
                depth += 1;
                s.push('(')
            }
            Tok::RParen => {
                depth = depth.saturating_sub(1);
                s.push(')')
            }
            Tok::Comma => s.push(','),
            Tok::Colon => s.push(':'),
            Tok::Eq => s.push('='),
            Tok::Lt => s.push('<'),
            Tok::Dot => s.push('.'),
        }
        prev = Some(&t.tok);
    }
    s
}

fn needs_space(prev: &Tok, next: &Tok, depth: usize) -> bool {
    match (prev, next) {
        (Tok::Eq, _) | (_, Tok::Eq) => depth == 0,
        (Tok::LParen, _) | (Tok::Dot, _) => false,
        (_, Tok::RParen) | (_, Tok::Comma) | (_, Tok::Colon) | (_, Tok::Dot) => false,
        (Tok::Ident(k), Tok::LParen) => is_keyword(k),
        (_, Tok::LParen) => true,
        _ => true,
    }
}
