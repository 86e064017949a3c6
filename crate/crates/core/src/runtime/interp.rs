//! Static interpretation of a restricted Python subset.
//!
//! Accepted statements:
//!
//! * `tool(args...)` where `tool` is registered and every argument is a literal,
//! * `name = tool(args...)`,
//! * `print(arg, ...)` where each argument is a literal or a bound name.
//!
//! Literals are strings, numbers, `None` and lists of strings. Anything else
//! is [`UnsupportedCode`], carrying the text of the first offending statement.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::{ParamType, ToolDescriptor, ToolRegistry};
use crate::transcript::CodeBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Literal {
    None,
    Int(i64),
    Float(f64),
    Str(String),
    StrList(Vec<String>),
}

impl Literal {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Python `str()` of the value, as `print` would show it.
    pub fn to_py_str(&self) -> String {
        match self {
            Literal::None => "None".to_string(),
            Literal::Int(i) => i.to_string(),
            Literal::Float(f) => py_float_repr(*f),
            Literal::Str(s) => s.clone(),
            Literal::StrList(items) => {
                let inner: Vec<String> = items.iter().map(|s| py_str_repr(s)).collect();
                format!("[{}]", inner.join(", "))
            }
        }
    }
}

/// Python's `repr(float)`: shortest round-trip digits, scientific notation
/// outside `1e-4 <= |x| < 1e16`.
pub fn py_float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x == 0.0 {
        return format!("{sign}0.0");
    }
    let sci = format!("{:e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("LowerExp always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if (-4..16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                format!("{sign}{digits}{}.0", "0".repeat(int_len - digits.len()))
            } else {
                format!("{sign}{}.{}", &digits[..int_len], &digits[int_len..])
            }
        } else {
            format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
        }
    } else {
        let mantissa = if digits.len() == 1 {
            digits
        } else {
            format!("{}.{}", &digits[..1], &digits[1..])
        };
        let exp_sign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{mantissa}e{exp_sign}{:02}", exp.abs())
    }
}

/// Python's `repr(str)`.
pub fn py_str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticCall {
    pub function: String,
    /// Arguments in source order, positional ones mapped to parameter names.
    pub arguments: Vec<(String, Literal)>,
    pub bound_name: Option<String>,
}

impl StaticCall {
    /// Value of a parameter: the supplied argument, else the declared default.
    pub fn argument<'a>(&'a self, tool: &'a ToolDescriptor, name: &str) -> Option<&'a Literal> {
        self.arguments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .or_else(|| {
                tool.parameters
                    .iter()
                    .find(|p| p.name == name)
                    .and_then(|p| p.default.as_ref())
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PrintArg {
    Literal(Literal),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Statement {
    Call(StaticCall),
    Print(Vec<PrintArg>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("UnsupportedCode: {reason}: {statement}")]
pub struct UnsupportedCode {
    pub statement: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Str(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Assign,
    Minus,
    Other(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(n) => write!(f, "{n}"),
            Tok::Str(s) => write!(f, "{}", py_str_repr(s)),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Float(x) => write!(f, "{}", py_float_repr(*x)),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
            Tok::LBracket => f.write_str("["),
            Tok::RBracket => f.write_str("]"),
            Tok::Comma => f.write_str(","),
            Tok::Assign => f.write_str("="),
            Tok::Minus => f.write_str("-"),
            Tok::Other(c) => write!(f, "{c}"),
        }
    }
}

struct RawStatement {
    text: String,
    tokens: Vec<Tok>,
    indented: bool,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn string(&mut self, quote: char) -> Result<String, String> {
        if self.src[self.pos..].starts_with(&format!("{quote}{quote}")) {
            return Err("triple-quoted strings are not supported".into());
        }
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err("unterminated string literal".into()),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('0') => out.push('\0'),
                    Some('\\') => out.push('\\'),
                    Some('\'') => out.push('\''),
                    Some('"') => out.push('"'),
                    Some('x') => out.push(self.hex_escape(2)?),
                    Some('u') => out.push(self.hex_escape(4)?),
                    Some('\n') => {}
                    // Python keeps unknown escapes verbatim.
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                    None => return Err("unterminated string literal".into()),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn hex_escape(&mut self, len: usize) -> Result<char, String> {
        let digits = self.src.get(self.pos..self.pos + len).ok_or("truncated escape")?;
        let code = u32::from_str_radix(digits, 16).map_err(|_| "bad escape")?;
        self.pos += len;
        char::from_u32(code).ok_or_else(|| "bad escape".to_string())
    }

    fn number(&mut self) -> Result<Tok, String> {
        let start = self.pos;
        let mut is_float = false;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' => {}
                '.' => is_float = true,
                'e' | 'E' => {
                    is_float = true;
                    self.bump();
                    if matches!(self.peek(), Some('+' | '-')) {
                        self.bump();
                    }
                    continue;
                }
                c if c.is_alphanumeric() || c == '_' => return Err("unsupported numeric literal".into()),
                _ => break,
            }
            self.bump();
        }
        let text = &self.src[start..self.pos];
        if is_float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| format!("bad float literal {text}"))
        } else {
            if text.len() > 1 && text.starts_with('0') {
                return Err("unsupported numeric literal".into());
            }
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| format!("bad integer literal {text}"))
        }
    }

    /// Splits the source into logical lines (newlines inside brackets join lines).
    fn statements(mut self) -> Result<Vec<RawStatement>, UnsupportedCode> {
        let mut out = Vec::new();
        let mut tokens = Vec::new();
        let mut depth: i32 = 0;
        let mut start: Option<usize> = None;
        let mut line_start = 0;
        let mut indented = false;
        let finish = |tokens: &mut Vec<Tok>,
                      start: &mut Option<usize>,
                      end: usize,
                      indented: bool,
                      out: &mut Vec<RawStatement>,
                      src: &str| {
            if let Some(s) = start.take() {
                out.push(RawStatement {
                    text: src[s..end].trim().to_string(),
                    tokens: std::mem::take(tokens),
                    indented,
                });
            }
        };
        while let Some(c) = self.peek() {
            let here = self.pos;
            match c {
                '\n' => {
                    self.bump();
                    if depth == 0 {
                        finish(&mut tokens, &mut start, here, indented, &mut out, self.src);
                        line_start = self.pos;
                    }
                    continue;
                }
                ' ' | '\t' | '\r' => {
                    self.bump();
                    continue;
                }
                '#' => {
                    while !matches!(self.peek(), None | Some('\n')) {
                        self.bump();
                    }
                    continue;
                }
                _ => {}
            }
            if start.is_none() {
                start = Some(here);
                indented = here > line_start;
            }
            let src = self.src;
            let stmt_start = start.unwrap_or(here);
            let fail = |reason: String| UnsupportedCode {
                statement: src[stmt_start..].lines().next().unwrap_or("").trim().to_string(),
                reason,
            };
            let tok = match c {
                '\'' | '"' => {
                    self.bump();
                    self.string(c).map(Tok::Str).map_err(fail)?
                }
                '0'..='9' | '.' if c != '.' || self.src[here + 1..].starts_with(|d: char| d.is_ascii_digit()) => {
                    self.number().map_err(fail)?
                }
                c if c.is_alphabetic() || c == '_' => {
                    while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                        self.bump();
                    }
                    Tok::Name(self.src[here..self.pos].to_string())
                }
                _ => {
                    self.bump();
                    match c {
                        '(' => {
                            depth += 1;
                            Tok::LParen
                        }
                        ')' => {
                            depth -= 1;
                            Tok::RParen
                        }
                        '[' => {
                            depth += 1;
                            Tok::LBracket
                        }
                        ']' => {
                            depth -= 1;
                            Tok::RBracket
                        }
                        ',' => Tok::Comma,
                        '=' => Tok::Assign,
                        '-' => Tok::Minus,
                        other => Tok::Other(other),
                    }
                }
            };
            tokens.push(tok);
        }
        if depth != 0 {
            return Err(UnsupportedCode {
                statement: start.map(|s| self.src[s..].trim().to_string()).unwrap_or_default(),
                reason: "unbalanced brackets".into(),
            });
        }
        let end = self.src.len();
        finish(&mut tokens, &mut start, end, indented, &mut out, self.src);
        Ok(out)
    }
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
}

/// Positional and keyword arguments of one call.
type Arguments = (Vec<PrintArg>, Vec<(String, Literal)>);

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: &Tok) -> Result<(), String> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(format!("expected `{tok}`, found `{t}`")),
            None => Err(format!("expected `{tok}`")),
        }
    }

    fn literal(&mut self) -> Result<Literal, String> {
        match self.next() {
            Some(Tok::Str(s)) => {
                if matches!(self.peek(), Some(Tok::Str(_))) {
                    return Err("implicit string concatenation".into());
                }
                Ok(Literal::Str(s.clone()))
            }
            Some(Tok::Int(i)) => Ok(Literal::Int(*i)),
            Some(Tok::Float(f)) => Ok(Literal::Float(*f)),
            Some(Tok::Minus) => match self.next() {
                Some(Tok::Int(i)) => Ok(Literal::Int(-i)),
                Some(Tok::Float(f)) => Ok(Literal::Float(-f)),
                _ => Err("unary minus applies only to numbers".into()),
            },
            Some(Tok::Name(n)) if n == "None" => Ok(Literal::None),
            Some(Tok::LBracket) => {
                let mut items = Vec::new();
                loop {
                    match self.next() {
                        Some(Tok::RBracket) => break,
                        Some(Tok::Str(s)) => {
                            items.push(s.clone());
                            match self.next() {
                                Some(Tok::Comma) => {}
                                Some(Tok::RBracket) => break,
                                _ => return Err("malformed list literal".into()),
                            }
                        }
                        _ => return Err("lists may contain only string literals".into()),
                    }
                }
                Ok(Literal::StrList(items))
            }
            Some(Tok::Name(n)) => Err(format!("argument `{n}` is not a literal")),
            Some(t) => Err(format!("unexpected `{t}`")),
            None => Err("unexpected end of statement".into()),
        }
    }

    /// Parses `(arg, ..., kw=arg, ...)` after the callee name.
    fn arguments(&mut self, allow_names: bool) -> Result<Arguments, String> {
        self.expect(&Tok::LParen)?;
        let mut positional = Vec::new();
        let mut keywords: Vec<(String, Literal)> = Vec::new();
        loop {
            if matches!(self.peek(), Some(Tok::RParen)) {
                self.next();
                break;
            }
            let is_keyword = matches!(
                (self.tokens.get(self.pos), self.tokens.get(self.pos + 1)),
                (Some(Tok::Name(_)), Some(Tok::Assign))
            );
            if is_keyword {
                let Some(Tok::Name(name)) = self.next() else {
                    unreachable!()
                };
                self.next();
                if keywords.iter().any(|(k, _)| k == name) {
                    return Err(format!("keyword argument `{name}` repeated"));
                }
                keywords.push((name.clone(), self.literal()?));
            } else {
                if !keywords.is_empty() {
                    return Err("positional argument follows keyword argument".into());
                }
                match self.peek() {
                    Some(Tok::Name(n)) if allow_names && n != "None" => {
                        self.next();
                        positional.push(PrintArg::Name(n.clone()));
                    }
                    _ => positional.push(PrintArg::Literal(self.literal()?)),
                }
            }
            match self.next() {
                Some(Tok::Comma) => {}
                Some(Tok::RParen) => break,
                Some(t) => return Err(format!("unexpected `{t}` in argument list")),
                None => return Err("unterminated argument list".into()),
            }
        }
        Ok((positional, keywords))
    }

    fn finished(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("unexpected `{t}` after call")),
        }
    }
}

fn bind_call(
    tool: &ToolDescriptor,
    positional: Vec<PrintArg>,
    keywords: Vec<(String, Literal)>,
    bound_name: Option<String>,
) -> Result<StaticCall, String> {
    if positional.len() > tool.parameters.len() {
        return Err(format!(
            "{}() takes {} arguments but {} were given",
            tool.name,
            tool.parameters.len(),
            positional.len()
        ));
    }
    let mut arguments = Vec::new();
    for (param, arg) in tool.parameters.iter().zip(positional) {
        let PrintArg::Literal(value) = arg else {
            unreachable!("names are rejected for tool calls")
        };
        arguments.push((param.name.clone(), value));
    }
    for (name, value) in keywords {
        if !tool.parameters.iter().any(|p| p.name == name) {
            return Err(format!("{}() got an unexpected keyword argument '{name}'", tool.name));
        }
        if arguments.iter().any(|(n, _)| *n == name) {
            return Err(format!("{}() got multiple values for argument '{name}'", tool.name));
        }
        arguments.push((name, value));
    }
    for param in &tool.parameters {
        let value = arguments.iter().find(|(n, _)| *n == param.name).map(|(_, v)| v);
        match (value, param.is_optional()) {
            (None, false) => return Err(format!("{}() missing required argument '{}'", tool.name, param.name)),
            (None, true) => {}
            (Some(v), optional) => {
                let ok = match (param.ty, v) {
                    (ParamType::Path | ParamType::Text, Literal::Str(_)) => true,
                    (ParamType::PathList, Literal::StrList(_)) => true,
                    (_, Literal::None) => optional,
                    _ => false,
                };
                if !ok {
                    return Err(format!(
                        "argument '{}' of {}() has an unsupported type",
                        param.name, tool.name
                    ));
                }
            }
        }
    }
    Ok(StaticCall {
        function: tool.name.clone(),
        arguments,
        bound_name,
    })
}

fn parse_statement(tokens: &[Tok], registry: &ToolRegistry, bound: &[String]) -> Result<Statement, String> {
    let mut parser = Parser { tokens, pos: 0 };
    let (bound_name, callee) = match (tokens.first(), tokens.get(1), tokens.get(2)) {
        (Some(Tok::Name(target)), Some(Tok::Assign), Some(Tok::Name(callee))) => {
            parser.pos = 3;
            (Some(target.clone()), callee.clone())
        }
        (Some(Tok::Name(callee)), Some(Tok::LParen), _) => {
            parser.pos = 1;
            (None, callee.clone())
        }
        _ => return Err("only calls, assignments of calls and print are supported".into()),
    };

    if callee == "print" {
        if bound_name.is_some() {
            return Err("assigning the result of print is not supported".into());
        }
        let (args, keywords) = parser.arguments(true)?;
        parser.finished()?;
        if !keywords.is_empty() {
            return Err("print keyword arguments are not supported".into());
        }
        for arg in &args {
            if let PrintArg::Name(name) = arg {
                if !bound.contains(name) {
                    return Err(format!("name '{name}' is not defined"));
                }
            }
        }
        return Ok(Statement::Print(args));
    }

    let tool = registry
        .get(&callee)
        .ok_or_else(|| format!("`{callee}` is not a registered tool"))?;
    let (positional, keywords) = parser.arguments(false)?;
    parser.finished()?;
    if let Some(name) = &bound_name {
        if name == "print" || registry.contains(name) || name == "None" {
            return Err(format!("cannot rebind `{name}`"));
        }
    }
    bind_call(tool, positional, keywords, bound_name).map(Statement::Call)
}

/// Interprets `code` against the registry without executing anything.
pub fn static_interpret(code: &CodeBlock, registry: &ToolRegistry) -> Result<Vec<Statement>, UnsupportedCode> {
    let raw = Lexer {
        src: &code.source,
        pos: 0,
    }
    .statements()?;
    let mut bound: Vec<String> = Vec::new();
    let mut statements = Vec::with_capacity(raw.len());
    for stmt in raw {
        let fail = |reason: String| UnsupportedCode {
            statement: stmt.text.clone(),
            reason,
        };
        if stmt.indented {
            return Err(fail("unexpected indent".into()));
        }
        let parsed = parse_statement(&stmt.tokens, registry, &bound).map_err(fail)?;
        if let Statement::Call(StaticCall {
            bound_name: Some(name), ..
        }) = &parsed
        {
            bound.push(name.clone());
        }
        statements.push(parsed);
    }
    Ok(statements)
}
