//! Line-oriented textual form of both IRs.
//!
//! ```text
//! program entry fib
//! function fib(n) -> $ret
//! block 0:
//!   c = prim le n 1
//!   branch c 1 2
//! ...
//! ```
//!
//! Flat programs start with `flat inputs(a, b) output y entry 0` and use
//! `push y = f a`, `pop x`, `update y = f a` and `pushjump <jump_to> <return_to>`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{
    Block, CallGraphProgram, FlatBlock, FlatOp, FlatProgram, FlatTerminator, Function, Literal, Op, Operand,
    PrimitiveId, Terminator, Var,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Either IR, as returned by [`parse_ir`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrProgram {
    CallGraph(CallGraphProgram),
    Flat(FlatProgram),
}

impl fmt::Display for IrProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrProgram::CallGraph(p) => p.fmt(f),
            IrProgram::Flat(p) => p.fmt(f),
        }
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Operand]) -> fmt::Result {
    for a in args {
        write!(f, " {a}")?;
    }
    Ok(())
}

impl fmt::Display for CallGraphProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let entry = self.functions.get(self.entry).map_or("?", |g| g.name.as_str());
        writeln!(f, "program entry {entry}")?;
        for func in &self.functions {
            writeln!(f, "function {}({}) -> {}", func.name, join(&func.params), func.output)?;
            for (bi, b) in func.blocks.iter().enumerate() {
                writeln!(f, "block {bi}:")?;
                for op in &b.ops {
                    match op {
                        Op::Primitive { out, prim, .. } => write!(f, "  {out} = prim {prim}")?,
                        Op::Call { out, callee, .. } => {
                            let name = self.functions.get(*callee).map_or("?", |g| g.name.as_str());
                            write!(f, "  {out} = call {name}")?
                        }
                    }
                    write_args(f, op.args())?;
                    writeln!(f)?;
                }
                match &b.terminator {
                    Terminator::Jump(t) => writeln!(f, "  jump {t}")?,
                    Terminator::Branch { cond, if_true, if_false } => writeln!(f, "  branch {cond} {if_true} {if_false}")?,
                    Terminator::Return => writeln!(f, "  return")?,
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FlatProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "flat inputs({}) output {} entry {}", join(&self.inputs), self.output, self.entry)?;
        for (bi, b) in self.blocks.iter().enumerate() {
            writeln!(f, "block {bi}:")?;
            for op in &b.ops {
                match op {
                    FlatOp::Push { out, prim, args } => {
                        write!(f, "  push {out} = {prim}")?;
                        write_args(f, args)?;
                    }
                    FlatOp::Update { out, prim, args } => {
                        write!(f, "  update {out} = {prim}")?;
                        write_args(f, args)?;
                    }
                    FlatOp::Pop(v) => write!(f, "  pop {v}")?,
                }
                writeln!(f)?;
            }
            match &b.terminator {
                FlatTerminator::Jump(t) => writeln!(f, "  jump {t}")?,
                FlatTerminator::Branch { cond, if_true, if_false } => writeln!(f, "  branch {cond} {if_true} {if_false}")?,
                FlatTerminator::PushJump { jump_to, return_to } => writeln!(f, "  pushjump {jump_to} {return_to}")?,
                FlatTerminator::Return => writeln!(f, "  return")?,
            }
        }
        Ok(())
    }
}

/// Parse a literal token as printed by `Literal`'s `Display`.
pub(crate) fn parse_literal(tok: &str) -> Option<Literal> {
    match tok {
        "true" => return Some(Literal::Bool(true)),
        "false" => return Some(Literal::Bool(false)),
        "inf" => return Some(Literal::Float(f64::INFINITY)),
        "-inf" => return Some(Literal::Float(f64::NEG_INFINITY)),
        _ => {}
    }
    if let Some(hex) = tok.strip_prefix("nan(0x").and_then(|r| r.strip_suffix(')')) {
        let bits = u64::from_str_radix(hex, 16).ok()?;
        let v = f64::from_bits(bits);
        return v.is_nan().then_some(Literal::Float(v));
    }
    let first = tok.chars().next()?;
    if !(first.is_ascii_digit() || first == '-' || first == '+') {
        return None;
    }
    if tok.contains(['.', 'e', 'E']) {
        tok.parse::<f64>().ok().filter(|v| v.is_finite()).map(Literal::Float)
    } else {
        tok.parse::<i64>().ok().map(Literal::Int)
    }
}

fn is_ident(tok: &str) -> bool {
    let mut chars = tok.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$' || c == '.')
        && tok != "true"
        && tok != "false"
        && tok != "inf"
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    col: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '$' | '.' | '-' | '+')
}

fn tokenize(line: &str) -> Vec<Tok> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            i += 2;
        } else if is_word_char(c) {
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if word == "nan" && chars.get(i) == Some(&'(') {
                while i < chars.len() && chars[i] != ')' {
                    i += 1;
                }
                i = (i + 1).min(chars.len());
            }
        } else {
            i += 1;
        }
        toks.push(Tok { text: chars[start..i].iter().collect(), col: start + 1 });
    }
    toks
}

struct Line {
    number: usize,
    toks: Vec<Tok>,
    end_col: usize,
}

struct Cursor<'a> {
    line: &'a Line,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a Line) -> Self {
        Cursor { line, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let column = self.line.toks.get(self.pos).map_or(self.line.end_col, |t| t.col);
        ParseError { line: self.line.number, column, message: message.into() }
    }

    fn peek(&self) -> Option<&'a str> {
        self.line.toks.get(self.pos).map(|t| t.text.as_str())
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ParseError> {
        let t = self.peek().ok_or_else(|| self.err(format!("expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, text: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == text => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{text}`"))),
        }
    }

    fn ident(&mut self) -> Result<Var, ParseError> {
        match self.peek() {
            Some(t) if is_ident(t) => {
                self.pos += 1;
                Ok(Var::new(t))
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        match self.peek().and_then(|t| t.parse::<usize>().ok()) {
            Some(n) => {
                self.pos += 1;
                Ok(n)
            }
            None => Err(self.err("expected block index")),
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        let t = self.peek().ok_or_else(|| self.err("expected operand"))?;
        let op = if is_ident(t) {
            Operand::Var(Var::new(t))
        } else if let Some(l) = parse_literal(t) {
            Operand::Lit(l)
        } else {
            return Err(self.err(format!("bad operand `{t}`")));
        };
        self.pos += 1;
        Ok(op)
    }

    fn rest_operands(&mut self) -> Result<Vec<Operand>, ParseError> {
        let mut out = Vec::new();
        while self.peek().is_some() {
            out.push(self.operand()?);
        }
        Ok(out)
    }

    fn param_list(&mut self) -> Result<Vec<Var>, ParseError> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.peek() == Some(")") {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            match self.next("`,` or `)`")? {
                "," => continue,
                ")" => return Ok(out),
                _ => {
                    self.pos -= 1;
                    return Err(self.err("expected `,` or `)`"));
                }
            }
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected `{t}`"))),
        }
    }
}

fn lines(text: &str) -> Vec<Line> {
    text.lines()
        .enumerate()
        .map(|(i, l)| Line { number: i + 1, toks: tokenize(l), end_col: l.chars().count() + 1 })
        .filter(|l| !l.toks.is_empty())
        .collect()
}

fn eof(text: &str, message: &str) -> ParseError {
    ParseError { line: text.lines().count().max(1), column: 1, message: message.into() }
}

/// Parse a `block N:` header, requiring blocks to be numbered in order.
fn block_header(line: &Line, expected: usize) -> Result<Option<()>, ParseError> {
    let mut c = Cursor::new(line);
    if c.peek() != Some("block") {
        return Ok(None);
    }
    c.pos += 1;
    let n = c.index()?;
    if n != expected {
        c.pos -= 1;
        return Err(c.err(format!("expected block {expected}, found {n}")));
    }
    c.expect(":")?;
    c.end()?;
    Ok(Some(()))
}

/// Parse either terminator form shared by both IRs; `None` if the line is an op.
fn shared_terminator(c: &mut Cursor<'_>) -> Result<Option<Terminator>, ParseError> {
    let t = match c.peek() {
        Some("jump") => {
            c.pos += 1;
            Terminator::Jump(c.index()?)
        }
        Some("branch") => {
            c.pos += 1;
            let cond = c.ident()?;
            let if_true = c.index()?;
            let if_false = c.index()?;
            Terminator::Branch { cond, if_true, if_false }
        }
        Some("return") => {
            c.pos += 1;
            Terminator::Return
        }
        _ => return Ok(None),
    };
    c.end()?;
    Ok(Some(t))
}

/// Parse the call-graph form.
pub fn parse_callgraph(text: &str) -> Result<CallGraphProgram, ParseError> {
    let lines = lines(text);
    let mut it = lines.iter().peekable();
    let header = it.next().ok_or_else(|| eof(text, "empty program"))?;
    let mut c = Cursor::new(header);
    c.expect("program")?;
    c.expect("entry")?;
    let entry_tok = c.ident()?;
    c.end()?;

    struct Pending {
        out: Var,
        callee: String,
        args: Vec<Operand>,
        line: usize,
        col: usize,
    }
    let mut functions: Vec<Function> = Vec::new();
    let mut pending_calls: Vec<(usize, usize, usize, Pending)> = Vec::new();

    while let Some(line) = it.next() {
        let mut c = Cursor::new(line);
        c.expect("function")?;
        let name = c.ident()?;
        let params = c.param_list()?;
        c.expect("->")?;
        let output = c.ident()?;
        c.end()?;
        let fi = functions.len();
        let mut blocks = Vec::new();
        while let Some(line) = it.peek() {
            if block_header(line, blocks.len())?.is_none() {
                break;
            }
            it.next();
            let mut ops = Vec::new();
            let terminator = loop {
                let line = it.next().ok_or_else(|| eof(text, "block without terminator"))?;
                let mut c = Cursor::new(line);
                if let Some(t) = shared_terminator(&mut c)? {
                    break t;
                }
                if c.line.toks.get(1).map(|t| t.text.as_str()) != Some("=") {
                    let first = c.peek().unwrap_or_default();
                    return Err(c.err(format!("unknown op or terminator `{first}`")));
                }
                let out = c.ident()?;
                c.expect("=")?;
                match c.next("`prim` or `call`")? {
                    "prim" => {
                        let prim = c.ident()?;
                        let args = c.rest_operands()?;
                        ops.push(Op::Primitive { out, prim: PrimitiveId(prim.0), args });
                    }
                    "call" => {
                        let col = c.line.toks[c.pos.min(c.line.toks.len() - 1)].col;
                        let callee = c.ident()?.0;
                        let args = c.rest_operands()?;
                        pending_calls.push((
                            fi,
                            blocks.len(),
                            ops.len(),
                            Pending { out: out.clone(), callee, args: args.clone(), line: line.number, col },
                        ));
                        ops.push(Op::Call { out, callee: usize::MAX, args });
                    }
                    _ => {
                        c.pos -= 1;
                        return Err(c.err("expected `prim`, `call` or a terminator"));
                    }
                }
            };
            blocks.push(Block { ops, terminator });
        }
        functions.push(Function { name: name.0, params, blocks, output });
    }

    let index: BTreeMap<String, usize> = functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
    let mut resolved = Vec::with_capacity(pending_calls.len());
    for (fi, bi, oi, p) in pending_calls {
        let callee = *index.get(p.callee.as_str()).ok_or_else(|| ParseError {
            line: p.line,
            column: p.col,
            message: format!("unknown function `{}`", p.callee),
        })?;
        resolved.push((fi, bi, oi, Op::Call { out: p.out, callee, args: p.args }));
    }
    for (fi, bi, oi, op) in resolved {
        functions[fi].blocks[bi].ops[oi] = op;
    }
    let entry = *index.get(entry_tok.as_str()).ok_or_else(|| ParseError {
        line: header.number,
        column: header.toks[2].col,
        message: format!("unknown entry function `{entry_tok}`"),
    })?;
    Ok(CallGraphProgram { functions, entry })
}

/// Parse the flat form.
pub fn parse_flat(text: &str) -> Result<FlatProgram, ParseError> {
    let lines = lines(text);
    let mut it = lines.iter().peekable();
    let header = it.next().ok_or_else(|| eof(text, "empty program"))?;
    let mut c = Cursor::new(header);
    c.expect("flat")?;
    c.expect("inputs")?;
    let inputs = c.param_list()?;
    c.expect("output")?;
    let output = c.ident()?;
    c.expect("entry")?;
    let entry = c.index()?;
    c.end()?;

    let mut blocks = Vec::new();
    while let Some(line) = it.next() {
        if block_header(line, blocks.len())?.is_none() {
            return Err(Cursor::new(line).err(format!("expected `block {}:`", blocks.len())));
        }
        let mut ops = Vec::new();
        let terminator = loop {
            let line = it.next().ok_or_else(|| eof(text, "block without terminator"))?;
            let mut c = Cursor::new(line);
            if c.peek() == Some("pushjump") {
                c.pos += 1;
                let jump_to = c.index()?;
                let return_to = c.index()?;
                c.end()?;
                break FlatTerminator::PushJump { jump_to, return_to };
            }
            if let Some(t) = shared_terminator(&mut c)? {
                break match t {
                    Terminator::Jump(t) => FlatTerminator::Jump(t),
                    Terminator::Branch { cond, if_true, if_false } => FlatTerminator::Branch { cond, if_true, if_false },
                    Terminator::Return => FlatTerminator::Return,
                };
            }
            match c.next("op or terminator")? {
                "pop" => {
                    let v = c.ident()?;
                    c.end()?;
                    ops.push(FlatOp::Pop(v));
                }
                kw @ ("push" | "update") => {
                    let out = c.ident()?;
                    c.expect("=")?;
                    let prim = PrimitiveId(c.ident()?.0);
                    let args = c.rest_operands()?;
                    ops.push(if kw == "push" {
                        FlatOp::Push { out, prim, args }
                    } else {
                        FlatOp::Update { out, prim, args }
                    });
                }
                other => {
                    c.pos -= 1;
                    return Err(c.err(format!("unknown op or terminator `{other}`")));
                }
            }
        };
        blocks.push(FlatBlock { ops, terminator });
    }
    Ok(FlatProgram { inputs, output, blocks, entry })
}

/// Parse either form, chosen by the header keyword.
pub fn parse_ir(text: &str) -> Result<IrProgram, ParseError> {
    let first = lines(text).into_iter().next().ok_or_else(|| eof(text, "empty program"))?;
    match first.toks[0].text.as_str() {
        "program" => parse_callgraph(text).map(IrProgram::CallGraph),
        "flat" => parse_flat(text).map(IrProgram::Flat),
        other => Err(ParseError {
            line: first.number,
            column: first.toks[0].col,
            message: format!("expected `program` or `flat`, found `{other}`"),
        }),
    }
}
