use super::{BinOp, Expr, FrontendError, FunctionDef, Pos, SourceModule, Stmt, UnOp};
use crate::runtime::Literal;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 15] = ["<=", ">=", "==", "(", ")", "{", "}", ",", ";", "=", "+", "-", "*", "/", "<"];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, FrontendError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos { line: li + 1, column: i + 1 };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                let mut float = false;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    float |= chars[i] == '.';
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        float = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let tok = if float {
                    s.parse::<f64>().map(Tok::Float).ok()
                } else {
                    s.parse::<i64>().map(Tok::Int).ok()
                };
                out.push((tok.ok_or_else(|| FrontendError::new(pos, format!("bad number `{s}`")))?, pos));
                continue;
            }
            let sym = SYMBOLS.iter().find(|s| {
                let sc: Vec<char> = s.chars().collect();
                chars[i..].starts_with(&sc)
            });
            match sym {
                Some(s) => {
                    i += s.len();
                    out.push((Tok::Sym(s), pos));
                }
                None if c == '>' => {
                    i += 1;
                    out.push((Tok::Sym(">"), pos));
                }
                None => return Err(FrontendError::new(pos, format!("unexpected character `{c}`"))),
            }
        }
    }
    let end = Pos { line: text.lines().count().max(1), column: text.lines().last().map_or(1, |l| l.chars().count() + 1) };
    out.push((Tok::Eof, end));
    Ok(out)
}

const KEYWORDS: [&str; 10] = ["def", "if", "else", "while", "return", "and", "or", "not", "true", "false"];

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, FrontendError> {
        Err(FrontendError::new(self.pos(), message))
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Float(v) => format!("`{v}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn sym(&mut self, s: &str) -> Result<Pos, FrontendError> {
        if self.is_sym(s) {
            Ok(self.bump().1)
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn kw(&mut self, k: &str) -> Result<Pos, FrontendError> {
        if self.is_kw(k) {
            Ok(self.bump().1)
        } else {
            self.err(format!("expected `{k}`, found {}", self.describe()))
        }
    }

    fn name(&mut self) -> Result<(String, Pos), FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let p = self.bump().1;
                Ok((s, p))
            }
            _ => self.err(format!("expected a name, found {}", self.describe())),
        }
    }

    fn module(&mut self) -> Result<SourceModule, FrontendError> {
        let mut functions = Vec::new();
        while *self.peek() != Tok::Eof {
            functions.push(self.function()?);
        }
        Ok(SourceModule { functions })
    }

    fn function(&mut self) -> Result<FunctionDef, FrontendError> {
        let pos = self.kw("def")?;
        let (name, _) = self.name()?;
        self.sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                params.push(self.name()?.0);
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.sym(")")?;
        let body = self.block()?;
        Ok(FunctionDef { name, params, body, pos })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        self.sym("{")?;
        let mut out = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unbalanced `{`: expected `}`");
            }
            out.push(self.stmt()?);
        }
        self.bump();
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        let pos = self.pos();
        if self.is_kw("if") {
            self.bump();
            self.sym("(")?;
            let cond = self.expr()?;
            self.sym(")")?;
            let then_body = self.block()?;
            let else_body = if self.is_kw("else") {
                self.bump();
                if self.is_kw("if") {
                    Some(vec![self.stmt()?])
                } else {
                    Some(self.block()?)
                }
            } else {
                None
            };
            return Ok(Stmt::If { cond, then_body, else_body, pos });
        }
        if self.is_kw("while") {
            self.bump();
            self.sym("(")?;
            let cond = self.expr()?;
            self.sym(")")?;
            let body = self.block()?;
            return Ok(Stmt::While { cond, body, pos });
        }
        if self.is_kw("return") {
            self.bump();
            let expr = self.expr()?;
            self.sym(";")?;
            return Ok(Stmt::Return { expr, pos });
        }
        let (target, _) = self.name()?;
        self.sym("=")?;
        let expr = self.expr()?;
        self.sym(";")?;
        Ok(Stmt::Assign { target, expr, pos })
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.and_expr()?;
        while self.is_kw("or") {
            let pos = self.bump().1;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary { op: BinOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.not_expr()?;
        while self.is_kw("and") {
            let pos = self.bump().1;
            let rhs = self.not_expr()?;
            lhs = Expr::Binary { op: BinOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, FrontendError> {
        if self.is_kw("not") {
            let pos = self.bump().1;
            let arg = self.not_expr()?;
            return Ok(Expr::Unary { op: UnOp::Not, arg: Box::new(arg), pos });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, FrontendError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym("==") => BinOp::Eq,
            _ => return Ok(lhs),
        };
        let pos = self.bump().1;
        let rhs = self.additive()?;
        Ok(Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos })
    }

    fn additive(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.bump().1;
            let rhs = self.term()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
    }

    fn term(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            let pos = self.bump().1;
            let rhs = self.unary()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        if self.is_sym("-") {
            let pos = self.bump().1;
            let arg = self.unary()?;
            return Ok(match arg {
                Expr::Lit(Literal::Int(v), _) => Expr::Lit(Literal::Int(v.wrapping_neg()), pos),
                Expr::Lit(Literal::Float(v), _) => Expr::Lit(Literal::Float(-v), pos),
                other => Expr::Unary { op: UnOp::Neg, arg: Box::new(other), pos },
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Lit(Literal::Int(v), pos))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::Lit(Literal::Float(v), pos))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Lit(Literal::Bool(s == "true"), pos))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (name, pos) = self.name()?;
                if !self.is_sym("(") {
                    return Ok(Expr::Var(name, pos));
                }
                self.bump();
                let mut args = Vec::new();
                if !self.is_sym(")") {
                    loop {
                        args.push(self.expr()?);
                        if self.is_sym(",") {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.sym(")")?;
                Ok(Expr::Call { name, args, pos })
            }
            _ => self.err(format!("expected an expression, found {}", self.describe())),
        }
    }
}

pub fn parse_source(text: &str) -> Result<SourceModule, FrontendError> {
    let mut p = Parser { toks: lex(text)?, i: 0 };
    p.module()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let m = parse_source("def f(a, b) { return a + b * 2 <= 3 and not b == a; }").unwrap();
        let Stmt::Return { expr, .. } = &m.functions[0].body[0] else { panic!() };
        let Expr::Binary { op: BinOp::And, lhs, rhs, .. } = expr else { panic!("{expr:?}") };
        assert!(matches!(**lhs, Expr::Binary { op: BinOp::Le, .. }));
        assert!(matches!(**rhs, Expr::Unary { op: UnOp::Not, .. }));
    }

    #[test]
    fn negative_literals_fold() {
        let m = parse_source("def f() { return -2.5; }").unwrap();
        let Stmt::Return { expr, .. } = &m.functions[0].body[0] else { panic!() };
        assert!(matches!(expr, Expr::Lit(Literal::Float(v), _) if *v == -2.5));
    }

    #[test]
    fn unbalanced_brace() {
        let e = parse_source("def f(x) {\n  return x;\n").unwrap_err();
        assert!(e.message.contains("unbalanced"), "{e}");
    }

    #[test]
    fn positions_are_recorded() {
        let e = parse_source("def f(x) {\n  y = x +;\n}").unwrap_err();
        assert_eq!((e.pos.line, e.pos.column), (2, 10));
    }

    #[test]
    fn float_forms() {
        let m = parse_source("def f() { a = 1e3; b = 2.; c = .5; return 1E-2; }").unwrap();
        assert_eq!(m.functions[0].body.len(), 4);
    }
}
