//! A small imperative source language and its lowering to the call-graph IR.
//!
//! ```text
//! def fibonacci(n) {
//!   cond = n <= 1;
//!   if (cond) { return 1; } else { ... }
//! }
//! ```
//!
//! Calls resolve to a function of the module when one has that name, and to
//! a registered kernel otherwise.

use std::fmt;

use thiserror::Error;

use crate::runtime::Literal;

mod eval;
mod lower;
mod parse;

pub use eval::{evaluate, EvalError};
pub use lower::{lower_to_cfg, RETURN_VAR};
pub use parse::parse_source;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {message}")]
pub struct FrontendError {
    pub pos: Pos,
    pub message: String,
}

impl FrontendError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        FrontendError { pos, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    And,
    Or,
}

impl BinOp {
    /// Kernel name and whether operands are swapped. `None` for the
    /// short-circuit operators.
    pub fn kernel(self) -> Option<(&'static str, bool)> {
        Some(match self {
            BinOp::Add => ("add", false),
            BinOp::Sub => ("sub", false),
            BinOp::Mul => ("mul", false),
            BinOp::Div => ("div", false),
            BinOp::Le => ("le", false),
            BinOp::Lt => ("lt", false),
            BinOp::Ge => ("le", true),
            BinOp::Gt => ("lt", true),
            BinOp::Eq => ("eq", false),
            BinOp::And | BinOp::Or => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

impl UnOp {
    pub fn kernel(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Not => "not",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Literal, Pos),
    Var(String, Pos),
    Unary { op: UnOp, arg: Box<Expr>, pos: Pos },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, pos: Pos },
    Call { name: String, args: Vec<Expr>, pos: Pos },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign { target: String, expr: Expr, pos: Pos },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>>, pos: Pos },
    While { cond: Expr, body: Vec<Stmt>, pos: Pos },
    Return { expr: Expr, pos: Pos },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceModule {
    pub functions: Vec<FunctionDef>,
}

impl SourceModule {
    pub fn function(&self, name: &str) -> Option<(usize, &FunctionDef)> {
        self.functions.iter().enumerate().find(|(_, f)| f.name == name)
    }
}
