use thiserror::Error;

use crate::ir::Diagnostic;
use crate::runtime::KernelError;

fn list(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Failures shared by both batched engines and the scalar reference.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("malformed program: {}", list(.0))]
    Malformed(Vec<Diagnostic>),
    #[error("bad input: {0}")]
    Input(String),
    #[error("step limit of {limit} exceeded")]
    StepLimitExceeded { limit: u64 },
    #[error("host recursion deeper than {limit}")]
    HostRecursionLimit { limit: usize },
    #[error("stack overflow in lane {lane}, variable `{var}`, block {block}")]
    StackOverflow { lane: usize, var: String, block: usize },
    #[error("stack underflow in lane {lane}, variable `{var}`, block {block}")]
    StackUnderflow { lane: usize, var: String, block: usize },
    #[error("kernel fault: {0}")]
    Kernel(#[from] KernelError),
    #[error("debug check failed after block {block}: {message}")]
    DebugCheck { block: usize, message: String },
}

impl ExecError {
    pub fn is_stack_fault(&self) -> bool {
        matches!(self, ExecError::StackOverflow { .. } | ExecError::StackUnderflow { .. })
    }
}
