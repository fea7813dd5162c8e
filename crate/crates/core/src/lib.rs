//! Autobatching for control-intensive recursive programs.
//!
//! A small source language is lowered to a control-flow-graph IR of
//! functions and blocks. That IR runs batched in two ways:
//!
//! * [`local_exec`] interprets it directly, masking lanes that sit at other
//!   blocks and recursing on the host stack for calls;
//! * [`compiler`] flattens it into a single block list with explicit
//!   per-variable stacks, which [`pc_vm`] runs with a stacked program
//!   counter so lanes at different recursion depths share block executions.
//!
//! [`workloads`] holds the program corpus and a NUTS-style sampler, and
//! [`metrics`] turns execution traces into batch-utilization numbers.

mod error;
pub mod check;
pub mod cli;
pub mod compiler;
pub mod engine;
pub mod frontend;
pub mod ir;
pub mod local_exec;
pub mod metrics;
pub mod pc_vm;
pub mod runtime;
pub mod workloads;

pub use error::ExecError;
