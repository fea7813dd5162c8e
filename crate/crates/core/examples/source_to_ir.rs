//! Parse a program in the source language, lower it to the call-graph IR,
//! print the textual form and parse that back.

use autobatch::frontend::{evaluate, lower_to_cfg, parse_source};
use autobatch::ir::{parse_ir, IrProgram};
use autobatch::runtime::{KernelRegistry, Value};

const SOURCE: &str = "
def gcd(a, b) {
  if (b == 0) { return a; }
  if (a < b) { return gcd(b, a); }
  return gcd(a - b, b);
}
";

fn main() {
    let registry = KernelRegistry::with_builtins();
    let module = parse_source(SOURCE).expect("parses");
    let prog = lower_to_cfg(&module, &registry).expect("lowers");
    let text = prog.to_string();
    println!("{text}");
    let IrProgram::CallGraph(back) = parse_ir(&text).expect("round trips") else { unreachable!() };
    assert_eq!(back, prog);
    let g = evaluate(&module, &registry, "gcd", &[Value::I64(84), Value::I64(36)], 10_000).expect("evaluates");
    println!("gcd(84, 36) = {g}");
}
