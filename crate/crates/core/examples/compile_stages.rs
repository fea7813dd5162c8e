//! Print every lowering stage of a program and the final variable classes.
//!
//! `cargo run --example compile_stages [corpus-name]`

use autobatch::compiler::{compile, CompileOptions, VarClass};
use autobatch::workloads::corpus_program;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fibonacci".into());
    let p = corpus_program(&name).unwrap_or_else(|| panic!("no corpus program `{name}`"));
    let prog = p.program();
    println!("# stage: callgraph\n{prog}");
    let compiled = compile(&prog, &p.registry, CompileOptions::default()).expect("compiles");
    for stage in &compiled.stages {
        println!("# stage: {}\n{}", stage.name, stage.text);
    }
    for class in [VarClass::Stacked, VarClass::Registerized, VarClass::Temporary] {
        println!("{class}: {:?}", compiled.vars_in(class));
    }
    println!("pop/push pairs cancelled: {}", compiled.cancelled);
}
