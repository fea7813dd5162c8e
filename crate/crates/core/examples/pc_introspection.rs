//! Step the program-counter machine by hand and watch lanes at different
//! call depths share a block.

use autobatch::compiler::{compile, CompileOptions};
use autobatch::pc_vm::{init_machine, PcProgram, VmOptions};
use autobatch::runtime::{BatchArray, KernelRegistry, Kind};
use autobatch::workloads::corpus_program;

fn main() {
    let prog = corpus_program("fibonacci").unwrap().program();
    let registry = KernelRegistry::with_builtins();
    let compiled = compile(&prog, &registry, CompileOptions::default()).unwrap();
    let pc = PcProgram::from_compiled(&compiled, &registry, &[Kind::I64]).unwrap();
    let inputs = [BatchArray::from_i64(vec![2, 3, 5])];
    let mut m = init_machine(&pc, &inputs, VmOptions { debug: true, ..Default::default() }).unwrap();
    while let Some(block) = m.step(&pc).unwrap() {
        let depths = m.pc_depths();
        println!(
            "step {:>3} ran block {block}: next pcs {:?} depths {depths:?} n = {:?}",
            m.steps(),
            m.pc_tops(),
            m.var_top("fibonacci.n").map(|a| a.to_values()),
        );
        if m.steps() == 12 {
            for lane in 0..m.lanes() {
                println!("  lane {lane} return addresses {:?}", m.return_addresses(lane));
            }
        }
    }
    println!("output {:?}", m.output(&pc).as_i64().unwrap());
}
