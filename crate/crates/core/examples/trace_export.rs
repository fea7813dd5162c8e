//! Export a schedule trace as JSON and CSV, read it back and compare engines.

use autobatch::engine::{execute, Engine, RunConfig};
use autobatch::metrics::{compare, export_trace, import_trace};
use autobatch::runtime::{BatchArray, KernelRegistry};
use autobatch::workloads::corpus_program;

fn main() {
    let prog = corpus_program("fibonacci").unwrap().program();
    let registry = KernelRegistry::with_builtins();
    let inputs = [BatchArray::from_i64(vec![5, 8, 10, 12])];
    let dir = std::env::temp_dir().join("autobatch-traces");
    std::fs::create_dir_all(&dir).unwrap();
    let mut traces = Vec::new();
    for engine in Engine::ALL {
        let (_, trace) = execute(&prog, &registry, &inputs, &RunConfig::with_engine(engine)).unwrap();
        let path = dir.join(format!("{engine}.json"));
        export_trace(&trace, &path).unwrap();
        std::fs::write(dir.join(format!("{engine}.csv")), trace.to_csv()).unwrap();
        let back = import_trace(&path).unwrap();
        assert_eq!(back, trace);
        println!("{engine}: {} steps, stacks {:?} -> {}", trace.len(), trace.stacks.keys().collect::<Vec<_>>(), path.display());
        traces.push(trace);
    }
    println!("{}", compare(&traces[0], &traces[1], &["add"]).unwrap());
}
