use autobatch::compiler::{cancel_pop_push, cancellable_pairs, compile, CompileOptions};
use autobatch::engine::{execute, Engine, RunConfig};
use autobatch::ir::{parse_ir, IrProgram};
use autobatch::local_exec::{run_scalar_reference, trace_local, LocalOptions, Selector};
use autobatch::metrics::{utilization, ScheduleTrace};
use autobatch::pc_vm::{init_machine, PcProgram, VmOptions};
use autobatch::runtime::{BatchArray, ExecMode, KernelRegistry, Kind};
use autobatch::workloads::{corpus, corpus_program, CorpusProgram};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn programs() -> Vec<CorpusProgram> {
    corpus()
}

fn batch(p: &CorpusProgram, seed: u64, z: usize) -> Vec<BatchArray> {
    p.random_inputs(&mut ChaCha8Rng::seed_from_u64(seed), z)
}

fn fib_batch() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0i64..12, 1..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pc_matches_scalar_reference(inputs in fib_batch(), mask in 0u8..16, gather in any::<bool>()) {
        let p = corpus_program("fibonacci").unwrap();
        let prog = p.program();
        let mode = if gather { ExecMode::Gather } else { ExecMode::Mask };
        let cfg = RunConfig { passes: CompileOptions::from_mask(mask), mode, ..Default::default() };
        let (out, _) = execute(&prog, &p.registry, &[BatchArray::from_i64(inputs.clone())], &cfg).unwrap();
        for (lane, n) in inputs.iter().enumerate() {
            let want = run_scalar_reference(&prog, &p.registry, prog.entry, &[autobatch::runtime::Value::I64(*n)], u64::MAX).unwrap();
            prop_assert!(out.value(lane).bit_eq(&want));
        }
    }

    #[test]
    fn engines_agree(which in 0usize..7, seed in any::<u64>(), z in 1usize..9) {
        let p = &programs()[which];
        let prog = p.program();
        let inputs = batch(p, seed, z);
        let (a, _) = execute(&prog, &p.registry, &inputs, &RunConfig::with_engine(Engine::Local)).unwrap();
        let (b, _) = execute(&prog, &p.registry, &inputs, &RunConfig::with_engine(Engine::Pc)).unwrap();
        prop_assert!(a.bit_eq(&b), "{}: {:?} vs {:?}", p.name, a.to_values(), b.to_values());
    }

    #[test]
    fn cancellation_is_idempotent(which in 0usize..7, mask in 0u8..16) {
        let p = &programs()[which];
        let mut flat = compile(&p.program(), &p.registry, CompileOptions::from_mask(mask)).unwrap().flat;
        let first = cancel_pop_push(&mut flat);
        prop_assert_eq!(cancellable_pairs(&flat), 0);
        let snapshot = flat.clone();
        prop_assert_eq!(cancel_pop_push(&mut flat), 0);
        prop_assert_eq!(&flat, &snapshot);
        if mask & 8 != 0 {
            prop_assert_eq!(first, 0);
        }
    }

    #[test]
    fn utilization_is_bounded(inputs in fib_batch()) {
        let p = corpus_program("fibonacci").unwrap();
        let z = inputs.len() as f64;
        for engine in Engine::ALL {
            let (_, trace) = execute(&p.program(), &p.registry, &[BatchArray::from_i64(inputs.clone())], &RunConfig::with_engine(engine)).unwrap();
            let u = utilization(&trace, &["add"]).or_else(|_| utilization(&trace, &["le"])).unwrap();
            prop_assert!(u >= 1.0 / z - 1e-15 && u <= 1.0);
        }
    }

    #[test]
    fn trace_json_round_trips(which in 0usize..7, seed in any::<u64>(), z in 1usize..6, engine in 0usize..2) {
        let p = &programs()[which];
        let (_, trace) = execute(&p.program(), &p.registry, &batch(p, seed, z), &RunConfig::with_engine(Engine::ALL[engine])).unwrap();
        prop_assert_eq!(ScheduleTrace::from_json(&trace.to_json()).unwrap(), trace);
    }

    #[test]
    fn single_lane_schedules_coincide(which in 0usize..7, seed in any::<u64>()) {
        let p = &programs()[which];
        let inputs = batch(p, seed, 1);
        let (_, a) = execute(&p.program(), &p.registry, &inputs, &RunConfig::with_engine(Engine::Local)).unwrap();
        let (_, b) = execute(&p.program(), &p.registry, &inputs, &RunConfig::with_engine(Engine::Pc)).unwrap();
        prop_assert_eq!(a.len(), b.len());
        prop_assert_eq!(a.block_sequence(), b.block_sequence());
    }

    #[test]
    fn pc_runs_the_earliest_waiting_block(inputs in fib_batch()) {
        let p = corpus_program("fibonacci").unwrap();
        let compiled = compile(&p.program(), &p.registry, CompileOptions::default()).unwrap();
        let prog = PcProgram::from_compiled(&compiled, &p.registry, &[Kind::I64]).unwrap();
        let mut m = init_machine(&prog, &[BatchArray::from_i64(inputs)], VmOptions::default()).unwrap();
        loop {
            let expected = m.pc_tops().into_iter().min().unwrap();
            match m.step(&prog).unwrap() {
                Some(block) => prop_assert_eq!(block, expected),
                None => break,
            }
        }
    }

    #[test]
    fn selector_does_not_change_outputs(which in 0usize..7, seed in any::<u64>(), z in 1usize..6) {
        let p = &programs()[which];
        let prog = p.program();
        let inputs = batch(p, seed, z);
        let min = trace_local(&prog, &p.registry, &inputs, LocalOptions::default()).unwrap().0;
        let opts = LocalOptions { selector: Selector::MaxPc, ..Default::default() };
        let max = trace_local(&prog, &p.registry, &inputs, opts).unwrap().0;
        prop_assert!(min.bit_eq(&max));
    }
}

#[test]
fn lanes_from_two_call_sites_share_the_callee() {
    let p = corpus_program("two_call_sites").unwrap();
    let compiled = compile(&p.program(), &p.registry, CompileOptions::default()).unwrap();
    let prog = PcProgram::from_compiled(&compiled, &p.registry, &[Kind::I64]).unwrap();
    let mut m = init_machine(&prog, &[BatchArray::from_i64(vec![1, 4])], VmOptions::default()).unwrap();
    let mut converged = false;
    loop {
        let tops = m.pc_tops();
        let ret: Vec<Vec<usize>> = (0..m.lanes()).map(|l| m.return_addresses(l)).collect();
        match m.step(&prog).unwrap() {
            Some(block) => {
                let active: Vec<usize> = (0..tops.len()).filter(|&l| tops[l] == block).collect();
                if active.len() == 2 && ret[active[0]] != ret[active[1]] {
                    converged = true;
                }
            }
            None => break,
        }
    }
    assert!(converged, "no step ran both lanes with different return points");
    assert_eq!(m.output(&prog).as_i64().unwrap(), &[1, 29]);
}

#[test]
fn ir_text_round_trips_over_corpus() {
    for p in corpus() {
        let prog = p.program();
        match parse_ir(&prog.to_string()).unwrap() {
            IrProgram::CallGraph(back) => assert_eq!(back, prog, "{}", p.name),
            IrProgram::Flat(_) => panic!("{}: parsed as flat", p.name),
        }
        for mask in [0, 15] {
            let flat = compile(&prog, &p.registry, CompileOptions::from_mask(mask)).unwrap().flat;
            match parse_ir(&flat.to_string()).unwrap() {
                IrProgram::Flat(back) => assert_eq!(back, flat, "{}", p.name),
                IrProgram::CallGraph(_) => panic!("{}: parsed as call graph", p.name),
            }
        }
    }
}

#[test]
fn gather_and_mask_agree_with_partial_batches() {
    let reg = KernelRegistry::with_builtins();
    let p = corpus_program("hofstadter").unwrap().program();
    let inputs = [BatchArray::from_i64(vec![0, 3, 7, 12, 15])];
    let run = |mode| execute(&p, &reg, &inputs, &RunConfig { mode, ..Default::default() }).unwrap();
    let (a, ta) = run(ExecMode::Mask);
    let (b, tb) = run(ExecMode::Gather);
    assert!(a.bit_eq(&b));
    assert_eq!(ta, tb);
}
