use std::path::Path;
use std::process::{Command, Output};

fn autobatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autobatch")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_prints_one_output_per_lane() {
    for engine in ["pc", "local"] {
        let o = autobatch(&["run", "fib", "--engine", engine, "--inputs", "6,7,8,9"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o), "13 21 34 55\n");
    }
}

#[test]
fn floats_print_with_seventeen_digits() {
    let o = autobatch(&["run", "straight_line", "--inputs", "1.5 0.5, -2 3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let outs: Vec<f64> = stdout(&o).split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(outs.len(), 2);
    for tok in stdout(&o).split_whitespace() {
        let mantissa = tok.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{tok}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(autobatch(&["run", "fib", "--inputs", ""]).status.code(), Some(1));
    assert_eq!(autobatch(&["run", "fib", "--inputs", "1 2"]).status.code(), Some(1));
    assert_eq!(autobatch(&["run", "no_such_program", "--inputs", "1"]).status.code(), Some(1));
    assert_eq!(autobatch(&["run", "fib", "--no-pass", "bogus", "--inputs", "1"]).status.code(), Some(1));
    assert_eq!(autobatch(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(autobatch(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_source_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.src", "def f(x) { return x + ; }");
    let o = autobatch(&["compile", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.src:1:"), "{}", stderr(&o));
    let unbound = write(dir.path(), "unbound.src", "def f(x) { return y; }");
    assert_eq!(autobatch(&["run", &unbound, "--inputs", "1"]).status.code(), Some(1));
}

#[test]
fn runtime_faults_have_distinct_codes() {
    let o = autobatch(&["run", "fib", "--depth", "3", "--inputs", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lane 0") && stderr(&o).contains("fibonacci.n"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let spin = write(dir.path(), "spin.src", "def spin(n) { while (n >= 0) { n = n + 1; } return n; }");
    for engine in ["pc", "local"] {
        let o = autobatch(&["run", &spin, "--engine", engine, "--max-steps", "200", "--inputs", "0"]);
        assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
        assert!(stderr(&o).contains("200"));
    }
}

#[test]
fn compile_dumps_every_stage() {
    let o = autobatch(&["compile", "fib"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for stage in ["callgraph", "flatten", "pop-push", "classify"] {
        assert!(text.contains(&format!("# stage: {stage}")), "missing {stage}");
    }
    assert!(text.contains("pushjump"));
    assert!(text.contains("fibonacci.n stacked"));

    let o = autobatch(&["compile", "straight_line"]);
    let text = stdout(&o);
    let last = text.split("# stage: pop-push").nth(1).unwrap();
    assert!(!last.lines().any(|l| l.trim_start().starts_with("push ")), "{last}");

    let o = autobatch(&["compile", "fib", "--no-pass", "pop-push"]);
    assert!(!stdout(&o).contains("# stage: pop-push"));
}

#[test]
fn compile_to_directory_and_run_flat_ir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stages");
    let o = autobatch(&["compile", "fib", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let flat = out.join("pop-push.ir");
    assert!(flat.exists());
    let o = autobatch(&["run", flat.to_str().unwrap(), "--inputs", "3,7,4,5"]);
    assert_eq!(stdout(&o), "3 21 5 8\n", "{}", stderr(&o));
    let o = autobatch(&["run", flat.to_str().unwrap(), "--engine", "local", "--inputs", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = autobatch(&["run", out.join("callgraph.ir").to_str().unwrap(), "--engine", "local", "--inputs", "3,7"]);
    assert_eq!(stdout(&o), "3 21\n", "{}", stderr(&o));
}

#[test]
fn inputs_file_and_trace_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = write(dir.path(), "lanes.txt", "# one lane per line\n6\n7\n\n8\n9\n");
    let mut runs = Vec::new();
    for i in 0..2 {
        let json = dir.path().join(format!("t{i}.json"));
        let csv = dir.path().join(format!("t{i}.csv"));
        let o = autobatch(&[
            "run",
            "fib",
            "--mode",
            "gather",
            "--inputs-file",
            &inputs,
            "--trace",
            json.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(stdout(&o), "13 21 34 55\n");
        runs.push((stdout(&o), std::fs::read(&json).unwrap(), std::fs::read_to_string(&csv).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let csv = &runs[0].2;
    assert!(csv.starts_with("step,block,active\n0,0,4\n"));
    assert_eq!(csv.lines().count(), 459);
    let trace = autobatch::metrics::ScheduleTrace::from_json(std::str::from_utf8(&runs[0].1).unwrap()).unwrap();
    assert_eq!(trace.z, 4);
}

#[test]
fn check_reports_agreement_and_catches_faults() {
    let o = autobatch(&["check", "fib", "hofstadter", "--exhaustive", "--batches", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("fibonacci: ok") || stdout(&o).contains("fib: ok"));

    let o = autobatch(&["check", "fib", "--inputs", "5"]);
    assert_eq!(o.status.code(), Some(0));

    let o = autobatch(&["check", "fib", "--inject-cancel-fault"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("mismatch: pc/mask/passes=1111: lane"), "{}", stdout(&o));
}

#[test]
fn nuts_reports_both_engines() {
    let o = autobatch(&["nuts", "--lanes", "8", "--iterations", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("local: steps"));
    assert!(text.contains("pc: steps"));
    assert!(text.contains("chains identical across engines: true"));
    assert!(text.contains("utilization ratio pc/local:"));
    assert_eq!(autobatch(&["nuts", "--target", "banana"]).status.code(), Some(1));
}
