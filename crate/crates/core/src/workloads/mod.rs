//! Corpus programs and the NUTS-lite sampler.
//!
//! Every corpus program ships as a source asset together with a generator
//! of random input batches, so property suites can run each program on any
//! batch size.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::frontend::{lower_to_cfg, parse_source};
use crate::ir::CallGraphProgram;
use crate::runtime::{BatchArray, KernelRegistry};

mod nuts;
mod target;

pub use nuts::{nuts_lite_source, ChainStats, Chains, NutsConfig, NutsLite, NutsRun, DELTA_MAX, NUTS_MAX_STEPS};
pub use target::{
    correlated_gaussian, finite_difference_grad, leapfrog, logistic_regression, LogisticModel, Model, TargetDensity,
};

pub const FIBONACCI: &str = include_str!("../../assets/fibonacci.src");
pub const COUNTDOWN: &str = include_str!("../../assets/countdown.src");
pub const HOFSTADTER: &str = include_str!("../../assets/hofstadter.src");
pub const TWO_CALL_SITES: &str = include_str!("../../assets/two_call_sites.src");
pub const STRAIGHT_LINE: &str = include_str!("../../assets/straight_line.src");
pub const ACKERMANN: &str = include_str!("../../assets/ackermann.src");

pub fn fibonacci_source() -> &'static str {
    FIBONACCI
}

type InputGen = fn(&mut dyn rand::RngCore, usize) -> Vec<BatchArray>;

/// A corpus entry: source, kernels it needs, and input generation.
#[derive(Debug, Clone)]
pub struct CorpusProgram {
    pub name: &'static str,
    pub source: String,
    /// Whether the call graph has a cycle.
    pub recursive: bool,
    pub registry: KernelRegistry,
    pub sample_inputs: Vec<BatchArray>,
    generate: InputGen,
}

impl CorpusProgram {
    pub fn program(&self) -> CallGraphProgram {
        let module = parse_source(&self.source).expect("corpus source parses");
        lower_to_cfg(&module, &self.registry).expect("corpus source lowers")
    }

    /// A random batch of `z` lanes.
    pub fn random_inputs(&self, rng: &mut dyn rand::RngCore, z: usize) -> Vec<BatchArray> {
        (self.generate)(rng, z)
    }
}

fn ints(rng: &mut dyn rand::RngCore, z: usize, lo: i64, hi: i64) -> BatchArray {
    BatchArray::from_i64((0..z).map(|_| rng.random_range(lo..=hi)).collect())
}

fn normals(rng: &mut dyn rand::RngCore, z: usize, scale: f64) -> BatchArray {
    BatchArray::from_f64((0..z).map(|_| { let v: f64 = StandardNormal.sample(rng); scale * v }).collect())
}

/// The sampler configuration used by the corpus: short enough for
/// exhaustive differential testing.
pub fn corpus_nuts() -> NutsLite {
    let cfg = NutsConfig { step_size: 0.25, leapfrog_steps: 2, max_depth: 3, iterations: 3, seed: 5 };
    NutsLite::new(&correlated_gaussian(2, 0.5), cfg).expect("corpus sampler builds")
}

fn nuts_inputs(rng: &mut dyn rand::RngCore, z: usize) -> Vec<BatchArray> {
    let n = corpus_nuts();
    let rows: Vec<Vec<f64>> = (0..z).map(|_| (0..2).map(|_| -> f64 { StandardNormal.sample(&mut *rng) }).collect()).collect();
    let mut inputs = n.inputs(z);
    inputs[0] = BatchArray::from_rows(&rows).expect("uniform rows");
    inputs[1] = BatchArray::from_i64((0..z).map(|_| rng.random::<i64>()).collect());
    inputs
}

/// Fibonacci, a while loop, mutual recursion, two call sites into one
/// function, straight-line code, Ackermann, and NUTS-lite.
pub fn corpus() -> Vec<CorpusProgram> {
    let builtins = KernelRegistry::with_builtins();
    let simple = |name, source: &str, recursive, sample_inputs, generate| CorpusProgram {
        name,
        source: source.to_string(),
        recursive,
        registry: builtins.clone(),
        sample_inputs,
        generate,
    };
    let nuts = corpus_nuts();
    vec![
        simple("fibonacci", FIBONACCI, true, vec![BatchArray::from_i64(vec![3, 7, 4, 5])], |r, z| vec![ints(r, z, 0, 12)]),
        simple("countdown", COUNTDOWN, false, vec![BatchArray::from_i64(vec![0, 3, 10])], |r, z| vec![ints(r, z, -2, 40)]),
        simple("hofstadter", HOFSTADTER, true, vec![BatchArray::from_i64(vec![0, 5, 9])], |r, z| vec![ints(r, z, 0, 15)]),
        simple("two_call_sites", TWO_CALL_SITES, false, vec![BatchArray::from_i64(vec![1, 4, 2, 6])], |r, z| {
            vec![ints(r, z, 0, 8)]
        }),
        simple(
            "straight_line",
            STRAIGHT_LINE,
            false,
            vec![BatchArray::from_f64(vec![1.5, -2.0]), BatchArray::from_f64(vec![0.5, 3.0])],
            |r, z| vec![normals(r, z, 3.0), normals(r, z, 3.0)],
        ),
        simple(
            "ackermann",
            ACKERMANN,
            true,
            vec![BatchArray::from_i64(vec![1, 2, 0]), BatchArray::from_i64(vec![2, 3, 4])],
            |r, z| vec![ints(r, z, 0, 2), ints(r, z, 0, 3)],
        ),
        CorpusProgram {
            name: "nuts_lite",
            sample_inputs: nuts.inputs(2),
            source: nuts.source,
            recursive: true,
            registry: nuts.registry,
            generate: nuts_inputs,
        },
    ]
}

pub fn corpus_program(name: &str) -> Option<CorpusProgram> {
    corpus().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_members() {
        let names: Vec<_> = corpus().iter().map(|p| p.name).collect();
        for n in ["fibonacci", "countdown", "hofstadter", "two_call_sites", "straight_line", "ackermann", "nuts_lite"] {
            assert!(names.contains(&n), "{n}");
        }
    }

    #[test]
    fn corpus_sources_lower_and_validate() {
        for p in corpus() {
            let prog = p.program();
            assert!(crate::ir::validate_callgraph(&prog, &p.registry).is_empty(), "{}", p.name);
            assert_eq!(p.sample_inputs.len(), prog.entry_function().params.len(), "{}", p.name);
        }
    }
}
