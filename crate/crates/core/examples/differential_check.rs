//! Differential check of every corpus program: scalar reference against
//! both engines, all pass subsets, masked and gather execution.

use autobatch::check::{check_batch, CheckOptions};
use autobatch::workloads::corpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = CheckOptions::exhaustive();
    for p in corpus() {
        let prog = p.program();
        let mut report = check_batch(&prog, &p.registry, &p.sample_inputs, &opts);
        for z in [1, 2, 4, 7] {
            report.merge(check_batch(&prog, &p.registry, &p.random_inputs(&mut rng, z), &opts));
        }
        println!("{:<15} {}", p.name, report.to_string().trim_end());
    }
}
