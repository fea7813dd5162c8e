//! NUTS-lite on a 2-d correlated Gaussian with both engines: chain moments
//! and gradient utilization.

use autobatch::engine::{Engine, RunConfig};
use autobatch::metrics::utilization;
use autobatch::workloads::{correlated_gaussian, ChainStats, NutsConfig, NutsLite};

fn main() {
    let target = correlated_gaussian(2, 0.5);
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let lanes = args.first().copied().unwrap_or(30);
    let iterations = args.get(1).copied().unwrap_or(10);
    let config = NutsConfig { iterations, ..Default::default() };
    let sampler = NutsLite::new(&target, config).expect("sampler builds");
    let counted = [target.grad_kernel.as_str()];
    let mut utils = Vec::new();
    for engine in Engine::ALL {
        let start = std::time::Instant::now();
        let run = sampler.run(lanes, &RunConfig::with_engine(engine)).expect("sampler runs");
        let stats = ChainStats::of(&run.chains, &target);
        let u = utilization(&run.trace, &counted).expect("gradients were launched");
        println!(
            "{engine}: steps {} mean {:?} cov {:?} utilization {u:.4} ({:.2?})",
            run.trace.len(),
            stats.mean,
            stats.cov,
            start.elapsed()
        );
        utils.push(u);
    }
    println!("pc / local utilization: {:.4}", utils[1] / utils[0]);
}
