//! NUTS-lite on a Bayesian logistic regression, compared with its Laplace
//! approximation.

use autobatch::engine::RunConfig;
use autobatch::workloads::{logistic_regression, ChainStats, NutsConfig, NutsLite};

fn main() {
    let target = logistic_regression(200, 3, 11);
    let config = NutsConfig { step_size: 0.1, iterations: 200, ..Default::default() };
    let sampler = NutsLite::new(&target, config).unwrap();
    let run = sampler.run(16, &RunConfig::default()).unwrap();
    let stats = ChainStats::of(&run.chains, &target);
    println!("posterior mean {:.3?}", stats.mean);
    println!("laplace mean   {:.3?}", target.mean);
    println!("max mean deviation {:.3}, max covariance deviation {:.3}", stats.mean_error, stats.cov_error);
}
