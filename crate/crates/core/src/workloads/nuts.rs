use crate::engine::{execute, RunConfig};
use crate::frontend::{lower_to_cfg, parse_source};
use crate::ir::CallGraphProgram;
use crate::metrics::ScheduleTrace;
use crate::runtime::{rng, BatchArray, KernelRegistry, Value};
use crate::ExecError;

use super::target::TargetDensity;

const TEMPLATE: &str = include_str!("../../assets/nuts_lite.src");

/// Slice threshold: a leaf whose energy error exceeds this stops the tree.
pub const DELTA_MAX: f64 = 1000.0;

/// Step bound used for sampler runs, far above what any valid run needs.
pub const NUTS_MAX_STEPS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsConfig {
    pub step_size: f64,
    /// Leapfrog steps per tree leaf.
    pub leapfrog_steps: usize,
    pub max_depth: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig { step_size: 0.25, leapfrog_steps: 4, max_depth: 6, iterations: 400, seed: 1 }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(format!("step size must be positive, got {}", self.step_size));
        }
        if self.leapfrog_steps == 0 {
            return Err("leapfrog steps must be at least 1".into());
        }
        if self.max_depth == 0 {
            return Err("max depth must be at least 1".into());
        }
        if self.iterations == 0 {
            return Err("iterations must be at least 1".into());
        }
        Ok(())
    }

    /// Smallest VM stack depth that can run the sampler: one frame per tree
    /// level plus the sampler's own.
    pub fn min_stack_depth(&self) -> usize {
        self.max_depth + 2
    }
}

/// Source text of the sampler for `target`, with the configuration baked in.
pub fn nuts_lite_source(config: &NutsConfig, target: &TargetDensity) -> Result<String, String> {
    config.validate()?;
    let d = target.dim;
    let subs = [
        ("ITERATIONS", config.iterations.to_string()),
        ("MAX_DEPTH", config.max_depth.to_string()),
        ("LEAPFROG", config.leapfrog_steps.to_string()),
        ("EPS", format!("{:?}", config.step_size)),
        ("DELTA_MAX", format!("{DELTA_MAX:?}")),
        ("LOGPDF", target.logpdf_kernel.clone()),
        ("GRAD", target.grad_kernel.clone()),
        ("D5P1", (5 * d + 1).to_string()),
        ("D5P2", (5 * d + 2).to_string()),
        ("D2", (2 * d).to_string()),
        ("D3", (3 * d).to_string()),
        ("D4", (4 * d).to_string()),
        ("D5", (5 * d).to_string()),
        ("D", d.to_string()),
    ];
    let mut text = TEMPLATE.to_string();
    for (key, value) in subs {
        text = text.replace(&format!("{{{{{key}}}}}"), &value);
    }
    Ok(text)
}

/// Per-lane chains of `iterations` samples in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chains {
    pub dim: usize,
    pub iterations: usize,
    pub lanes: Vec<Vec<f64>>,
}

impl Chains {
    pub fn from_output(out: &BatchArray, dim: usize, iterations: usize) -> Self {
        let lanes = out
            .to_values()
            .into_iter()
            .map(|v| match v {
                Value::Vec(v) => v,
                other => vec![other.as_lane().f64()],
            })
            .collect();
        Chains { dim, iterations, lanes }
    }

    pub fn sample(&self, lane: usize, iteration: usize) -> &[f64] {
        &self.lanes[lane][iteration * self.dim..(iteration + 1) * self.dim]
    }

    fn all(&self) -> impl Iterator<Item = &[f64]> {
        self.lanes.iter().flat_map(move |l| l.chunks(self.dim))
    }

    pub fn pooled_mean(&self) -> Vec<f64> {
        let n = (self.lanes.len() * self.iterations) as f64;
        let mut m = vec![0.0; self.dim];
        for s in self.all() {
            for (mi, si) in m.iter_mut().zip(s) {
                *mi += si;
            }
        }
        m.iter().map(|v| v / n).collect()
    }

    pub fn pooled_cov(&self) -> Vec<Vec<f64>> {
        let n = (self.lanes.len() * self.iterations) as f64;
        let m = self.pooled_mean();
        let mut c = vec![vec![0.0; self.dim]; self.dim];
        for s in self.all() {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    c[i][j] += (s[i] - m[i]) * (s[j] - m[j]);
                }
            }
        }
        c.iter().map(|row| row.iter().map(|v| v / (n - 1.0)).collect()).collect()
    }

    /// Bitwise equality of every sample.
    pub fn bit_eq(&self, other: &Chains) -> bool {
        self.lanes.len() == other.lanes.len()
            && self.lanes.iter().zip(&other.lanes).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Largest absolute deviation of the pooled moments from the target's.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub mean_error: f64,
    pub cov_error: f64,
}

impl ChainStats {
    pub fn of(chains: &Chains, target: &TargetDensity) -> Self {
        let mean = chains.pooled_mean();
        let cov = chains.pooled_cov();
        let mean_error = mean.iter().zip(&target.mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let cov_error = cov
            .iter()
            .zip(&target.cov)
            .flat_map(|(r, t)| r.iter().zip(t).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        ChainStats { mean, cov, mean_error, cov_error }
    }
}

/// The sampler lowered for one target and configuration.
#[derive(Debug, Clone)]
pub struct NutsLite {
    pub target: TargetDensity,
    pub config: NutsConfig,
    pub source: String,
    pub program: CallGraphProgram,
    pub registry: KernelRegistry,
}

#[derive(Debug, Clone)]
pub struct NutsRun {
    pub chains: Chains,
    pub trace: ScheduleTrace,
}

impl NutsLite {
    pub fn new(target: &TargetDensity, config: NutsConfig) -> Result<Self, String> {
        let source = nuts_lite_source(&config, target)?;
        let registry = target.registry();
        let module = parse_source(&source).map_err(|e| e.to_string())?;
        let program = lower_to_cfg(&module, &registry).map_err(|e| e.to_string())?;
        Ok(NutsLite { target: target.clone(), config, source, program, registry })
    }

    /// Per-lane RNG key derived from the seed.
    pub fn key(&self, lane: usize) -> i64 {
        rng::bits(self.config.seed as i64, lane as i64, 0x006b_6579) as i64
    }

    /// Start state (the origin), RNG keys, and an empty chain buffer.
    pub fn inputs(&self, z: usize) -> Vec<BatchArray> {
        let d = self.target.dim;
        vec![
            BatchArray::from_rows(&vec![vec![0.0; d]; z]).expect("uniform rows"),
            BatchArray::from_i64((0..z).map(|b| self.key(b)).collect()),
            BatchArray::from_rows(&vec![vec![0.0; d * self.config.iterations]; z]).expect("uniform rows"),
        ]
    }

    /// Run `z` chains. The step bound in `cfg` is raised to [`NUTS_MAX_STEPS`]
    /// if lower.
    pub fn run(&self, z: usize, cfg: &RunConfig) -> Result<NutsRun, ExecError> {
        let mut cfg = *cfg;
        cfg.max_steps = cfg.max_steps.max(NUTS_MAX_STEPS);
        cfg.depth = cfg.depth.max(self.config.min_stack_depth());
        let (out, trace) = execute(&self.program, &self.registry, &self.inputs(z), &cfg)?;
        Ok(NutsRun { chains: Chains::from_output(&out, self.target.dim, self.config.iterations), trace })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Engine;
    use crate::workloads::correlated_gaussian;

    #[test]
    fn source_has_no_placeholders() {
        let src = nuts_lite_source(&NutsConfig::default(), &correlated_gaussian(2, 0.5)).unwrap();
        assert!(!src.contains("{{"));
        assert!(src.contains("gauss2_grad_logpdf"));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = NutsConfig { leapfrog_steps: 0, ..Default::default() };
        assert!(nuts_lite_source(&cfg, &correlated_gaussian(2, 0.5)).is_err());
    }

    #[test]
    fn engines_agree_on_short_run() {
        let cfg = NutsConfig { iterations: 5, max_depth: 4, ..Default::default() };
        let n = NutsLite::new(&correlated_gaussian(2, 0.5), cfg).unwrap();
        let a = n.run(4, &RunConfig::with_engine(Engine::Local)).unwrap();
        let b = n.run(4, &RunConfig::with_engine(Engine::Pc)).unwrap();
        assert!(a.chains.bit_eq(&b.chains));
        assert!(a.chains.lanes[0].iter().any(|v| *v != 0.0));
    }
}
