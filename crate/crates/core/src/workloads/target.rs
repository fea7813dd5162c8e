use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::runtime::{ArgInfo, Kernel, KernelError, KernelRegistry, Kind, LaneMut, LaneRef};

/// A differentiable log density over `R^dim`.
pub trait Model: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn logpdf(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64], out: &mut [f64]);
}

/// A target for the sampler: a model, the kernel names under which its
/// density and gradient are registered, and reference moments.
#[derive(Debug, Clone)]
pub struct TargetDensity {
    pub name: String,
    pub dim: usize,
    pub logpdf_kernel: String,
    pub grad_kernel: String,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    model: Arc<dyn Model>,
}

impl TargetDensity {
    pub fn new(name: &str, model: Arc<dyn Model>, mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Self {
        TargetDensity {
            name: name.to_string(),
            dim: model.dim(),
            logpdf_kernel: format!("{name}_logpdf"),
            grad_kernel: format!("{name}_grad_logpdf"),
            mean,
            cov,
            model,
        }
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        self.model.logpdf(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.model.grad(x, &mut g);
        g
    }

    pub fn register(&self, registry: &mut KernelRegistry) {
        registry.register(Arc::new(DensityKernel { name: self.logpdf_kernel.clone(), model: self.model.clone(), grad: false }));
        registry.register(Arc::new(DensityKernel { name: self.grad_kernel.clone(), model: self.model.clone(), grad: true }));
    }

    /// Builtins plus this target's two kernels.
    pub fn registry(&self) -> KernelRegistry {
        let mut r = KernelRegistry::with_builtins();
        self.register(&mut r);
        r
    }
}

#[derive(Debug)]
struct DensityKernel {
    name: String,
    model: Arc<dyn Model>,
    grad: bool,
}

impl Kernel for DensityKernel {
    fn name(&self) -> &str {
        &self.name
    }

    fn arity(&self) -> usize {
        1
    }

    fn output_kind(&self, args: &[ArgInfo]) -> Result<Kind, KernelError> {
        let d = self.model.dim();
        match args {
            [a] if a.kind == Kind::Vec(d) => Ok(if self.grad { Kind::Vec(d) } else { Kind::F64 }),
            _ => Err(KernelError { kernel: self.name.clone(), message: format!("expects one vec[{d}] argument") }),
        }
    }

    fn eval(&self, args: &[LaneRef<'_>], out: LaneMut<'_>) {
        let x = args[0].vec();
        if self.grad {
            self.model.grad(x, out.into_vec());
        } else {
            out.set_f64(self.model.logpdf(x));
        }
    }
}

/// Zero-mean Gaussian with unit variances and correlation `rho` between
/// every pair of coordinates.
#[derive(Debug)]
struct CorrelatedGaussian {
    dim: usize,
    rho: f64,
    log_norm: f64,
}

impl CorrelatedGaussian {
    /// `Σ⁻¹x` for `Σ = (1-ρ)I + ρ11ᵀ`, by Sherman-Morrison.
    fn precision_times(&self, x: &[f64], out: &mut [f64]) {
        let (d, r) = (self.dim as f64, self.rho);
        let s: f64 = x.iter().sum();
        let c = r / (1.0 - r + d * r);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (xi - c * s) / (1.0 - r);
        }
    }
}

impl Model for CorrelatedGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logpdf(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.dim];
        self.precision_times(x, &mut px);
        let quad: f64 = x.iter().zip(&px).map(|(a, b)| a * b).sum();
        self.log_norm - 0.5 * quad
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        self.precision_times(x, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
    }
}

/// Panics unless `|rho| < 1` and the covariance is positive definite.
pub fn correlated_gaussian(dim: usize, rho: f64) -> TargetDensity {
    assert!(dim >= 1, "dimension must be positive");
    assert!(rho.abs() < 1.0 && 1.0 + (dim as f64 - 1.0) * rho > 0.0, "covariance must be positive definite");
    let d = dim as f64;
    let log_det = (d - 1.0) * (1.0 - rho).ln() + (1.0 + (d - 1.0) * rho).ln();
    let log_norm = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det);
    let cov = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { rho }).collect()).collect();
    let name = format!("gauss{dim}");
    TargetDensity::new(&name, Arc::new(CorrelatedGaussian { dim, rho, log_norm }), vec![0.0; dim], cov)
}

/// Bayesian logistic regression with ±1 labels and a standard normal prior.
#[derive(Debug)]
pub struct LogisticModel {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// `log σ(t)` without overflow.
fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    fn margin(&self, i: usize, w: &[f64]) -> f64 {
        self.y[i] * self.x[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Model for LogisticModel {
    fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn logpdf(&self, w: &[f64]) -> f64 {
        let lik: f64 = (0..self.y.len()).map(|i| log_sigmoid(self.margin(i, w))).sum();
        let prior: f64 = w.iter().map(|v| -0.5 * v * v).sum::<f64>() - 0.5 * w.len() as f64 * (2.0 * std::f64::consts::PI).ln();
        lik + prior
    }

    fn grad(&self, w: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(w) {
            *o = -v;
        }
        for i in 0..self.y.len() {
            let c = self.y[i] * sigmoid(-self.margin(i, w));
            for (o, xij) in out.iter_mut().zip(&self.x[i]) {
                *o += c * xij;
            }
        }
    }
}

impl LogisticModel {
    /// Synthetic data from a fixed-seed ground-truth weight vector.
    pub fn synthetic(n_points: usize, n_regressors: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..n_regressors).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = Vec::with_capacity(n_points);
        let mut y = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let row: Vec<f64> = (0..n_regressors).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eta: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
            let u: f64 = rand::Rng::random(&mut rng);
            y.push(if u < sigmoid(eta) { 1.0 } else { -1.0 });
            x.push(row);
        }
        LogisticModel { x, y }
    }

    /// Mode and inverse negative Hessian at the mode, by Newton's method.
    pub fn laplace(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = self.dim();
        let mut w = DVector::<f64>::zeros(k);
        let mut cov = DMatrix::<f64>::identity(k, k);
        for _ in 0..100 {
            let mut g = vec![0.0; k];
            self.grad(w.as_slice(), &mut g);
            let mut h = DMatrix::<f64>::identity(k, k);
            for i in 0..self.y.len() {
                let s = sigmoid(self.margin(i, w.as_slice()));
                let xi = DVector::from_column_slice(&self.x[i]);
                h += s * (1.0 - s) * &xi * xi.transpose();
            }
            let chol = h.cholesky().expect("negative Hessian is positive definite");
            let step = chol.solve(&DVector::from_vec(g));
            cov = chol.inverse();
            w += &step;
            if step.norm() < 1e-12 {
                break;
            }
        }
        let cov = (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect();
        (w.as_slice().to_vec(), cov)
    }
}

/// Reference moments come from a Laplace approximation at the posterior mode.
pub fn logistic_regression(n_points: usize, n_regressors: usize, seed: u64) -> TargetDensity {
    let model = LogisticModel::synthetic(n_points, n_regressors, seed);
    let (mean, cov) = model.laplace();
    TargetDensity::new("logistic", Arc::new(model), mean, cov)
}

/// `steps` leapfrog steps of size `eps`, evaluating the gradient once per
/// step after the first. Same operation order as the sampler's leaves.
pub fn leapfrog(target: &TargetDensity, x: &[f64], p: &[f64], eps: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut p) = (x.to_vec(), p.to_vec());
    let h = 0.5 * eps;
    let mut g = target.grad(&x);
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += h * gi;
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += eps * pi;
        }
        g = target.grad(&x);
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += h * gi;
        }
    }
    (x, p)
}

/// Central finite-difference gradient of the target's log density.
pub fn finite_difference_grad(target: &TargetDensity, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (target.logpdf(&a) - target.logpdf(&b)) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_gradient() {
        let t = correlated_gaussian(2, 0.0);
        assert_eq!(t.grad(&[1.0, 0.0]), vec![-1.0, 0.0]);
    }

    #[test]
    fn correlated_gradient_closed_form() {
        // Σ⁻¹ = (1/(1-ρ²)) [[1, -ρ], [-ρ, 1]] for dim 2; at x = (1, 1) with
        // ρ = 1/2 that gives -(2/3, 2/3).
        let t = correlated_gaussian(2, 0.5);
        let g = t.grad(&[1.0, 1.0]);
        for gi in g {
            assert!((gi + 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_form_identity() {
        let t = correlated_gaussian(10, 0.3);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) / 3.0).collect();
        let g = t.grad(&x);
        let quad: f64 = -x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let diff = t.logpdf(&[0.0; 10]) - t.logpdf(&x);
        assert!((diff - 0.5 * quad).abs() < 1e-12);
    }

    #[test]
    fn logistic_zero_weights() {
        let t = logistic_regression(200, 5, 3);
        let expected = 200.0 * 0.5f64.ln() - 2.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((t.logpdf(&[0.0; 5]) - expected).abs() < 1e-9);
    }

    #[test]
    fn logistic_label_flip_symmetry() {
        let m = LogisticModel::synthetic(50, 3, 9);
        let flipped = LogisticModel { x: m.x.clone(), y: m.y.iter().map(|v| -v).collect() };
        let w = [0.3, -1.2, 0.7];
        let neg = [-0.3, 1.2, -0.7];
        assert!((m.logpdf(&w) - flipped.logpdf(&neg)).abs() < 1e-12);
    }

    #[test]
    fn laplace_mode_has_zero_gradient() {
        let t = logistic_regression(200, 5, 1);
        assert!(t.grad(&t.mean).iter().all(|g| g.abs() < 1e-8));
        for i in 0..5 {
            assert!(t.cov[i][i] > 0.0);
        }
    }
}
