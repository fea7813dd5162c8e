//! Batched kernel layer: per-lane arrays, masked and gather-scatter
//! primitive application, per-variable stacks, and counter-based RNG.

mod apply;
mod array;
mod kernels;
pub mod rng;
mod stack;
mod value;

pub use apply::{apply_gather_scatter, apply_masked, compute, Arg, ExecMode};
pub use array::{BatchArray, LaneMask};
pub use kernels::{eval_lane, ArgInfo, Builtin, Kernel, KernelError, KernelRegistry};
pub use stack::{StackFault, StackedVar};
pub use value::{Kind, LaneMut, LaneRef, Literal, Value};

/// Draw uniforms in `[0, 1)` lane by lane from `(key, counter)` pairs.
pub fn rng_uniform(key: &BatchArray, counter: &BatchArray) -> Result<BatchArray, KernelError> {
    compute(ExecMode::Mask, &Builtin::RngUniform, &[Arg::Array(key), Arg::Array(counter)], &LaneMask::full(key.lanes()))
}
