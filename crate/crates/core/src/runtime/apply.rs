use serde::{Deserialize, Serialize};

use super::array::{BatchArray, LaneMask};
use super::kernels::{ArgInfo, Kernel, KernelError};
use super::value::{Kind, LaneRef, Literal};

/// How a primitive is applied to a subset of lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecMode {
    /// Run on every lane, keep only the active results.
    #[default]
    Mask,
    /// Pack the active lanes, run on the packed array, scatter back.
    Gather,
}

/// A kernel input: a batch array, or an immediate broadcast to every lane.
#[derive(Debug, Clone, Copy)]
pub enum Arg<'a> {
    Array(&'a BatchArray),
    Lit(Literal),
}

impl<'a> Arg<'a> {
    pub fn lane(&self, b: usize) -> LaneRef<'a> {
        match *self {
            Arg::Array(a) => a.lane(b),
            Arg::Lit(l) => l.as_lane(),
        }
    }

    pub fn info(&self) -> ArgInfo {
        match self {
            Arg::Array(a) => ArgInfo::of_kind(a.kind()),
            Arg::Lit(l) => ArgInfo { kind: l.kind(), literal: Some(*l) },
        }
    }
}

fn fault(kernel: &dyn Kernel, message: String) -> KernelError {
    KernelError { kernel: kernel.name().to_string(), message }
}

fn check_shapes(kernel: &dyn Kernel, args: &[Arg<'_>], lanes: usize) -> Result<Kind, KernelError> {
    for a in args {
        if let Arg::Array(arr) = a {
            if arr.lanes() != lanes {
                return Err(fault(kernel, format!("input has {} lanes, expected {lanes}", arr.lanes())));
            }
        }
    }
    let infos: Vec<ArgInfo> = args.iter().map(Arg::info).collect();
    kernel.output_kind(&infos)
}

fn eval_lanes(kernel: &dyn Kernel, args: &[Arg<'_>], src_lanes: impl Iterator<Item = usize>, out: &mut BatchArray) {
    let mut buf: Vec<LaneRef<'_>> = Vec::with_capacity(args.len());
    for (i, b) in src_lanes.enumerate() {
        buf.clear();
        buf.extend(args.iter().map(|a| a.lane(b)));
        kernel.eval(&buf, out.lane_mut(i));
    }
}

/// Evaluate `kernel` and return a full-width result whose lanes in `mask`
/// hold the kernel output. Other lanes hold junk (mask mode) or zeros
/// (gather mode) and must not be consumed.
pub fn compute(
    mode: ExecMode,
    kernel: &dyn Kernel,
    args: &[Arg<'_>],
    mask: &LaneMask,
) -> Result<BatchArray, KernelError> {
    let lanes = mask.lanes();
    let kind = check_shapes(kernel, args, lanes)?;
    match mode {
        ExecMode::Mask => {
            let mut out = BatchArray::zeros(kind, lanes);
            eval_lanes(kernel, args, 0..lanes, &mut out);
            Ok(out)
        }
        ExecMode::Gather => {
            let idx = mask.indices();
            let packed_inputs: Vec<BatchArray> = args
                .iter()
                .filter_map(|a| match a {
                    Arg::Array(arr) => Some(arr.gather(&idx)),
                    Arg::Lit(_) => None,
                })
                .collect();
            let mut it = packed_inputs.iter();
            let packed_args: Vec<Arg<'_>> = args
                .iter()
                .map(|a| match a {
                    Arg::Array(_) => Arg::Array(it.next().expect("one packed input per array arg")),
                    Arg::Lit(l) => Arg::Lit(*l),
                })
                .collect();
            let mut packed = BatchArray::zeros(kind, idx.len());
            eval_lanes(kernel, &packed_args, 0..idx.len(), &mut packed);
            let mut out = BatchArray::zeros(kind, lanes);
            out.scatter(&idx, &packed);
            Ok(out)
        }
    }
}

fn apply_with(
    mode: ExecMode,
    kernel: &dyn Kernel,
    args: &[Arg<'_>],
    mask: &LaneMask,
    dest: &mut BatchArray,
) -> Result<(), KernelError> {
    if dest.lanes() != mask.lanes() {
        return Err(fault(kernel, format!("destination has {} lanes, mask has {}", dest.lanes(), mask.lanes())));
    }
    let out = compute(mode, kernel, args, mask)?;
    if out.kind() != dest.kind() {
        return Err(fault(kernel, format!("produces {} but destination is {}", out.kind(), dest.kind())));
    }
    dest.assign_masked(&out, mask);
    Ok(())
}

/// Masking style: compute on all lanes, write only the lanes in `mask`.
pub fn apply_masked(
    kernel: &dyn Kernel,
    args: &[Arg<'_>],
    mask: &LaneMask,
    dest: &mut BatchArray,
) -> Result<(), KernelError> {
    apply_with(ExecMode::Mask, kernel, args, mask, dest)
}

/// Gather-scatter style: compute only on the lanes in `mask`.
pub fn apply_gather_scatter(
    kernel: &dyn Kernel,
    args: &[Arg<'_>],
    mask: &LaneMask,
    dest: &mut BatchArray,
) -> Result<(), KernelError> {
    apply_with(ExecMode::Gather, kernel, args, mask, dest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::kernels::Builtin;

    fn both(b: Builtin, args: &[Arg<'_>], mask: &LaneMask, dest: &BatchArray) -> (BatchArray, BatchArray) {
        let mut m = dest.clone();
        apply_masked(&b, args, mask, &mut m).unwrap();
        let mut g = dest.clone();
        apply_gather_scatter(&b, args, mask, &mut g).unwrap();
        (m, g)
    }

    #[test]
    fn masked_sub_leaves_inactive_lanes() {
        let x = BatchArray::from_i64(vec![3, 7, 4, 5]);
        let y = BatchArray::from_i64(vec![2, 2, 2, 2]);
        let dest = BatchArray::from_i64(vec![9, 9, 9, 9]);
        let mask = LaneMask::from_indices(4, &[0, 2]);
        let (m, g) = both(Builtin::Sub, &[Arg::Array(&x), Arg::Array(&y)], &mask, &dest);
        assert_eq!(m.as_i64().unwrap(), &[1, 9, 2, 9]);
        assert!(m.bit_eq(&g));
    }

    #[test]
    fn full_mask_le() {
        let x = BatchArray::from_i64(vec![3, 7, 4, 5]);
        let dest = BatchArray::from_bool(vec![true; 4]);
        let (m, g) = both(Builtin::Le, &[Arg::Array(&x), Arg::Lit(Literal::Int(1))], &LaneMask::full(4), &dest);
        assert_eq!(m.as_bool().unwrap(), &[false; 4]);
        assert!(m.bit_eq(&g));
    }

    #[test]
    fn junk_lane_division_does_not_leak() {
        let x = BatchArray::from_f64(vec![1.0, 1.0]);
        let y = BatchArray::from_f64(vec![0.0, 2.0]);
        let dest = BatchArray::from_f64(vec![-3.5, -3.5]);
        let mask = LaneMask::from_indices(2, &[1]);
        let (m, g) = both(Builtin::Div, &[Arg::Array(&x), Arg::Array(&y)], &mask, &dest);
        assert_eq!(m.value(0).to_string(), dest.value(0).to_string());
        assert!(m.value(0).bit_eq(&dest.value(0)));
        assert!(m.value(1).bit_eq(&crate::runtime::Value::F64(0.5)));
        assert!(m.bit_eq(&g));
    }

    #[test]
    fn empty_mask_is_a_no_op() {
        let x = BatchArray::from_f64(vec![1.0, 2.0, 3.0]);
        let dest = BatchArray::from_f64(vec![4.0, 5.0, 6.0]);
        let (m, g) = both(Builtin::Exp, &[Arg::Array(&x)], &LaneMask::empty(3), &dest);
        assert!(m.bit_eq(&dest));
        assert!(g.bit_eq(&dest));
    }

    #[test]
    fn full_mask_equals_plain_kernel() {
        let x = BatchArray::from_f64(vec![0.1, 0.2, 0.3]);
        let mut dest = BatchArray::zeros(Kind::F64, 3);
        apply_gather_scatter(&Builtin::Sin, &[Arg::Array(&x)], &LaneMask::full(3), &mut dest).unwrap();
        for b in 0..3 {
            assert_eq!(dest.value(b).to_string(), crate::runtime::Value::F64(x.value(b).as_lane().f64().sin()).to_string());
        }
    }

    #[test]
    fn lane_count_mismatch_is_a_fault() {
        let x = BatchArray::from_f64(vec![1.0, 2.0]);
        let mut dest = BatchArray::zeros(Kind::F64, 3);
        assert!(apply_masked(&Builtin::Neg, &[Arg::Array(&x)], &LaneMask::full(3), &mut dest).is_err());
    }
}
