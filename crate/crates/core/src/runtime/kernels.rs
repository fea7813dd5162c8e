use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::rng;
use super::value::{Kind, LaneMut, LaneRef, Literal, Value};

/// Static information about one kernel argument: its kind, plus the literal
/// value when the operand is an immediate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgInfo {
    pub kind: Kind,
    pub literal: Option<Literal>,
}

impl ArgInfo {
    pub fn of_kind(kind: Kind) -> Self {
        ArgInfo { kind, literal: None }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("kernel `{kernel}`: {message}")]
pub struct KernelError {
    pub kernel: String,
    pub message: String,
}

/// A primitive operation applied lane by lane.
///
/// Kernels are total: `eval` must never panic for inputs whose kinds were
/// accepted by `output_kind`, whatever the lane data, because masking runs
/// them on junk lanes.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn arity(&self) -> usize;
    fn output_kind(&self, args: &[ArgInfo]) -> Result<Kind, KernelError>;
    fn eval(&self, args: &[LaneRef<'_>], out: LaneMut<'_>);
}

/// Builtin primitive set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Min,
    Max,
    Abs,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Floor,
    Le,
    Lt,
    Eq,
    And,
    Or,
    Not,
    Select,
    Dot,
    Axpy,
    RngUniform,
    RngNormal,
    Id,
    ToFloat,
    ToInt,
    Slice,
    Concat,
    Elem,
    WriteSlot,
}

impl Builtin {
    pub const ALL: [Builtin; 32] = [
        Builtin::Add,
        Builtin::Sub,
        Builtin::Mul,
        Builtin::Div,
        Builtin::Neg,
        Builtin::Min,
        Builtin::Max,
        Builtin::Abs,
        Builtin::Sqrt,
        Builtin::Exp,
        Builtin::Log,
        Builtin::Sin,
        Builtin::Cos,
        Builtin::Floor,
        Builtin::Le,
        Builtin::Lt,
        Builtin::Eq,
        Builtin::And,
        Builtin::Or,
        Builtin::Not,
        Builtin::Select,
        Builtin::Dot,
        Builtin::Axpy,
        Builtin::RngUniform,
        Builtin::RngNormal,
        Builtin::Id,
        Builtin::ToFloat,
        Builtin::ToInt,
        Builtin::Slice,
        Builtin::Concat,
        Builtin::Elem,
        Builtin::WriteSlot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Add => "add",
            Builtin::Sub => "sub",
            Builtin::Mul => "mul",
            Builtin::Div => "div",
            Builtin::Neg => "neg",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Abs => "abs",
            Builtin::Sqrt => "sqrt",
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Sin => "sin",
            Builtin::Cos => "cos",
            Builtin::Floor => "floor",
            Builtin::Le => "le",
            Builtin::Lt => "lt",
            Builtin::Eq => "eq",
            Builtin::And => "and",
            Builtin::Or => "or",
            Builtin::Not => "not",
            Builtin::Select => "select",
            Builtin::Dot => "dot",
            Builtin::Axpy => "axpy",
            Builtin::RngUniform => "rng_uniform",
            Builtin::RngNormal => "rng_normal",
            Builtin::Id => "id",
            Builtin::ToFloat => "to_float",
            Builtin::ToInt => "to_int",
            Builtin::Slice => "slice",
            Builtin::Concat => "concat",
            Builtin::Elem => "elem",
            Builtin::WriteSlot => "write_slot",
        }
    }

    fn arity_of(self) -> usize {
        use Builtin::*;
        match self {
            Neg | Abs | Sqrt | Exp | Log | Sin | Cos | Floor | Not | Id | ToFloat | ToInt => 1,
            Add | Sub | Mul | Div | Min | Max | Le | Lt | Eq | And | Or | Dot | RngUniform
            | Concat | Elem => 2,
            Select | Axpy | RngNormal | Slice | WriteSlot => 3,
        }
    }

    fn err(self, message: impl Into<String>) -> KernelError {
        KernelError { kernel: self.name().to_string(), message: message.into() }
    }

    fn mismatch(self, kinds: &[Kind]) -> KernelError {
        let shown: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
        self.err(format!("unsupported argument kinds ({})", shown.join(", ")))
    }
}

fn is_numeric(k: Kind) -> bool {
    matches!(k, Kind::F64 | Kind::I64 | Kind::Vec(_))
}

fn is_floaty(k: Kind) -> bool {
    matches!(k, Kind::F64 | Kind::Vec(_))
}

fn flat_width(k: Kind) -> Option<usize> {
    match k {
        Kind::F64 => Some(1),
        Kind::Vec(n) => Some(n),
        _ => None,
    }
}

fn lane_slice<'a>(v: &'a LaneRef<'a>) -> &'a [f64] {
    match v {
        LaneRef::F64(x) => std::slice::from_ref(x),
        LaneRef::Vec(s) => s,
        other => panic!("expected float lane, got {other:?}"),
    }
}

fn float_unary(out: LaneMut<'_>, x: LaneRef<'_>, f: impl Fn(f64) -> f64) {
    match (out, x) {
        (LaneMut::F64(d), LaneRef::F64(a)) => *d = f(a),
        (LaneMut::Vec(d), LaneRef::Vec(a)) => {
            for (o, v) in d.iter_mut().zip(a) {
                *o = f(*v);
            }
        }
        (d, a) => panic!("bad unary lanes {a:?} -> {d:?}"),
    }
}

fn arith(
    out: LaneMut<'_>,
    a: LaneRef<'_>,
    b: LaneRef<'_>,
    ff: impl Fn(f64, f64) -> f64,
    fi: impl Fn(i64, i64) -> i64,
) {
    match (out, a, b) {
        (LaneMut::F64(d), LaneRef::F64(x), LaneRef::F64(y)) => *d = ff(x, y),
        (LaneMut::I64(d), LaneRef::I64(x), LaneRef::I64(y)) => *d = fi(x, y),
        (LaneMut::Vec(d), LaneRef::Vec(x), LaneRef::Vec(y)) => {
            for ((o, p), q) in d.iter_mut().zip(x).zip(y) {
                *o = ff(*p, *q);
            }
        }
        (LaneMut::Vec(d), LaneRef::F64(x), LaneRef::Vec(y)) => {
            for (o, q) in d.iter_mut().zip(y) {
                *o = ff(x, *q);
            }
        }
        (LaneMut::Vec(d), LaneRef::Vec(x), LaneRef::F64(y)) => {
            for (o, p) in d.iter_mut().zip(x) {
                *o = ff(*p, y);
            }
        }
        (d, x, y) => panic!("bad arithmetic lanes {x:?}, {y:?} -> {d:?}"),
    }
}

impl Kernel for Builtin {
    fn name(&self) -> &str {
        Builtin::name(*self)
    }

    fn arity(&self) -> usize {
        self.arity_of()
    }

    fn output_kind(&self, args: &[ArgInfo]) -> Result<Kind, KernelError> {
        use Builtin::*;
        if args.len() != self.arity_of() {
            return Err(self.err(format!("expected {} arguments, got {}", self.arity_of(), args.len())));
        }
        let kinds: Vec<Kind> = args.iter().map(|a| a.kind).collect();
        let bad = || self.mismatch(&kinds);
        let k = match (*self, kinds.as_slice()) {
            (Add | Sub | Div, [a, b]) if a == b && is_numeric(*a) => *a,
            (Mul, [a, b]) if a == b && is_numeric(*a) => *a,
            (Mul, [Kind::F64, Kind::Vec(n)]) | (Mul, [Kind::Vec(n), Kind::F64]) => Kind::Vec(*n),
            (Neg | Abs, [a]) if is_numeric(*a) => *a,
            (Sqrt | Exp | Log | Sin | Cos | Floor, [a]) if is_floaty(*a) => *a,
            (Min | Max, [a, b]) if a == b && matches!(a, Kind::F64 | Kind::I64) => *a,
            (Le | Lt, [a, b]) if a == b && matches!(a, Kind::F64 | Kind::I64) => Kind::Bool,
            (Eq, [a, b]) if a == b && matches!(a, Kind::F64 | Kind::I64 | Kind::Bool) => Kind::Bool,
            (And | Or, [Kind::Bool, Kind::Bool]) => Kind::Bool,
            (Not, [Kind::Bool]) => Kind::Bool,
            (Select, [Kind::Bool, a, b]) if a == b => *a,
            (Dot, [Kind::Vec(a), Kind::Vec(b)]) if a == b => Kind::F64,
            (Axpy, [Kind::F64, Kind::Vec(a), Kind::Vec(b)]) if a == b => Kind::Vec(*a),
            (RngUniform, [Kind::I64, Kind::I64]) => Kind::F64,
            (RngNormal, [Kind::I64, Kind::I64, Kind::Vec(n)]) => Kind::Vec(*n),
            (Id, [a]) => *a,
            (ToFloat, [Kind::I64 | Kind::F64]) => Kind::F64,
            (ToInt, [Kind::F64 | Kind::I64]) => Kind::I64,
            (Slice, [Kind::Vec(_), Kind::I64, Kind::I64]) => match args[2].literal {
                Some(Literal::Int(len)) if len >= 0 => Kind::Vec(len as usize),
                _ => return Err(self.err("slice length must be a non-negative integer literal")),
            },
            (Concat, [a, b]) => match (flat_width(*a), flat_width(*b)) {
                (Some(x), Some(y)) => Kind::Vec(x + y),
                _ => return Err(bad()),
            },
            (Elem, [Kind::Vec(_), Kind::I64]) => Kind::F64,
            (WriteSlot, [Kind::Vec(n), Kind::I64, v]) if flat_width(*v).is_some() => Kind::Vec(*n),
            _ => return Err(bad()),
        };
        Ok(k)
    }

    fn eval(&self, args: &[LaneRef<'_>], out: LaneMut<'_>) {
        use Builtin::*;
        match self {
            Add => arith(out, args[0], args[1], |a, b| a + b, i64::wrapping_add),
            Sub => arith(out, args[0], args[1], |a, b| a - b, i64::wrapping_sub),
            Mul => arith(out, args[0], args[1], |a, b| a * b, i64::wrapping_mul),
            // Integer division by zero yields 0 rather than trapping.
            Div => arith(out, args[0], args[1], |a, b| a / b, |a, b| {
                if b == 0 {
                    0
                } else {
                    a.wrapping_div(b)
                }
            }),
            Neg => match (out, args[0]) {
                (LaneMut::I64(d), LaneRef::I64(a)) => *d = a.wrapping_neg(),
                (o, a) => float_unary(o, a, |x| -x),
            },
            Abs => match (out, args[0]) {
                (LaneMut::I64(d), LaneRef::I64(a)) => *d = a.wrapping_abs(),
                (o, a) => float_unary(o, a, f64::abs),
            },
            Sqrt => float_unary(out, args[0], f64::sqrt),
            Exp => float_unary(out, args[0], f64::exp),
            Log => float_unary(out, args[0], f64::ln),
            Sin => float_unary(out, args[0], f64::sin),
            Cos => float_unary(out, args[0], f64::cos),
            Floor => float_unary(out, args[0], f64::floor),
            Min => arith(out, args[0], args[1], f64::min, std::cmp::min),
            Max => arith(out, args[0], args[1], f64::max, std::cmp::max),
            Le | Lt | Eq => {
                let r = match (args[0], args[1]) {
                    (LaneRef::F64(a), LaneRef::F64(b)) => match self {
                        Le => a <= b,
                        Lt => a < b,
                        _ => a == b,
                    },
                    (LaneRef::I64(a), LaneRef::I64(b)) => match self {
                        Le => a <= b,
                        Lt => a < b,
                        _ => a == b,
                    },
                    (LaneRef::Bool(a), LaneRef::Bool(b)) => a == b,
                    (a, b) => panic!("bad comparison lanes {a:?}, {b:?}"),
                };
                out.set_bool(r);
            }
            And => out.set_bool(args[0].bool() && args[1].bool()),
            Or => out.set_bool(args[0].bool() || args[1].bool()),
            Not => out.set_bool(!args[0].bool()),
            Select => out.assign(if args[0].bool() { args[1] } else { args[2] }),
            Dot => {
                let s = args[0].vec().iter().zip(args[1].vec()).map(|(a, b)| a * b).sum();
                out.set_f64(s);
            }
            Axpy => {
                let a = args[0].f64();
                let d = out.into_vec();
                for ((o, x), y) in d.iter_mut().zip(args[1].vec()).zip(args[2].vec()) {
                    *o = a * x + y;
                }
            }
            RngUniform => out.set_f64(rng::uniform(args[0].i64(), args[1].i64(), 0)),
            RngNormal => {
                let (key, counter) = (args[0].i64(), args[1].i64());
                for (i, o) in out.into_vec().iter_mut().enumerate() {
                    *o = rng::normal(key, counter, i as u64);
                }
            }
            Id => out.assign(args[0]),
            ToFloat => match args[0] {
                LaneRef::I64(v) => out.set_f64(v as f64),
                other => out.set_f64(other.f64()),
            },
            // Saturating cast; NaN maps to 0.
            ToInt => match args[0] {
                LaneRef::F64(v) => out.set_i64(v as i64),
                other => out.set_i64(other.i64()),
            },
            Slice => {
                let src = args[0].vec();
                let start = args[1].i64();
                for (i, o) in out.into_vec().iter_mut().enumerate() {
                    let idx = start.checked_add(i as i64).filter(|&j| j >= 0 && (j as usize) < src.len());
                    *o = idx.map_or(0.0, |j| src[j as usize]);
                }
            }
            Concat => {
                let (a, b) = (&args[0], &args[1]);
                let (a, b) = (lane_slice(a), lane_slice(b));
                let d = out.into_vec();
                d[..a.len()].copy_from_slice(a);
                d[a.len()..].copy_from_slice(b);
            }
            Elem => {
                let src = args[0].vec();
                let i = args[1].i64();
                let v = if i >= 0 && (i as usize) < src.len() { src[i as usize] } else { 0.0 };
                out.set_f64(v);
            }
            WriteSlot => {
                let d = out.into_vec();
                d.copy_from_slice(args[0].vec());
                let v = &args[2];
                let v = lane_slice(v);
                let slot = args[1].i64();
                if slot >= 0 {
                    let start = (slot as usize).saturating_mul(v.len());
                    if let Some(end) = start.checked_add(v.len()).filter(|&e| e <= d.len()) {
                        d[start..end].copy_from_slice(v);
                    }
                }
            }
        }
    }
}

/// Evaluate `kernel` on a single lane.
pub fn eval_lane(kernel: &dyn Kernel, infos: &[ArgInfo], args: &[LaneRef<'_>]) -> Result<Value, KernelError> {
    let kind = kernel.output_kind(infos)?;
    let mut out = Value::zero(kind);
    kernel.eval(args, out.as_lane_mut());
    Ok(out)
}

/// Name → kernel table consulted by validation and both engines.
#[derive(Debug, Clone)]
pub struct KernelRegistry {
    kernels: BTreeMap<String, Arc<dyn Kernel>>,
}

impl Default for KernelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl KernelRegistry {
    pub fn empty() -> Self {
        KernelRegistry { kernels: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for b in Builtin::ALL {
            r.register(Arc::new(b));
        }
        r
    }

    /// Add or replace a kernel under its own name.
    pub fn register(&mut self, kernel: Arc<dyn Kernel>) {
        self.kernels.insert(kernel.name().to_string(), kernel);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Kernel>> {
        self.kernels.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.kernels.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.kernels.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;


    fn run(b: Builtin, args: &[Value]) -> Value {
        let infos: Vec<ArgInfo> = args.iter().map(|v| ArgInfo::of_kind(v.kind())).collect();
        let k = b.output_kind(&infos).unwrap();
        let mut out = Value::zero(k);
        let lanes: Vec<LaneRef<'_>> = args.iter().map(Value::as_lane).collect();
        b.eval(&lanes, out.as_lane_mut());
        out
    }

    #[test]
    fn integer_division_by_zero_is_zero() {
        assert!(run(Builtin::Div, &[Value::I64(7), Value::I64(0)]).bit_eq(&Value::I64(0)));
        assert!(run(Builtin::Div, &[Value::I64(i64::MIN), Value::I64(-1)]).bit_eq(&Value::I64(i64::MIN)));
    }

    #[test]
    fn float_division_by_zero_is_ieee() {
        let v = run(Builtin::Div, &[Value::F64(1.0), Value::F64(0.0)]);
        assert!(v.bit_eq(&Value::F64(f64::INFINITY)));
    }

    #[test]
    fn slice_requires_literal_length() {
        let infos = [
            ArgInfo::of_kind(Kind::Vec(4)),
            ArgInfo::of_kind(Kind::I64),
            ArgInfo::of_kind(Kind::I64),
        ];
        assert!(Builtin::Slice.output_kind(&infos).is_err());
        let mut infos = infos;
        infos[2].literal = Some(Literal::Int(2));
        assert_eq!(Builtin::Slice.output_kind(&infos).unwrap(), Kind::Vec(2));
    }

    #[test]
    fn out_of_range_indexing_is_total() {
        let v = Value::Vec(vec![1.0, 2.0, 3.0]);
        assert!(run(Builtin::Elem, &[v.clone(), Value::I64(9)]).bit_eq(&Value::F64(0.0)));
        assert!(run(Builtin::Elem, &[v.clone(), Value::I64(-1)]).bit_eq(&Value::F64(0.0)));
        let w = run(Builtin::WriteSlot, &[v.clone(), Value::I64(5), Value::F64(9.0)]);
        assert!(w.bit_eq(&v));
        let w = run(Builtin::WriteSlot, &[v, Value::I64(1), Value::F64(9.0)]);
        assert!(w.bit_eq(&Value::Vec(vec![1.0, 9.0, 3.0])));
    }

    #[test]
    fn vector_helpers() {
        let a = Value::Vec(vec![1.0, 2.0]);
        let b = Value::Vec(vec![3.0, 4.0]);
        assert!(run(Builtin::Dot, &[a.clone(), b.clone()]).bit_eq(&Value::F64(11.0)));
        let c = run(Builtin::Axpy, &[Value::F64(2.0), a.clone(), b.clone()]);
        assert!(c.bit_eq(&Value::Vec(vec![5.0, 8.0])));
        let d = run(Builtin::Concat, &[a, Value::F64(7.0)]);
        assert!(d.bit_eq(&Value::Vec(vec![1.0, 2.0, 7.0])));
    }

    #[test]
    fn registry_has_every_builtin() {
        let r = KernelRegistry::with_builtins();
        for b in Builtin::ALL {
            assert_eq!(r.get(b.name()).unwrap().arity(), b.arity_of());
        }
    }
}
