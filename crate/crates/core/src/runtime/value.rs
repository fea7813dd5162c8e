use std::fmt;

use serde::{Deserialize, Serialize};

/// Per-lane type of a variable. Vectors are f64 with a static length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    F64,
    I64,
    Bool,
    Vec(usize),
}

impl Kind {
    /// Number of f64 slots one lane occupies (1 for scalars).
    pub fn width(self) -> usize {
        match self {
            Kind::Vec(k) => k,
            _ => 1,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::F64 => f.write_str("f64"),
            Kind::I64 => f.write_str("i64"),
            Kind::Bool => f.write_str("bool"),
            Kind::Vec(k) => write!(f, "vec[{k}]"),
        }
    }
}

/// An immediate operand in the IR.
///
/// Equality is bitwise for floats so that printed and re-parsed programs
/// compare equal even when they carry NaN or signed zero.
#[derive(Debug, Clone, Copy)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Literal::Int(a), Literal::Int(b)) => a == b,
            (Literal::Float(a), Literal::Float(b)) => a.to_bits() == b.to_bits(),
            (Literal::Bool(a), Literal::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Literal {}

impl Literal {
    pub fn kind(self) -> Kind {
        match self {
            Literal::Int(_) => Kind::I64,
            Literal::Float(_) => Kind::F64,
            Literal::Bool(_) => Kind::Bool,
        }
    }

    pub fn as_lane(self) -> LaneRef<'static> {
        match self {
            Literal::Int(v) => LaneRef::I64(v),
            Literal::Float(v) => LaneRef::F64(v),
            Literal::Bool(v) => LaneRef::Bool(v),
        }
    }

    pub fn to_value(self) -> Value {
        match self {
            Literal::Int(v) => Value::I64(v),
            Literal::Float(v) => Value::F64(v),
            Literal::Bool(v) => Value::Bool(v),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Bool(v) => write!(f, "{v}"),
            Literal::Float(v) if v.is_nan() => write!(f, "nan(0x{:016x})", v.to_bits()),
            Literal::Float(v) if v == f64::INFINITY => f.write_str("inf"),
            Literal::Float(v) if v == f64::NEG_INFINITY => f.write_str("-inf"),
            // Debug formatting is the shortest round-tripping repr and always
            // carries a '.' or an exponent, which keeps floats distinct from ints.
            Literal::Float(v) => write!(f, "{v:?}"),
        }
    }
}

/// An owned single-lane value.
#[derive(Debug, Clone)]
pub enum Value {
    F64(f64),
    I64(i64),
    Bool(bool),
    Vec(Vec<f64>),
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::F64(_) => Kind::F64,
            Value::I64(_) => Kind::I64,
            Value::Bool(_) => Kind::Bool,
            Value::Vec(v) => Kind::Vec(v.len()),
        }
    }

    pub fn zero(kind: Kind) -> Value {
        match kind {
            Kind::F64 => Value::F64(0.0),
            Kind::I64 => Value::I64(0),
            Kind::Bool => Value::Bool(false),
            Kind::Vec(k) => Value::Vec(vec![0.0; k]),
        }
    }

    pub fn as_lane(&self) -> LaneRef<'_> {
        match self {
            Value::F64(v) => LaneRef::F64(*v),
            Value::I64(v) => LaneRef::I64(*v),
            Value::Bool(v) => LaneRef::Bool(*v),
            Value::Vec(v) => LaneRef::Vec(v),
        }
    }

    pub fn as_lane_mut(&mut self) -> LaneMut<'_> {
        match self {
            Value::F64(v) => LaneMut::F64(v),
            Value::I64(v) => LaneMut::I64(v),
            Value::Bool(v) => LaneMut::Bool(v),
            Value::Vec(v) => LaneMut::Vec(v),
        }
    }

    /// Bitwise equality (floats compared by bit pattern).
    pub fn bit_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::F64(a), Value::F64(b)) => a.to_bits() == b.to_bits(),
            (Value::I64(a), Value::I64(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Vec(a), Value::Vec(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }

    /// Exact for ints and bools, relative tolerance `rel` for floats.
    pub fn approx_eq(&self, other: &Value, rel: f64) -> bool {
        fn close(a: f64, b: f64, rel: f64) -> bool {
            if a.to_bits() == b.to_bits() || a == b {
                return true;
            }
            if a.is_nan() && b.is_nan() {
                return true;
            }
            (a - b).abs() <= rel * a.abs().max(b.abs())
        }
        match (self, other) {
            (Value::F64(a), Value::F64(b)) => close(*a, *b, rel),
            (Value::Vec(a), Value::Vec(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, rel))
            }
            _ => self.bit_eq(other),
        }
    }
}

impl fmt::Display for Value {
    /// Floats are printed with 17 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::F64(v) => write!(f, "{v:.16e}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Vec(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x:.16e}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Borrowed view of one lane, handed to kernels.
#[derive(Debug, Clone, Copy)]
pub enum LaneRef<'a> {
    F64(f64),
    I64(i64),
    Bool(bool),
    Vec(&'a [f64]),
}

impl<'a> LaneRef<'a> {
    pub fn to_value(self) -> Value {
        match self {
            LaneRef::F64(v) => Value::F64(v),
            LaneRef::I64(v) => Value::I64(v),
            LaneRef::Bool(v) => Value::Bool(v),
            LaneRef::Vec(v) => Value::Vec(v.to_vec()),
        }
    }

    pub fn f64(self) -> f64 {
        match self {
            LaneRef::F64(v) => v,
            other => panic!("expected f64 lane, got {other:?}"),
        }
    }

    pub fn i64(self) -> i64 {
        match self {
            LaneRef::I64(v) => v,
            other => panic!("expected i64 lane, got {other:?}"),
        }
    }

    pub fn bool(self) -> bool {
        match self {
            LaneRef::Bool(v) => v,
            other => panic!("expected bool lane, got {other:?}"),
        }
    }

    pub fn vec(self) -> &'a [f64] {
        match self {
            LaneRef::Vec(v) => v,
            other => panic!("expected vector lane, got {other:?}"),
        }
    }
}

/// Mutable destination slot for one lane of kernel output.
#[derive(Debug)]
pub enum LaneMut<'a> {
    F64(&'a mut f64),
    I64(&'a mut i64),
    Bool(&'a mut bool),
    Vec(&'a mut [f64]),
}

impl<'a> LaneMut<'a> {
    pub fn set_f64(self, v: f64) {
        match self {
            LaneMut::F64(d) => *d = v,
            other => panic!("expected f64 destination, got {other:?}"),
        }
    }

    pub fn set_i64(self, v: i64) {
        match self {
            LaneMut::I64(d) => *d = v,
            other => panic!("expected i64 destination, got {other:?}"),
        }
    }

    pub fn set_bool(self, v: bool) {
        match self {
            LaneMut::Bool(d) => *d = v,
            other => panic!("expected bool destination, got {other:?}"),
        }
    }

    pub fn into_vec(self) -> &'a mut [f64] {
        match self {
            LaneMut::Vec(d) => d,
            other => panic!("expected vector destination, got {other:?}"),
        }
    }

    /// Copy a lane value of the same kind into this slot.
    pub fn assign(self, v: LaneRef<'_>) {
        match (self, v) {
            (LaneMut::F64(d), LaneRef::F64(s)) => *d = s,
            (LaneMut::I64(d), LaneRef::I64(s)) => *d = s,
            (LaneMut::Bool(d), LaneRef::Bool(s)) => *d = s,
            (LaneMut::Vec(d), LaneRef::Vec(s)) => d.copy_from_slice(s),
            (d, s) => panic!("kind mismatch assigning {s:?} into {d:?}"),
        }
    }
}
