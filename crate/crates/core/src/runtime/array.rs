use super::value::{Kind, LaneMut, LaneRef, Value};

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    F64(Vec<f64>),
    I64(Vec<i64>),
    Bool(Vec<bool>),
}

/// One value per batch lane, stored contiguously with the lane as the
/// leading dimension. Vector lanes are stored as `width` consecutive f64s.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchArray {
    kind: Kind,
    lanes: usize,
    data: Storage,
}

impl BatchArray {
    pub fn zeros(kind: Kind, lanes: usize) -> Self {
        let data = match kind {
            Kind::F64 | Kind::Vec(_) => Storage::F64(vec![0.0; lanes * kind.width()]),
            Kind::I64 => Storage::I64(vec![0; lanes]),
            Kind::Bool => Storage::Bool(vec![false; lanes]),
        };
        BatchArray { kind, lanes, data }
    }

    pub fn from_f64(values: Vec<f64>) -> Self {
        BatchArray { kind: Kind::F64, lanes: values.len(), data: Storage::F64(values) }
    }

    pub fn from_i64(values: Vec<i64>) -> Self {
        BatchArray { kind: Kind::I64, lanes: values.len(), data: Storage::I64(values) }
    }

    pub fn from_bool(values: Vec<bool>) -> Self {
        BatchArray { kind: Kind::Bool, lanes: values.len(), data: Storage::Bool(values) }
    }

    /// Build a vector-kind array from per-lane rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let width = rows.first()?.len();
        if rows.iter().any(|r| r.len() != width) {
            return None;
        }
        let flat = rows.iter().flatten().copied().collect();
        Some(BatchArray { kind: Kind::Vec(width), lanes: rows.len(), data: Storage::F64(flat) })
    }

    /// Build from owned per-lane values; all values must share one kind.
    pub fn from_values(values: &[Value]) -> Option<Self> {
        let kind = values.first()?.kind();
        if values.iter().any(|v| v.kind() != kind) {
            return None;
        }
        let mut out = BatchArray::zeros(kind, values.len());
        for (b, v) in values.iter().enumerate() {
            out.lane_mut(b).assign(v.as_lane());
        }
        Some(out)
    }

    /// Broadcast a single value to `lanes` lanes.
    pub fn splat(value: &Value, lanes: usize) -> Self {
        let mut out = BatchArray::zeros(value.kind(), lanes);
        for b in 0..lanes {
            out.lane_mut(b).assign(value.as_lane());
        }
        out
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn lane(&self, b: usize) -> LaneRef<'_> {
        match &self.data {
            Storage::F64(d) => match self.kind {
                Kind::Vec(k) => LaneRef::Vec(&d[b * k..(b + 1) * k]),
                _ => LaneRef::F64(d[b]),
            },
            Storage::I64(d) => LaneRef::I64(d[b]),
            Storage::Bool(d) => LaneRef::Bool(d[b]),
        }
    }

    pub fn lane_mut(&mut self, b: usize) -> LaneMut<'_> {
        match &mut self.data {
            Storage::F64(d) => match self.kind {
                Kind::Vec(k) => LaneMut::Vec(&mut d[b * k..(b + 1) * k]),
                _ => LaneMut::F64(&mut d[b]),
            },
            Storage::I64(d) => LaneMut::I64(&mut d[b]),
            Storage::Bool(d) => LaneMut::Bool(&mut d[b]),
        }
    }

    pub fn value(&self, b: usize) -> Value {
        self.lane(b).to_value()
    }

    pub fn to_values(&self) -> Vec<Value> {
        (0..self.lanes).map(|b| self.value(b)).collect()
    }

    /// Copy lane `src_lane` of `src` into lane `dst_lane` of `self`.
    pub fn copy_lane(&mut self, dst_lane: usize, src: &BatchArray, src_lane: usize) {
        debug_assert_eq!(self.kind, src.kind);
        match (&mut self.data, &src.data) {
            (Storage::F64(d), Storage::F64(s)) => {
                let k = self.kind.width();
                d[dst_lane * k..(dst_lane + 1) * k]
                    .copy_from_slice(&s[src_lane * k..(src_lane + 1) * k]);
            }
            (Storage::I64(d), Storage::I64(s)) => d[dst_lane] = s[src_lane],
            (Storage::Bool(d), Storage::Bool(s)) => d[dst_lane] = s[src_lane],
            _ => panic!("kind mismatch: {} vs {}", self.kind, src.kind),
        }
    }

    /// Overwrite the lanes selected by `mask` with the same lanes of `src`.
    pub fn assign_masked(&mut self, src: &BatchArray, mask: &LaneMask) {
        for b in mask.iter() {
            self.copy_lane(b, src, b);
        }
    }

    /// Pack the lanes listed in `indices` into a smaller array.
    pub fn gather(&self, indices: &[usize]) -> BatchArray {
        let mut out = BatchArray::zeros(self.kind, indices.len());
        for (i, &b) in indices.iter().enumerate() {
            out.copy_lane(i, self, b);
        }
        out
    }

    /// Inverse of [`gather`](Self::gather): lane `i` of `packed` goes to `indices[i]`.
    pub fn scatter(&mut self, indices: &[usize], packed: &BatchArray) {
        for (i, &b) in indices.iter().enumerate() {
            self.copy_lane(b, packed, i);
        }
    }

    /// Lane-wise bit equality.
    pub fn bit_eq(&self, other: &BatchArray) -> bool {
        self.kind == other.kind
            && self.lanes == other.lanes
            && (0..self.lanes).all(|b| self.value(b).bit_eq(&other.value(b)))
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match &self.data {
            Storage::I64(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_i64_mut(&mut self) -> Option<&mut [i64]> {
        match &mut self.data {
            Storage::I64(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<&[bool]> {
        match &self.data {
            Storage::Bool(d) => Some(d),
            _ => None,
        }
    }
}

/// Which lanes take part in an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneMask {
    bits: Vec<bool>,
}

impl LaneMask {
    pub fn full(lanes: usize) -> Self {
        LaneMask { bits: vec![true; lanes] }
    }

    pub fn empty(lanes: usize) -> Self {
        LaneMask { bits: vec![false; lanes] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        LaneMask { bits }
    }

    pub fn from_indices(lanes: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; lanes];
        for &i in indices {
            bits[i] = true;
        }
        LaneMask { bits }
    }

    pub fn lanes(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, b: usize) -> bool {
        self.bits[b]
    }

    pub fn set(&mut self, b: usize, on: bool) {
        self.bits[b] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&x| x).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&x| x)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &on)| on).map(|(b, _)| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_scatter_round_trip() {
        let a = BatchArray::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let packed = a.gather(&[2, 0]);
        assert_eq!(packed.value(0).to_string(), Value::Vec(vec![5.0, 6.0]).to_string());
        let mut b = BatchArray::zeros(Kind::Vec(2), 3);
        b.scatter(&[2, 0], &packed);
        assert!(b.value(1).bit_eq(&Value::Vec(vec![0.0, 0.0])));
        assert!(b.value(0).bit_eq(&a.value(0)));
        assert!(b.value(2).bit_eq(&a.value(2)));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(BatchArray::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
