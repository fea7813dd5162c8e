use thiserror::Error;

use super::array::{BatchArray, LaneMask};
use super::value::Kind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StackFault {
    #[error("stack overflow in lane {lane}")]
    Overflow { lane: usize },
    #[error("stack underflow in lane {lane}")]
    Underflow { lane: usize },
}

/// A variable with a per-lane stack of depth limit `D`.
///
/// Frame `d` of lane `b` lives at `store` lane `d * Z + b`. `top` caches the
/// top frame of each lane so reads never touch the D×Z store.
#[derive(Debug, Clone)]
pub struct StackedVar {
    depth: usize,
    lanes: usize,
    store: BatchArray,
    pointers: Vec<usize>,
    top: BatchArray,
}

impl StackedVar {
    pub fn new(kind: Kind, depth: usize, lanes: usize) -> Self {
        StackedVar {
            depth,
            lanes,
            store: BatchArray::zeros(kind, depth * lanes),
            pointers: vec![0; lanes],
            top: BatchArray::zeros(kind, lanes),
        }
    }

    pub fn kind(&self) -> Kind {
        self.top.kind()
    }

    pub fn depth_limit(&self) -> usize {
        self.depth
    }

    pub fn pointers(&self) -> &[usize] {
        &self.pointers
    }

    /// Push lane `b` of `values` for every `b` in `mask`.
    ///
    /// Checks every masked lane before writing, so a fault leaves the
    /// variable untouched.
    pub fn push(&mut self, values: &BatchArray, mask: &LaneMask) -> Result<(), StackFault> {
        if let Some(lane) = mask.iter().find(|&b| self.pointers[b] >= self.depth) {
            return Err(StackFault::Overflow { lane });
        }
        for b in mask.iter() {
            let slot = self.pointers[b] * self.lanes + b;
            self.store.copy_lane(slot, values, b);
            self.top.copy_lane(b, values, b);
            self.pointers[b] += 1;
        }
        Ok(())
    }

    pub fn pop(&mut self, mask: &LaneMask) -> Result<(), StackFault> {
        if let Some(lane) = mask.iter().find(|&b| self.pointers[b] == 0) {
            return Err(StackFault::Underflow { lane });
        }
        for b in mask.iter() {
            self.pointers[b] -= 1;
            if self.pointers[b] >= 1 {
                let slot = (self.pointers[b] - 1) * self.lanes + b;
                self.top.copy_lane(b, &self.store, slot);
            }
        }
        Ok(())
    }

    /// Overwrite the top frame in place. Writes through to the store so the
    /// cache stays coherent.
    pub fn update_top(&mut self, values: &BatchArray, mask: &LaneMask) -> Result<(), StackFault> {
        if let Some(lane) = mask.iter().find(|&b| self.pointers[b] == 0) {
            return Err(StackFault::Underflow { lane });
        }
        for b in mask.iter() {
            let slot = (self.pointers[b] - 1) * self.lanes + b;
            self.store.copy_lane(slot, values, b);
            self.top.copy_lane(b, values, b);
        }
        Ok(())
    }

    /// The cached top of every lane. Lanes with an empty stack hold junk.
    pub fn read_top(&self) -> &BatchArray {
        &self.top
    }

    /// Re-derive the top of each non-empty lane from the store.
    pub fn gather_top(&self) -> BatchArray {
        let mut out = self.top.clone();
        for b in 0..self.lanes {
            if self.pointers[b] >= 1 {
                out.copy_lane(b, &self.store, (self.pointers[b] - 1) * self.lanes + b);
            }
        }
        out
    }

    /// First lane whose cached top disagrees with the store, if any.
    pub fn incoherent_lane(&self) -> Option<usize> {
        let fresh = self.gather_top();
        (0..self.lanes).find(|&b| self.pointers[b] >= 1 && !fresh.value(b).bit_eq(&self.top.value(b)))
    }

    /// Frame `d` (0 = bottom) of lane `b`, if it exists.
    pub fn frame(&self, d: usize, b: usize) -> Option<super::value::Value> {
        (d < self.pointers[b]).then(|| self.store.value(d * self.lanes + b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_full_mask() {
        let mut s = StackedVar::new(Kind::I64, 2, 2);
        s.push(&BatchArray::from_i64(vec![5, 6]), &LaneMask::full(2)).unwrap();
        assert_eq!(s.pointers(), &[1, 1]);
        assert_eq!(s.read_top().as_i64().unwrap(), &[5, 6]);
        s.pop(&LaneMask::full(2)).unwrap();
        assert_eq!(s.pointers(), &[0, 0]);
    }

    #[test]
    fn partial_push_leaves_other_lane() {
        let mut s = StackedVar::new(Kind::I64, 2, 2);
        s.push(&BatchArray::from_i64(vec![1, 2]), &LaneMask::full(2)).unwrap();
        s.push(&BatchArray::from_i64(vec![8, 9]), &LaneMask::from_indices(2, &[0])).unwrap();
        assert_eq!(s.read_top().as_i64().unwrap(), &[8, 2]);
        assert_eq!(s.pointers(), &[2, 1]);
    }

    #[test]
    fn overflow_names_lane() {
        let mut s = StackedVar::new(Kind::I64, 2, 2);
        let v = BatchArray::from_i64(vec![0, 0]);
        let m0 = LaneMask::from_indices(2, &[0]);
        s.push(&v, &m0).unwrap();
        s.push(&v, &m0).unwrap();
        assert_eq!(s.push(&v, &m0), Err(StackFault::Overflow { lane: 0 }));
    }

    #[test]
    fn underflow_names_lane() {
        let mut s = StackedVar::new(Kind::F64, 2, 3);
        assert_eq!(s.pop(&LaneMask::from_indices(3, &[2])), Err(StackFault::Underflow { lane: 2 }));
    }

    #[test]
    fn lifo() {
        let mut s = StackedVar::new(Kind::F64, 4, 1);
        let m = LaneMask::full(1);
        s.push(&BatchArray::from_f64(vec![1.5]), &m).unwrap();
        s.push(&BatchArray::from_f64(vec![2.5]), &m).unwrap();
        s.pop(&m).unwrap();
        assert!(s.read_top().value(0).bit_eq(&super::super::Value::F64(1.5)));
        assert_eq!(s.incoherent_lane(), None);
    }
}
