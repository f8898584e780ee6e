//! Dense rank-r tensors at chart dimension.

/// Variance annotation for one tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// A dense numeric tensor of shape `dim^rank` with per-slot variance
/// annotations. Houses `g_ij`, `C_ijk`, `L_ijk`, `Γ^k_jm`, the B-tensors and
/// `R^i_k`; symmetry of the housed quantity is a property of the values, not
/// enforced by the container.
#[derive(Debug, Clone)]
pub struct DenseTensor {
    dim: usize,
    variance: Vec<Slot>,
    entries: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dim: usize, variance: &[Slot]) -> DenseTensor {
        let len = dim.pow(variance.len() as u32);
        DenseTensor {
            dim,
            variance: variance.to_vec(),
            entries: vec![0.0; len],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Slot] {
        &self.variance
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        let mut off = 0;
        for &i in idx {
            debug_assert!(i < self.dim);
            off = off * self.dim + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.entries[off] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Contract the given slot with a vector, producing a rank-(r-1) tensor.
    pub fn contract(&self, slot: usize, v: &[f64]) -> DenseTensor {
        assert!(slot < self.rank());
        assert_eq!(v.len(), self.dim);
        let mut variance = self.variance.clone();
        variance.remove(slot);
        let mut out = DenseTensor::zeros(self.dim, &variance);
        let r = self.rank();
        let mut idx = vec![0usize; r];
        loop {
            let mut out_idx = Vec::with_capacity(r - 1);
            for (k, &i) in idx.iter().enumerate() {
                if k != slot {
                    out_idx.push(i);
                }
            }
            let off = out.offset(&out_idx);
            out.entries[off] += self.get(&idx) * v[idx[slot]];
            // advance odometer
            let mut k = r;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.dim {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Maximum asymmetry between two slots, normalized by `max|entries| + 1`.
    pub fn symmetry_defect(&self, slot_a: usize, slot_b: usize) -> f64 {
        let r = self.rank();
        let scale = self.max_abs() + 1.0;
        let mut worst = 0.0f64;
        let mut idx = vec![0usize; r];
        loop {
            let mut swapped = idx.clone();
            swapped.swap(slot_a, slot_b);
            let d = (self.get(&idx) - self.get(&swapped)).abs() / scale;
            worst = worst.max(d);
            let mut k = r;
            loop {
                if k == 0 {
                    return worst;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.dim {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Matrix view helpers for rank-2 tensors.
    pub fn as_matrix(&self) -> &[f64] {
        assert_eq!(self.rank(), 2);
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_drops_one_slot() {
        let mut t = DenseTensor::zeros(2, &[Slot::Down, Slot::Down]);
        t.set(&[0, 0], 1.0);
        t.set(&[0, 1], 2.0);
        t.set(&[1, 0], 3.0);
        t.set(&[1, 1], 4.0);
        let v = t.contract(1, &[10.0, 100.0]);
        assert_eq!(v.rank(), 1);
        assert_eq!(v.get(&[0]), 210.0);
        assert_eq!(v.get(&[1]), 430.0);
    }

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let mut t = DenseTensor::zeros(2, &[Slot::Down, Slot::Down]);
        t.set(&[0, 1], 1.0);
        t.set(&[1, 0], 1.0);
        assert_eq!(t.symmetry_defect(0, 1), 0.0);
        t.set(&[1, 0], 1.5);
        assert!(t.symmetry_defect(0, 1) > 0.0);
    }
}
