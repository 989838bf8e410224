const ARITY: usize = 8;

/// Eight sibling sums, one cache line.
#[derive(Debug, Clone, Copy, Default)]
#[repr(align(64))]
struct Line([f64; ARITY]);

/// Eight-ary sum tree over slot weights: `O(log n)` update and proportional
/// sampling with one cache line touched per level.
///
/// Node `i` of level `k` is `levels[k][i / 8].0[i % 8]`; its children form
/// line `i` of level `k + 1`. Level 0 holds only the root, the last level
/// holds the slots. Parents are recomputed from their children, never
/// adjusted incrementally.
#[derive(Debug, Clone)]
pub struct SumTree {
    depth: usize,
    levels: Vec<Vec<Line>>,
}

impl SumTree {
    pub fn with_capacity(n: usize) -> Self {
        let mut depth = 1;
        let mut cap = ARITY;
        while cap < n {
            cap *= ARITY;
            depth += 1;
        }
        let levels = (0..=depth)
            .map(|k| vec![Line::default(); (ARITY.pow(k as u32)).div_ceil(ARITY)])
            .collect();
        Self { depth, levels }
    }

    pub fn capacity(&self) -> usize {
        ARITY.pow(self.depth as u32)
    }

    pub fn total(&self) -> f64 {
        self.levels[0][0].0[0]
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.levels[self.depth][slot / ARITY].0[slot % ARITY]
    }

    /// Grows to hold at least `n` slots, keeping existing weights.
    pub fn reserve(&mut self, n: usize) {
        if n <= self.capacity() {
            return;
        }
        let old = std::mem::take(&mut self.levels[self.depth]);
        *self = Self::with_capacity(n);
        let leaves = &mut self.levels[self.depth];
        leaves[..old.len()].copy_from_slice(&old);
        self.rebuild_internal();
    }

    pub fn set(&mut self, slot: usize, w: f64) {
        debug_assert!(w >= 0.0);
        let mut i = slot;
        self.levels[self.depth][i / ARITY].0[i % ARITY] = w;
        for k in (0..self.depth).rev() {
            let sum: f64 = self.levels[k + 1][i / ARITY].0.iter().sum();
            i /= ARITY;
            self.levels[k][i / ARITY].0[i % ARITY] = sum;
        }
    }

    /// Replaces every leaf from `weight(slot)` and recomputes internal nodes.
    pub fn rebuild<F: FnMut(usize) -> f64>(&mut self, mut weight: F) {
        for (l, line) in self.levels[self.depth].iter_mut().enumerate() {
            for (j, w) in line.0.iter_mut().enumerate() {
                *w = weight(l * ARITY + j);
            }
        }
        self.rebuild_internal();
    }

    fn rebuild_internal(&mut self) {
        for k in (0..self.depth).rev() {
            let (upper, lower) = self.levels.split_at_mut(k + 1);
            for (i, child) in lower[0].iter().enumerate() {
                upper[k][i / ARITY].0[i % ARITY] = child.0.iter().sum();
            }
        }
    }

    /// Slot whose cumulative weight interval contains `x`, for `0 ≤ x < total`.
    /// Returns `None` only if rounding led past the last child or to an empty leaf.
    pub fn find(&self, mut x: f64) -> Option<usize> {
        let mut i = 0;
        for k in 1..=self.depth {
            let line = &self.levels[k][i].0;
            let mut next = None;
            for (j, &w) in line.iter().enumerate() {
                if x < w {
                    next = Some(j);
                    break;
                }
                x -= w;
            }
            i = i * ARITY + next?;
        }
        (self.get(i) > 0.0).then_some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_find_total() {
        let mut t = SumTree::with_capacity(5);
        assert_eq!(t.capacity(), 8);
        for (i, w) in [1.0, 2.0, 0.0, 3.0, 4.0].into_iter().enumerate() {
            t.set(i, w);
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.5), Some(0));
        assert_eq!(t.find(1.0), Some(1));
        assert_eq!(t.find(2.99), Some(1));
        assert_eq!(t.find(3.0), Some(3));
        assert_eq!(t.find(9.99), Some(4));
        assert_eq!(t.find(10.0), None);
        t.set(1, 0.0);
        assert_eq!(t.total(), 8.0);
        assert_eq!(t.find(1.5), Some(3));
    }

    #[test]
    fn reserve_keeps_weights() {
        let mut t = SumTree::with_capacity(2);
        t.set(0, 1.5);
        t.set(7, 2.5);
        t.reserve(9);
        assert_eq!(t.capacity(), 64);
        assert_eq!(t.total(), 4.0);
        t.set(40, 1.0);
        assert_eq!(t.find(4.5), Some(40));
        t.reserve(600);
        assert_eq!(t.capacity(), 4096);
        assert_eq!(t.total(), 5.0);
        assert_eq!(t.find(1.6), Some(7));
        assert_eq!(t.find(4.2), Some(40));
    }

    #[test]
    fn sampling_matches_brute_force() {
        let weights: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 * 0.5).collect();
        let mut t = SumTree::with_capacity(1);
        t.reserve(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            t.set(i, w);
        }
        let total: f64 = weights.iter().sum();
        assert!((t.total() - total).abs() < 1e-9);
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                assert_eq!(t.find(acc + 0.25 * w), Some(i));
            }
            acc += w;
        }
    }
}
