//! Weighted cumulative-sum index (binary indexed tree) over queue indices.
//!
//! The engine keeps one weight per occupied queue and selects the next
//! event by inverting a uniform draw against the prefix sums, O(log n) per
//! event. Raw weights are retained so the tree can be rebuilt periodically,
//! which bounds floating-point drift from long add/remove sequences.

/// Rebuild cadence, in updates.
const REBUILD_EVERY: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct WeightedIndex {
    tree: Vec<f64>,    // 1-indexed
    weights: Vec<f64>, // 1-indexed raw weights, entry 0 unused
    total: f64,
    updates: u64,
}

impl WeightedIndex {
    /// Index over positions `1..=capacity`, all weights zero.
    pub fn new(capacity: usize) -> Self {
        WeightedIndex {
            tree: vec![0.0; capacity + 1],
            weights: vec![0.0; capacity + 1],
            total: 0.0,
            updates: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Set the weight at position `i` (1-indexed).
    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(i >= 1 && i <= self.capacity());
        debug_assert!(w >= 0.0);
        let delta = w - self.weights[i];
        self.weights[i] = w;
        let mut idx = i;
        while idx < self.tree.len() {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
        self.total += delta;
        self.updates += 1;
        if self.updates % REBUILD_EVERY == 0 {
            self.rebuild();
        }
    }

    /// Grow to at least `capacity`, preserving weights.
    pub fn grow(&mut self, capacity: usize) {
        if capacity <= self.capacity() {
            return;
        }
        self.weights.resize(capacity + 1, 0.0);
        self.rebuild();
    }

    /// Recompute the tree and total from the raw weights.
    pub fn rebuild(&mut self) {
        let n = self.weights.len();
        self.tree.clear();
        self.tree.resize(n, 0.0);
        self.total = 0.0;
        for i in 1..n {
            let w = self.weights[i];
            self.total += w;
            self.tree[i] += w;
            let j = i + (i & i.wrapping_neg());
            if j < n {
                let add = self.tree[i];
                self.tree[j] += add;
            }
        }
    }

    /// Smallest position `i` with `prefix_sum(i) > target`, together with
    /// the remainder `target - prefix_sum(i - 1)` (in `[0, weight_i)`).
    ///
    /// Requires `0 <= target < total()` and at least one positive weight.
    pub fn find(&self, target: f64) -> (usize, f64) {
        debug_assert!(target >= 0.0);
        let n = self.capacity();
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = n.next_power_of_two();
        if step > n {
            step >>= 1;
        }
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                rem -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        let mut i = pos + 1;
        // Guard against target landing exactly on the total due to
        // floating-point roundoff: fall back to the last positive weight.
        if i > n || self.weights[i] <= 0.0 {
            i = (1..=n).rev().find(|&j| self.weights[j] > 0.0).unwrap_or(1);
            rem = 0.0;
        }
        (i, rem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_inversion() {
        let mut idx = WeightedIndex::new(8);
        // Positions: 1 -> 0, 2 -> 2.0, 3 -> 0, 4 -> 1.0, 5 -> 0.5,
        // 6..7 -> 0, 8 -> 3.0.
        let ws = [0.0, 2.0, 0.0, 1.0, 0.5, 0.0, 0.0, 3.0];
        for (i, &w) in ws.iter().enumerate() {
            idx.set(i + 1, w);
        }
        assert!((idx.total() - 6.5).abs() < 1e-12);
        let cases = [
            (0.0, 2),
            (1.9999, 2),
            (2.0, 4),
            (2.5, 4),
            (3.0, 5),
            (3.49, 5),
            (3.5, 8),
            (6.4999, 8),
        ];
        for &(t, want) in &cases {
            let (got, rem) = idx.find(t);
            assert_eq!(got, want, "target {t}");
            assert!(rem >= 0.0 && rem < idx.get(got) + 1e-12);
        }
    }

    #[test]
    fn update_and_grow() {
        let mut idx = WeightedIndex::new(4);
        idx.set(2, 1.0);
        idx.set(4, 2.0);
        idx.grow(16);
        idx.set(11, 4.0);
        assert!((idx.total() - 7.0).abs() < 1e-12);
        assert_eq!(idx.find(3.0).0, 11);
        idx.set(2, 0.0);
        assert_eq!(idx.find(0.0).0, 4);
    }

    #[test]
    fn rebuild_matches_incremental() {
        let mut idx = WeightedIndex::new(33);
        for i in 1..=33 {
            idx.set(i, (i % 5) as f64 * 0.25);
        }
        let before: Vec<(usize, f64)> = (0..40)
            .map(|j| {
                let t = idx.total() * (j as f64) / 40.0;
                idx.find(t)
            })
            .collect();
        idx.rebuild();
        for (j, &(pos, rem)) in before.iter().enumerate() {
            let t = idx.total() * (j as f64) / 40.0;
            let (p2, r2) = idx.find(t);
            assert_eq!(pos, p2);
            assert!((rem - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn total_boundary_falls_back_to_positive_weight() {
        let mut idx = WeightedIndex::new(4);
        idx.set(3, 1.5);
        let (i, _) = idx.find(1.5 - 1e-18);
        assert_eq!(i, 3);
    }
}
