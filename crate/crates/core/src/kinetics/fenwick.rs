/// Fenwick tree over non-negative integer site rates with O(log n) point
/// updates and weighted site selection.
#[derive(Debug, Clone)]
pub struct RateTree {
    // 1-based implicit tree; tree[0] unused
    tree: Vec<u64>,
    values: Vec<u64>,
    total: u64,
    top_bit: usize,
}

impl RateTree {
    pub fn new(values: &[u64]) -> Self {
        let n = values.len();
        let mut tree = vec![0u64; n + 1];
        tree[1..].copy_from_slice(values);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] = tree[parent].wrapping_add(tree[i]);
            }
        }
        let top_bit = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self { tree, values: values.to_vec(), total: values.iter().sum(), top_bit }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, index: usize) -> u64 {
        self.values[index]
    }

    pub fn set(&mut self, index: usize, value: u64) {
        let delta = value.wrapping_sub(self.values[index]);
        if delta == 0 {
            return;
        }
        self.values[index] = value;
        self.total = self.total.wrapping_add(delta);
        let mut i = index + 1;
        let n = self.values.len();
        while i <= n {
            self.tree[i] = self.tree[i].wrapping_add(delta);
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of the first `count` values.
    pub fn prefix_sum(&self, count: usize) -> u64 {
        let mut i = count;
        let mut sum = 0u64;
        while i > 0 {
            sum = sum.wrapping_add(self.tree[i]);
            i &= i - 1;
        }
        sum
    }

    /// Smallest index `i` with `prefix_sum(i + 1) > target`. Requires
    /// `target < total()`.
    #[inline]
    pub fn find(&self, mut target: u64) -> usize {
        debug_assert!(target < self.total);
        let n = self.values.len();
        let mut pos = 0usize;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}
