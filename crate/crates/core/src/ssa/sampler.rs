//! Categorical draws over the active channels of one event.

/// Active-channel count above which selection goes through a Fenwick tree.
pub const TREE_THRESHOLD: usize = 64;

/// Picks index `i` with probability `rates[i] / ∑ rates` by inverting the
/// cumulative distribution at `target ∈ [0, ∑ rates)`.
#[derive(Debug, Default)]
pub struct ChannelSampler {
    tree: Vec<f64>,
}

impl ChannelSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pick(&mut self, rates: impl ExactSizeIterator<Item = f64> + Clone, target: f64) -> usize {
        if rates.len() > TREE_THRESHOLD {
            self.pick_tree(rates, target)
        } else {
            pick_linear(rates, target)
        }
    }

    fn pick_tree(&mut self, rates: impl ExactSizeIterator<Item = f64>, target: f64) -> usize {
        let n = rates.len();
        self.tree.clear();
        self.tree.push(0.0);
        self.tree.extend(rates);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
        let mut pos = 0;
        let mut rem = target;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        // rounding can push the target past the last positive rate
        pos.min(n - 1)
    }
}

/// Linear-scan inversion of the cumulative rates.
pub fn pick_linear(rates: impl Iterator<Item = f64>, target: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, r) in rates.enumerate() {
        if r > 0.0 {
            last_positive = i;
        }
        acc += r;
        if target < acc {
            return i;
        }
    }
    last_positive
}
