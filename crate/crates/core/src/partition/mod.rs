//! Set partitions, reduced partitions and the Chinese-restaurant-franchise
//! state of the partition sequence.

mod crf;

pub use crf::{Allowed, DishId, PartitionSequence, Predictive, Removal, UNASSIGNED};

use serde::{Deserialize, Serialize};

/// A partition of `0..n` stored as canonical labels: blocks are numbered in
/// order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition(Vec<u32>);

impl Partition {
    /// Canonicalize arbitrary labels.
    pub fn from_labels<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> Self {
        let mut map = std::collections::HashMap::with_capacity(labels.len());
        let out = labels
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition(out)
    }

    pub fn labels(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.0.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &l in &self.0 {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.0[a] == self.0[b]
    }
}

/// Restriction of `labels` to the items in `subset` (taken in the given
/// order), relabelled canonically.
pub fn reduced_partition<T: Copy + Eq + std::hash::Hash>(labels: &[T], subset: &[usize]) -> Partition {
    let picked: Vec<T> = subset.iter().map(|&i| labels[i]).collect();
    Partition::from_labels(&picked)
}

/// Whether `prev` and `curr` induce the same partition on `subset`.
pub fn is_compatible<A, B>(prev: &[A], curr: &[B], subset: &[usize]) -> bool
where
    A: Copy + Eq + std::hash::Hash,
    B: Copy + Eq + std::hash::Hash,
{
    reduced_partition(prev, subset) == reduced_partition(curr, subset)
}

/// Every partition of `n` items, as restricted-growth strings. There are
/// Bell(n) of them, so keep `n` small.
pub fn enumerate_partitions(n: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    if n == 0 {
        out.push(Partition(Vec::new()));
        return out;
    }
    let mut labels = vec![0u32; n];
    fn rec(pos: usize, max: u32, labels: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if pos == labels.len() {
            out.push(Partition(labels.clone()));
            return;
        }
        for l in 0..=max + 1 {
            labels[pos] = l;
            rec(pos + 1, max.max(l), labels, out);
        }
    }
    rec(1, 0, &mut labels, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reduced_examples() {
        assert_eq!(reduced_partition(&[1, 1, 2], &[0, 1]).labels(), &[0, 0]);
        assert!(reduced_partition(&[1, 2, 2], &[]).is_empty());
        assert_eq!(reduced_partition(&[1, 2, 1, 3], &[1, 2, 3]).labels(), &[0, 1, 2]);
    }

    #[test]
    fn compatibility_examples() {
        let prev = [1, 1, 2];
        let curr = [1, 2, 2];
        assert!(is_compatible(&prev, &prev, &[0, 1, 2]));
        assert!(is_compatible(&prev, &curr, &[0, 2]));
        assert!(!is_compatible(&prev, &curr, &[0, 1]));
    }

    #[test]
    fn bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(enumerate_partitions(n).len(), b);
        }
    }

    proptest! {
        #[test]
        fn reduction_is_idempotent(labels in proptest::collection::vec(0u8..5, 1..12), mask in any::<u16>()) {
            let subset: Vec<usize> = (0..labels.len()).filter(|k| mask >> k & 1 == 1).collect();
            let once = reduced_partition(&labels, &subset);
            let all: Vec<usize> = (0..once.len()).collect();
            prop_assert_eq!(reduced_partition(once.labels(), &all), once.clone());
            prop_assert_eq!(Partition::from_labels(once.labels()), once);
        }

        #[test]
        fn compatibility_is_label_invariant(labels in proptest::collection::vec(0u8..4, 1..10), shift in 1u8..50) {
            let relabelled: Vec<u8> = labels.iter().map(|l| l.wrapping_mul(7).wrapping_add(shift)).collect();
            let all: Vec<usize> = (0..labels.len()).collect();
            prop_assert!(is_compatible(&labels, &relabelled, &all));
        }
    }
}
