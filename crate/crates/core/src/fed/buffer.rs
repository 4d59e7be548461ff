use std::collections::VecDeque;

/// Fixed-capacity FIFO; pushing past capacity evicts the oldest entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FifoBuffer<T> {
    capacity: usize,
    entries: VecDeque<T>,
}

impl<T> FifoBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        FifoBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    /// Appends `items` in order and returns how many entries were evicted,
    /// counting pushed items that never fit.
    pub fn push<I: IntoIterator<Item = T>>(&mut self, items: I) -> usize {
        let mut evicted = 0;
        for item in items {
            if self.capacity == 0 {
                evicted += 1;
                continue;
            }
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
                evicted += 1;
            }
            self.entries.push_back(item);
        }
        evicted
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overflow_from_empty() {
        let mut b = FifoBuffer::new(6400);
        assert_eq!(b.push(0..7000), 600);
        assert_eq!(b.len(), 6400);
        assert_eq!(b.iter().next(), Some(&600));
        assert_eq!(b.iter().last(), Some(&6999));
    }

    #[test]
    fn empty_push_is_a_no_op() {
        let mut b = FifoBuffer::new(3);
        b.push([1, 2]);
        let before = b.clone();
        assert_eq!(b.push(std::iter::empty()), 0);
        assert_eq!(b, before);
    }

    #[test]
    fn oldest_out() {
        let mut b = FifoBuffer::new(3);
        b.push(['a', 'b', 'c']);
        b.push(['d']);
        assert_eq!(b.iter().copied().collect::<String>(), "bcd");
    }

    proptest! {
        #[test]
        fn matches_naive_suffix(cap in 0usize..20, pushes in prop::collection::vec(0usize..30, 0..12)) {
            let mut b = FifoBuffer::new(cap);
            let mut all = Vec::new();
            let mut next = 0u32;
            for k in pushes {
                let before = b.len();
                let items: Vec<u32> = (next..next + k as u32).collect();
                next += k as u32;
                all.extend(items.iter().copied());
                let evicted = b.push(items);
                prop_assert_eq!(evicted, (before + k).saturating_sub(cap));
                prop_assert!(b.len() <= cap);
                let suffix = &all[all.len().saturating_sub(cap)..];
                prop_assert_eq!(b.iter().copied().collect::<Vec<_>>(), suffix.to_vec());
            }
        }
    }
}
