//! Slot occupancy as a bitset with lazily rebuilt per-word prefix counts.
//!
//! Inserting or removing a slot flips one bit. The first rank or select
//! query after a batch of changes rebuilds the prefix counts in
//! `O(len / 64)`; later queries cost `O(1)` (rank) and `O(log len)` (select)
//! until the next change. The simulator changes slots on every jump but only
//! asks for ranks at observation times.

use core::cell::OnceCell;

use alloc::vec;
use alloc::vec::Vec;

const WORD: usize = 64;

#[derive(Debug, Clone)]
pub struct Occupancy {
    words: Vec<u64>,
    // prefix[w] = occupied slots in words[..w]; one extra entry for the total.
    prefix: OnceCell<Vec<u32>>,
    len: usize,
}

impl Occupancy {
    /// `len` slots with exactly `range` occupied.
    pub fn with_range(len: usize, range: core::ops::Range<usize>) -> Self {
        let mut words = vec![0u64; len.div_ceil(WORD)];
        for slot in range {
            words[slot / WORD] |= 1 << (slot % WORD);
        }
        Self { words, prefix: OnceCell::new(), len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, slot: usize) -> bool {
        self.words[slot / WORD] >> (slot % WORD) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, slot: usize) {
        debug_assert!(!self.contains(slot));
        self.words[slot / WORD] |= 1 << (slot % WORD);
        self.prefix.take();
    }

    #[inline]
    pub fn remove(&mut self, slot: usize) {
        debug_assert!(self.contains(slot));
        self.words[slot / WORD] &= !(1 << (slot % WORD));
        self.prefix.take();
    }

    fn prefix(&self) -> &[u32] {
        self.prefix.get_or_init(|| {
            let mut prefix = Vec::with_capacity(self.words.len() + 1);
            let mut total = 0;
            prefix.push(0);
            for w in &self.words {
                total += w.count_ones();
                prefix.push(total);
            }
            prefix
        })
    }

    /// Number of occupied slots in `0..=slot`.
    pub fn rank(&self, slot: usize) -> u32 {
        let (w, b) = (slot / WORD, slot % WORD);
        self.prefix()[w] + (self.words[w] & (u64::MAX >> (WORD - 1 - b))).count_ones()
    }

    /// Slot of the `k`-th occupied slot, counting from 1.
    pub fn select(&self, k: u32) -> Option<usize> {
        let prefix = self.prefix();
        if k == 0 || k > *prefix.last().expect("prefix has a total") {
            return None;
        }
        // Last word whose preceding count is below k.
        let w = prefix.partition_point(|&c| c < k) - 1;
        let mut word = self.words[w];
        for _ in 0..k - 1 - prefix[w] {
            word &= word - 1;
        }
        Some(w * WORD + word.trailing_zeros() as usize)
    }

    /// Occupied slots at or after `start`, in increasing order.
    pub fn iter_from(&self, start: usize) -> impl Iterator<Item = usize> + '_ {
        let first = start / WORD;
        self.words[first..].iter().enumerate().flat_map(move |(k, &word)| {
            let w = first + k;
            let mut bits = if w == first { word & (u64::MAX << (start % WORD)) } else { word };
            core::iter::from_fn(move || {
                (bits != 0).then(|| {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    w * WORD + b
                })
            })
        })
    }
}
