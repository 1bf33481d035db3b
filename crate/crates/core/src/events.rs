//! Jump-event streams.
//!
//! Each particle carries its own exponential clock; the next jump time of
//! every particle sits in a priority queue and is redrawn right after the
//! particle jumps. By memorylessness this produces the same law as drawing
//! i.i.d. inter-jump gaps up front. Equal times are ordered by particle index.
//!
//! Redrawn times never precede the current one, so the queue is a monotone
//! radix heap over the bit patterns of the (non-negative) times: a push is an
//! append, and a pop redistributes one bucket by the highest bit in which
//! each key differs from the last minimum. All of its memory traffic is
//! sequential, which matters once the clocks no longer fit in cache.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, Exp1};

use crate::{Error, Result, Rng};

/// A jump of `particle` to the head of the queue at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub particle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    // Bit pattern of a non-negative time; ordered like the time itself.
    key: u64,
    rate: f64,
    particle: u32,
    // Opaque per-particle word owned by the consumer of the clock.
    tag: u32,
}

/// Monotone min-queue: keys pushed must not be smaller than the last key
/// popped (or peeked).
///
/// Keys are split into digits of `DIGIT` bits. A key lives in bucket
/// `(d, v)` when its most significant digit differing from `last` is digit
/// `d` and that digit of the key is `v`; keys equal to `last` live in `zero`.
/// Bucket order `(d, v)` is key order, and a spill moves each key to a
/// strictly lower level, so a key moves about `log_{2^DIGIT}` of its
/// distance to the minimum times.
#[derive(Debug, Clone)]
struct RadixHeap {
    zero: Vec<Pending>,
    buckets: Vec<Vec<Pending>>,
    // Smallest key in each bucket, meaningful while the bucket is non-empty.
    mins: Vec<u64>,
    // Bit `b` is set when bucket `b = d * RADIX + v` is non-empty.
    occupied: [u64; LEVELS * RADIX / 64],
    // Bit `w` is set when `occupied[w]` is non-zero.
    summary: u64,
    last: u64,
}

const DIGIT: u32 = 8;
const RADIX: usize = 1 << DIGIT;
const LEVELS: usize = 64 / DIGIT as usize;
const _: () = assert!(LEVELS * RADIX / 64 <= 64);

impl RadixHeap {
    fn new() -> Self {
        Self {
            zero: Vec::new(),
            buckets: alloc::vec![Vec::new(); LEVELS * RADIX],
            mins: alloc::vec![u64::MAX; LEVELS * RADIX],
            occupied: [0; LEVELS * RADIX / 64],
            summary: 0,
            last: 0,
        }
    }

    #[inline]
    fn push(&mut self, item: Pending) {
        debug_assert!(item.key >= self.last);
        let diff = item.key ^ self.last;
        if diff == 0 {
            self.zero.push(item);
            return;
        }
        let level = (63 - diff.leading_zeros()) / DIGIT;
        let b = level as usize * RADIX + (item.key >> (level * DIGIT)) as usize % RADIX;
        if self.buckets[b].is_empty() {
            self.occupied[b / 64] |= 1 << (b % 64);
            self.summary |= 1 << (b / 64);
            self.mins[b] = item.key;
        } else {
            self.mins[b] = self.mins[b].min(item.key);
        }
        self.buckets[b].push(item);
    }

    /// Index in `zero` of the minimum, ties going to the lower particle.
    fn peek(&mut self) -> Option<usize> {
        if self.zero.is_empty() {
            if self.summary == 0 {
                return None;
            }
            let w = self.summary.trailing_zeros() as usize;
            let b = w * 64 + self.occupied[w].trailing_zeros() as usize;
            self.occupied[w] &= self.occupied[w] - 1;
            if self.occupied[w] == 0 {
                self.summary &= !(1 << w);
            }
            self.last = self.mins[b];
            let mut spill = core::mem::take(&mut self.buckets[b]);
            for item in spill.drain(..) {
                self.push(item);
            }
            self.buckets[b] = spill;
        }
        let zero = &self.zero;
        (0..zero.len()).min_by_key(|&k| zero[k].particle)
    }

    fn take(&mut self, index: usize) -> Pending {
        self.zero.swap_remove(index)
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut Pending> {
        self.zero.iter_mut().chain(self.buckets.iter_mut().flatten())
    }
}

/// Independent exponential clocks with fixed per-particle rates.
#[derive(Debug, Clone)]
pub struct ExponentialClock {
    queue: RadixHeap,
    rng: Rng,
}

impl ExponentialClock {
    /// Draws the first jump time of every particle, in particle order.
    pub fn new(rates: &[f64], mut rng: Rng) -> Self {
        let mut queue = RadixHeap::new();
        for (i, &w) in rates.iter().enumerate() {
            queue.push(Pending { key: exp_gap(&mut rng, w).to_bits(), rate: w, particle: i as u32, tag: 0 });
        }
        Self { queue, rng }
    }

    fn pop_until(&mut self, t: f64) -> Option<JumpEvent> {
        self.pop_tagged(t, |_, tag| tag)
    }

    /// Pops the next event no later than `t`. `retag` receives the event and
    /// the particle's tag and returns the tag to store with its next jump.
    ///
    /// Tags let a simulator keep per-particle state next to the clock, so
    /// that a jump needs no random read elsewhere.
    #[inline]
    pub fn pop_tagged(&mut self, t: f64, retag: impl FnOnce(JumpEvent, u32) -> u32) -> Option<JumpEvent> {
        let k = self.queue.peek()?;
        let top = self.queue.zero[k];
        let time = f64::from_bits(top.key);
        if time > t {
            return None;
        }
        self.queue.take(k);
        let event = JumpEvent { time, particle: top.particle as usize };
        let tag = retag(event, top.tag);
        let next = time + exp_gap(&mut self.rng, top.rate);
        self.queue.push(Pending { key: next.to_bits(), tag, ..top });
        Some(event)
    }

    /// Replaces every tag with `retag(particle, tag)`.
    pub fn set_tags(&mut self, mut retag: impl FnMut(usize, u32) -> u32) {
        for item in self.queue.iter_mut() {
            item.tag = retag(item.particle as usize, item.tag);
        }
    }
}

#[inline]
fn exp_gap(rng: &mut Rng, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// A fixed, finite list of jump events; no other jumps ever happen.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedEvents {
    events: Vec<JumpEvent>,
    cursor: usize,
}

impl ScriptedEvents {
    pub fn new(mut events: Vec<JumpEvent>, n: usize) -> Result<Self> {
        if let Some(bad) = events.iter().find(|e| !(e.time >= 0.0 && e.time.is_finite()) || e.particle >= n) {
            return Err(Error::InvalidScript(format!(
                "event ({}, {}) is out of range for {n} particles",
                bad.time, bad.particle
            )));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.particle.cmp(&b.particle)));
        if events.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScript("duplicate event".into()));
        }
        Ok(Self { events, cursor: 0 })
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub(crate) fn pop_until(&mut self, t: f64) -> Option<JumpEvent> {
        let next = *self.events.get(self.cursor)?;
        (next.time <= t).then(|| {
            self.cursor += 1;
            next
        })
    }
}

#[derive(Debug, Clone)]
pub enum EventSource {
    Exponential(alloc::boxed::Box<ExponentialClock>),
    Scripted(ScriptedEvents),
}

impl EventSource {
    pub fn exponential(rates: &[f64], rng: Rng) -> Self {
        Self::Exponential(alloc::boxed::Box::new(ExponentialClock::new(rates, rng)))
    }

    /// Removes and returns the next event if it happens no later than `t`.
    #[inline]
    pub fn pop_until(&mut self, t: f64) -> Option<JumpEvent> {
        match self {
            Self::Exponential(clock) => clock.pop_until(t),
            Self::Scripted(script) => script.pop_until(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn exponential_events_come_in_time_order() {
        let mut source = EventSource::exponential(&[1.0, 2.0, 0.5], rng_from_seed(1));
        let mut last = 0.0;
        let mut count = 0;
        while let Some(e) = source.pop_until(50.0) {
            assert!(e.time >= last);
            last = e.time;
            count += 1;
        }
        // Expected 175 jumps; Poisson sd ~13.
        assert!((120..230).contains(&count), "{count}");
        assert!(source.pop_until(50.0).is_none());
    }

    #[test]
    fn scripted_events_sort_and_validate() {
        let script = ScriptedEvents::new(
            alloc::vec![
                JumpEvent { time: 2.0, particle: 1 },
                JumpEvent { time: 1.0, particle: 0 },
            ],
            2,
        )
        .unwrap();
        let mut source = EventSource::Scripted(script);
        assert_eq!(source.pop_until(0.5), None);
        assert_eq!(source.pop_until(1.5).unwrap().particle, 0);
        assert_eq!(source.pop_until(5.0).unwrap().particle, 1);
        assert_eq!(source.pop_until(5.0), None);

        assert!(ScriptedEvents::new(alloc::vec![JumpEvent { time: 1.0, particle: 2 }], 2).is_err());
        assert!(ScriptedEvents::new(alloc::vec![JumpEvent { time: -1.0, particle: 0 }], 2).is_err());
    }

    #[test]
    fn ties_break_by_particle_index() {
        let mut heap = RadixHeap::new();
        for particle in [3, 1, 2] {
            heap.push(Pending { key: 1.0f64.to_bits(), rate: 1.0, particle, tag: 0 });
        }
        heap.push(Pending { key: 0.5f64.to_bits(), rate: 1.0, particle: 9, tag: 0 });
        let mut order = alloc::vec::Vec::new();
        while let Some(k) = heap.peek() {
            order.push(heap.take(k).particle);
        }
        assert_eq!(order, [9, 1, 2, 3]);
    }

    proptest::proptest! {
        #[test]
        fn radix_heap_pops_in_sorted_order(start in proptest::collection::vec(0.0f64..100.0, 1..200), gaps in proptest::collection::vec(0.0f64..10.0, 0..300)) {
            let mut heap = RadixHeap::new();
            let mut reference: alloc::vec::Vec<(f64, u32)> = alloc::vec::Vec::new();
            for (i, &t) in start.iter().enumerate() {
                heap.push(Pending { key: t.to_bits(), rate: 1.0, particle: i as u32, tag: 0 });
                reference.push((t, i as u32));
            }
            let mut gaps = gaps.into_iter();
            while let Some(k) = heap.peek() {
                let top = heap.take(k);
                let pos = (0..reference.len())
                    .min_by(|&a, &b| reference[a].0.total_cmp(&reference[b].0).then(reference[a].1.cmp(&reference[b].1)))
                    .unwrap();
                let expected = reference.swap_remove(pos);
                proptest::prop_assert_eq!((f64::from_bits(top.key), top.particle), expected);
                if let Some(g) = gaps.next() {
                    let t = expected.0 + g;
                    heap.push(Pending { key: t.to_bits(), ..top });
                    reference.push((t, top.particle));
                }
            }
            proptest::prop_assert!(reference.is_empty());
        }
    }
}
