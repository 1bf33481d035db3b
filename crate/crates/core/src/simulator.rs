//! Event-driven simulation of the N-particle ranking process.
//!
//! Ranks are kept in a "growing front" encoding: particles occupy slots of
//! an array of capacity `C = capacity_factor * N`; a jumping particle takes
//! the free slot just left of the current front. The rank of a particle is
//! the number of occupied slots at or left of its own, answered by an
//! [`Occupancy`] index in `O(log C)`. When the front reaches slot 0 the
//! occupied slots are packed against the right end in `O(C)`, which
//! amortizes to `O(1)` per jump.
//!
//! With exponential clocks, each particle's slot and a has-jumped bit ride
//! along with its pending jump time as the clock tag, so a jump reads no
//! per-particle array at all. First jumps go to an append-only log. The
//! particle-to-slot map and the first-jump table are rebuilt on the first
//! query that needs them. This keeps the per-event cost flat once
//! per-particle arrays outgrow the cache.

use core::cell::OnceCell;

use alloc::vec;
use alloc::vec::Vec;

use crate::events::{EventSource, JumpEvent};
use crate::measures::{sample_rates_and_positions, InitialProfile, Population};
use crate::occupancy::Occupancy;
use crate::{rng_from_seed, scaled_position, Error, Result};

// Tag layout: slot in the low 31 bits, has-jumped flag on top.
const JUMPED: u32 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Slot capacity as a multiple of the particle count (at least 2).
    pub capacity_factor: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { capacity_factor: 8 }
    }
}

/// Samples the population and then the exponential clocks from one seeded
/// stream, in that order.
///
/// Every simulator built from the same `(profile, n, seed)` sees the same
/// population and the same event sequence.
pub fn seeded_setup(profile: &InitialProfile, n: usize, seed: u64) -> Result<(Population, EventSource)> {
    let mut rng = rng_from_seed(seed);
    let population = sample_rates_and_positions(profile, n, &mut rng)?;
    let events = EventSource::exponential(&population.rates, rng);
    Ok((population, events))
}

#[derive(Debug, Clone)]
struct Ranks {
    // Particle to slot, valid until the next jump.
    slot_cache: OnceCell<Vec<u32>>,
    occupant: Vec<u32>,
    slots: Occupancy,
    front: usize,
    n: usize,
    // First jumps in time order.
    first_jumps: Vec<(u32, f64)>,
    // Per-particle first-jump time (`INFINITY` if none), valid until the next first jump.
    first_jump_cache: OnceCell<Vec<f64>>,
    total_jumps: u64,
}

impl Ranks {
    fn slot_of(&self, particle: usize) -> usize {
        let cache = self.slot_cache.get_or_init(|| {
            let mut slot_of = vec![0u32; self.n];
            for slot in self.slots.iter_from(self.front) {
                slot_of[self.occupant[slot] as usize] = slot as u32;
            }
            slot_of
        });
        cache[particle] as usize
    }

    fn first_jump(&self) -> &[f64] {
        self.first_jump_cache.get_or_init(|| {
            let mut table = vec![f64::INFINITY; self.n];
            for &(p, t) in &self.first_jumps {
                table[p as usize] = t;
            }
            table
        })
    }

    fn jumped(&self) -> usize {
        self.first_jumps.len()
    }

    /// Moves `particle`, currently at `slot`, to the head. Returns its new tag.
    #[inline]
    fn jump(&mut self, event: JumpEvent, slot: usize, jumped: bool) -> u32 {
        let particle = event.particle;
        debug_assert!(self.slots.contains(slot));
        self.slot_cache.take();
        if slot != self.front {
            debug_assert!(self.front > 0);
            self.slots.remove(slot);
            self.front -= 1;
            self.occupant[self.front] = particle as u32;
            self.slots.insert(self.front);
        }
        self.total_jumps += 1;
        if !jumped {
            self.first_jumps.push((particle as u32, event.time));
            self.first_jump_cache.take();
        }
        self.front as u32 | JUMPED
    }

    /// Particles listed by rank, head first.
    fn arrangement(&self) -> Vec<usize> {
        self.slots.iter_from(self.front).map(|slot| self.occupant[slot] as usize).collect()
    }

    /// Packs occupied slots against the right end, keeping their order.
    /// Returns the index as it was before packing.
    fn compact(&mut self) -> Occupancy {
        let order = self.arrangement();
        let capacity = self.occupant.len();
        let base = capacity - order.len();
        for (k, &p) in order.iter().enumerate() {
            self.occupant[base + k] = p as u32;
        }
        self.front = base;
        self.slot_cache.take();
        core::mem::replace(&mut self.slots, Occupancy::with_range(capacity, base..capacity))
    }
}

#[derive(Debug, Clone)]
pub struct SystemState {
    rates: Vec<f64>,
    initial_positions: Vec<u32>,
    ranks: Ranks,
    time: f64,
    events: EventSource,
}

impl SystemState {
    /// Seeded system with `n` particles drawn from `profile`.
    pub fn init(profile: &InitialProfile, n: usize, seed: u64) -> Result<Self> {
        Self::init_with(profile, n, seed, SimOptions::default())
    }

    pub fn init_with(profile: &InitialProfile, n: usize, seed: u64, options: SimOptions) -> Result<Self> {
        let (population, events) = seeded_setup(profile, n, seed)?;
        Self::from_parts(population, events, options)
    }

    /// System driven by an explicit population and event source.
    pub fn from_parts(population: Population, mut events: EventSource, options: SimOptions) -> Result<Self> {
        let n = population.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        let factor = options.capacity_factor.max(2);
        let capacity = n
            .checked_mul(factor)
            .filter(|&c| c <= JUMPED as usize)
            .ok_or(Error::OutOfDomain { what: "slot capacity", value: (n * factor) as f64 })?;
        let base = capacity - n;
        let mut occupant = vec![0u32; capacity];
        let slot_of: Vec<u32> = population.initial_positions.iter().map(|&x| (base + x as usize - 1) as u32).collect();
        for (particle, &slot) in slot_of.iter().enumerate() {
            occupant[slot as usize] = particle as u32;
        }
        if let EventSource::Exponential(clock) = &mut events {
            clock.set_tags(|p, _| slot_of[p]);
        }
        let ranks = Ranks {
            slot_cache: OnceCell::from(slot_of),
            occupant,
            slots: Occupancy::with_range(capacity, base..capacity),
            front: base,
            n,
            first_jumps: Vec::new(),
            first_jump_cache: OnceCell::new(),
            total_jumps: 0,
        };
        Ok(Self { rates: population.rates, initial_positions: population.initial_positions, ranks, time: 0.0, events })
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// 1-based initial ranks `x_{i,0}`.
    pub fn initial_positions(&self) -> &[u32] {
        &self.initial_positions
    }

    pub fn initial_scaled(&self, particle: usize) -> f64 {
        scaled_position(self.initial_positions[particle], self.n())
    }

    /// First-jump time `τ_i`, if the particle has jumped.
    pub fn first_jump_time(&self, particle: usize) -> Option<f64> {
        let t = self.ranks.first_jump()[particle];
        t.is_finite().then_some(t)
    }

    pub fn total_jumps(&self) -> u64 {
        self.ranks.total_jumps
    }

    /// Processes every jump with time `<= t`, in time order.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        self.advance_observed(t, |_, _| {})
    }

    /// Like [`advance_to`](Self::advance_to), calling `observer` after each jump.
    pub fn advance_observed(&mut self, t: f64, mut observer: impl FnMut(&Self, &JumpEvent)) -> Result<()> {
        if !(t >= self.time) {
            return Err(Error::TimeRegression { current: self.time, requested: t });
        }
        loop {
            // Compact before popping so that no jump ever lands on slot 0's left.
            if self.ranks.front == 0 {
                let old = self.ranks.compact();
                if let EventSource::Exponential(clock) = &mut self.events {
                    let base = self.ranks.front as u32;
                    clock.set_tags(|_, tag| (base + old.rank((tag & !JUMPED) as usize) - 1) | (tag & JUMPED));
                }
            }
            let ranks = &mut self.ranks;
            let event = match &mut self.events {
                EventSource::Exponential(clock) => clock.pop_tagged(t, |event, tag| {
                    ranks.jump(event, (tag & !JUMPED) as usize, tag & JUMPED != 0)
                }),
                EventSource::Scripted(script) => script.pop_until(t).inspect(|&event| {
                    let p = event.particle;
                    ranks.jump(event, ranks.slot_of(p), ranks.first_jump()[p].is_finite());
                }),
            };
            let Some(event) = event else { break };
            observer(self, &event);
        }
        self.time = t;
        Ok(())
    }

    /// Current 1-based rank `X_i(t)`.
    pub fn position(&self, particle: usize) -> u32 {
        self.ranks.slots.rank(self.ranks.slot_of(particle))
    }

    /// Particle holding the 1-based `rank`.
    pub fn particle_at(&self, rank: u32) -> Option<usize> {
        self.ranks.slots.select(rank).map(|slot| self.ranks.occupant[slot] as usize)
    }

    /// Particles listed by rank, head first.
    pub fn arrangement(&self) -> Vec<usize> {
        self.ranks.arrangement()
    }

    /// `X_i(t)` for every particle.
    pub fn positions(&self) -> Vec<u32> {
        let mut positions = vec![0; self.n()];
        for (rank, particle) in self.arrangement().into_iter().enumerate() {
            positions[particle] = rank as u32 + 1;
        }
        positions
    }

    /// `y_C^N(t)`: fraction of particles that have jumped at least once.
    pub fn boundary(&self) -> f64 {
        self.ranks.jumped() as f64 / self.n() as f64
    }

    /// `y_C^N(y, t) = y + #{i : τ_i <= t, y_{i,0} >= y} / N`, by a scan over
    /// the particles.
    pub fn flow_position(&self, y: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        let n = self.n();
        let first = first_index_where(n, |j| j as f64 / n as f64 >= y);
        let count = self
            .initial_positions
            .iter()
            .zip(self.ranks.first_jump())
            .filter(|&(&x, tau)| x as usize > first && tau.is_finite())
            .count();
        Ok(y + count as f64 / n as f64)
    }

    /// `ŷ^N(y, t) = min{ y_{i,0} : Y_i(t) > y }`, defined for `y` beyond the boundary.
    pub fn hat_y_empirical(&self, y: f64) -> Result<f64> {
        let boundary = self.boundary();
        if !(y > boundary) {
            return Err(Error::OutOfRegime { y, boundary });
        }
        let n = self.n();
        // Beyond the boundary only never-jumped particles remain, and they
        // keep their initial relative order, so the first rank past `y` wins.
        let index = first_index_where(n, |j| j as f64 / n as f64 > y);
        if index >= n {
            return Err(Error::NoParticleBeyond(y));
        }
        let particle = self.particle_at(index as u32 + 1).ok_or(Error::NoParticleBeyond(y))?;
        Ok(self.initial_scaled(particle))
    }

    pub fn snapshot(&self) -> EmpiricalSnapshot {
        let n = self.n();
        let positions = self.positions();
        let first_jump = self.ranks.first_jump();
        let records = (0..n)
            .map(|i| ParticleRecord {
                rate: self.rates[i],
                y: scaled_position(positions[i], n),
                y0: scaled_position(self.initial_positions[i], n),
                jumped: first_jump[i] <= self.time,
            })
            .collect();
        EmpiricalSnapshot { time: self.time, records }
    }

    /// Checks that ranks form a permutation and agree with the rank index.
    pub fn is_consistent(&self) -> bool {
        let n = self.n();
        let arrangement = self.arrangement();
        if arrangement.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for (rank, &p) in arrangement.iter().enumerate() {
            if seen[p] || self.position(p) as usize != rank + 1 {
                return false;
            }
            seen[p] = true;
        }
        self.ranks.jumped() == self.ranks.first_jump().iter().filter(|t| t.is_finite()).count()
    }
}

/// Smallest `j` in `0..=n` with `pred(j)`, for `pred` monotone in `j`.
fn first_index_where(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleRecord {
    pub rate: f64,
    /// `Y_i(t) = (X_i(t) - 1) / N`.
    pub y: f64,
    pub y0: f64,
    pub jumped: bool,
}

/// Frozen per-particle table at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSnapshot {
    pub time: f64,
    pub records: Vec<ParticleRecord>,
}

impl EmpiricalSnapshot {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// `(1/N) Σ_i g(w_i) χ{Y_i(t) <= y}`.
    pub fn empirical_statistic<G: Fn(f64) -> f64>(&self, g: G, y: f64) -> f64 {
        let sum: f64 = self.records.iter().filter(|r| r.y <= y).map(|r| g(r.rate)).sum();
        sum / self.n() as f64
    }

    /// Fraction of particles that have jumped.
    pub fn jumped_fraction(&self) -> f64 {
        self.records.iter().filter(|r| r.jumped).count() as f64 / self.n() as f64
    }
}
