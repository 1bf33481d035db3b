//! Stochastic ranking process and its infinite-particle limit.
//!
//! `N` particles sit in a queue. Particle `i` jumps to the head of the queue
//! at the events of a Poisson clock of rate `w_i`; every other particle ahead
//! of the jumper's old rank is pushed one step toward the tail. This is the
//! move-to-front list discipline with heterogeneous access rates.
//!
//! The crate is split into:
//!
//! * [`measures`]: jump-rate laws (atoms and Gamma mixtures) and
//!   piecewise-constant initial profiles, with their Laplace-type integrals.
//! * [`simulator`]: an event-driven simulator with constant-cost jumps exposing
//!   the finite-`N` observables (boundary, flow position, empirical
//!   statistics).
//! * [`limit`]: closed-form evaluators of the deterministic `N -> inf`
//!   limit (boundary curve, flow, inverses, two-branch density, velocity,
//!   transport residual).
//!
//! The crate is `no_std` and only needs `alloc`.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod events;
pub mod limit;
pub mod measures;
pub mod occupancy;
pub mod quadrature;
pub mod simulator;

pub use error::{Error, Result};
pub use events::{EventSource, JumpEvent, ScriptedEvents};
pub use limit::{LimitDensity, LimitField, Regime, Side};
pub use measures::{InitialProfile, JumpRateLaw, Population, RateComponent, Stratum};
pub use simulator::{EmpiricalSnapshot, ParticleRecord, SimOptions, SystemState};

/// Counter-based generator used for every random stream in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the generator for a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Scaled position `(x - 1) / n` of the 1-based rank `x`.
#[inline]
pub fn scaled_position(rank: u32, n: usize) -> f64 {
    f64::from(rank - 1) / n as f64
}
