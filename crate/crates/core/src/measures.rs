//! Jump-rate laws and initial profiles.
//!
//! A [`JumpRateLaw`] is a finite mixture of point masses and Gamma laws. An
//! [`InitialProfile`] assigns such a law to each cell of a partition of
//! `[0, 1)`, which describes how jump rates are laid out along the initial
//! queue. Every integral the limit formulas need reduces to Laplace
//! transforms of these laws, which are closed-form for both families.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::quadrature::{GaussLaguerre, DEFAULT_NODES};
use crate::{scaled_position, Error, Result};

/// Tolerance on weight sums and marginal consistency.
pub const STRUCTURAL_TOL: f64 = 1e-12;

/// One component of a rate mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateComponent {
    /// Point mass at `rate`.
    Atom { rate: f64 },
    /// Gamma law with density `rate^shape w^(shape-1) e^(-rate w) / Γ(shape)`.
    Gamma { shape: f64, rate: f64 },
}

impl RateComponent {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Atom { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(Error::InvalidLaw(format!("atom rate must be positive and finite, got {rate}")))
            }
            Self::Gamma { shape, rate }
                if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) =>
            {
                Err(Error::InvalidLaw(format!("gamma parameters must be positive, got ({shape}, {rate})")))
            }
            _ => Ok(()),
        }
    }

    pub fn laplace(&self, t: f64) -> f64 {
        match *self {
            Self::Atom { rate } => libm::exp(-rate * t),
            Self::Gamma { shape, rate } => libm::pow(rate / (rate + t), shape),
        }
    }

    pub fn weighted_laplace(&self, t: f64) -> f64 {
        match *self {
            Self::Atom { rate } => rate * libm::exp(-rate * t),
            Self::Gamma { shape, rate } => shape / (rate + t) * self.laplace(t),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Atom { rate } => rate,
            Self::Gamma { shape, rate } => shape / rate,
        }
    }

    fn test_integral<G: Fn(f64) -> f64>(&self, g: &G, t: f64, nodes: usize) -> Result<f64> {
        match *self {
            Self::Atom { rate } => Ok(g(rate) * libm::exp(-rate * t)),
            Self::Gamma { shape, rate } => {
                // e^{-wt} Gamma(shape, rate)(dw) = L(t) Gamma(shape, rate + t)(dw)
                let tilted = rate + t;
                let rule = GaussLaguerre::new(nodes, shape - 1.0)?;
                Ok(self.laplace(t) * rule.expectation(|x| g(x / tilted)))
            }
        }
    }

    /// `ln ∫ e^{-wt} dν` and the normalized tilted component.
    fn ln_exp_tilt(&self, t: f64) -> (f64, Self) {
        match *self {
            Self::Atom { rate } => (-rate * t, *self),
            Self::Gamma { shape, rate } => {
                (shape * libm::log(rate / (rate + t)), Self::Gamma { shape, rate: rate + t })
            }
        }
    }

    /// `ln ∫ w e^{-ws} dν` and the normalized size-biased tilted component.
    fn ln_size_biased_tilt(&self, s: f64) -> (f64, Self) {
        match *self {
            Self::Atom { rate } => (libm::log(rate) - rate * s, *self),
            Self::Gamma { shape, rate } => (
                libm::log(shape) + shape * libm::log(rate) - (shape + 1.0) * libm::log(rate + s),
                Self::Gamma { shape: shape + 1.0, rate: rate + s },
            ),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Atom { rate } => rate,
            Self::Gamma { shape, rate } => {
                // Parameters were validated, so construction cannot fail.
                Gamma::new(shape, 1.0 / rate).expect("validated gamma").sample(rng)
            }
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Self::Atom { rate: a }, Self::Atom { rate: b }) => a.total_cmp(b),
            (Self::Atom { .. }, Self::Gamma { .. }) => Ordering::Less,
            (Self::Gamma { .. }, Self::Atom { .. }) => Ordering::Greater,
            (Self::Gamma { shape: s1, rate: r1 }, Self::Gamma { shape: s2, rate: r2 }) => {
                s1.total_cmp(s2).then(r1.total_cmp(r2))
            }
        }
    }
}

/// Distribution of jump rates: a weighted list of atoms and Gamma laws.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRateLaw {
    parts: Vec<(f64, RateComponent)>,
}

impl JumpRateLaw {
    /// Validated law from `(weight, component)` pairs.
    ///
    /// Zero-weight parts are dropped and identical components merged.
    pub fn from_parts(parts: Vec<(f64, RateComponent)>) -> Result<Self> {
        let mut total = 0.0;
        for (weight, component) in &parts {
            if !(*weight >= 0.0 && weight.is_finite()) {
                return Err(Error::InvalidLaw(format!("weight {weight} is not a probability")));
            }
            component.validate()?;
            total += weight;
        }
        if (total - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::InvalidLaw(format!("weights sum to {total}, not 1")));
        }
        let law = Self { parts: parts.into_iter().filter(|(w, _)| *w > 0.0).collect() }.canonical();
        if law.parts.is_empty() {
            return Err(Error::InvalidLaw("law has no components".into()));
        }
        Ok(law)
    }

    /// Discrete law from `(rate, weight)` pairs.
    pub fn atoms(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::from_parts(pairs.iter().map(|&(rate, p)| (p, RateComponent::Atom { rate })).collect())
    }

    pub fn point_mass(rate: f64) -> Result<Self> {
        Self::atoms(&[(rate, 1.0)])
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::from_parts(alloc::vec![(1.0, RateComponent::Gamma { shape, rate })])
    }

    /// Weighted mixture of laws.
    pub fn mixture(parts: &[(f64, JumpRateLaw)]) -> Result<Self> {
        let flat = parts
            .iter()
            .flat_map(|(w, law)| law.parts.iter().map(move |&(p, c)| (w * p, c)))
            .collect();
        Self::from_parts(flat)
    }

    /// Components in canonical order: atoms by rate, then Gammas.
    pub fn parts(&self) -> &[(f64, RateComponent)] {
        &self.parts
    }

    pub fn is_atomic(&self) -> bool {
        self.parts.iter().all(|(_, c)| matches!(c, RateComponent::Atom { .. }))
    }

    /// `(rate, weight)` pairs when the law is purely discrete.
    pub fn atom_weights(&self) -> Option<Vec<(f64, f64)>> {
        self.parts
            .iter()
            .map(|&(p, c)| match c {
                RateComponent::Atom { rate } => Some((rate, p)),
                RateComponent::Gamma { .. } => None,
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.parts.iter().map(|(p, c)| p * c.mean()).sum()
    }

    /// `∫ e^{-wt} λ(dw)`.
    pub fn laplace(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.laplace_at(t))
    }

    /// `∫ w e^{-wt} λ(dw)`, the derivative of `-laplace`.
    pub fn weighted_laplace(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.weighted_laplace_at(t))
    }

    /// `∫ g(w) e^{-wt} λ(dw)` with the default Gauss–Laguerre node count.
    pub fn test_integral<G: Fn(f64) -> f64>(&self, g: G, t: f64) -> Result<f64> {
        self.test_integral_with(&g, t, DEFAULT_NODES)
    }

    /// `∫ g(w) e^{-wt} λ(dw)`; Gamma components use `nodes` quadrature points.
    pub fn test_integral_with<G: Fn(f64) -> f64>(&self, g: &G, t: f64, nodes: usize) -> Result<f64> {
        check_time(t)?;
        self.parts.iter().try_fold(0.0, |acc, (p, c)| Ok(acc + p * c.test_integral(g, t, nodes)?))
    }

    pub(crate) fn laplace_at(&self, t: f64) -> f64 {
        self.parts.iter().map(|(p, c)| p * c.laplace(t)).sum()
    }

    pub(crate) fn weighted_laplace_at(&self, t: f64) -> f64 {
        self.parts.iter().map(|(p, c)| p * c.weighted_laplace(t)).sum()
    }

    /// Law reweighted by `e^{-wt}` and renormalized.
    ///
    /// Components keep their order, so weights stay aligned with `self`.
    pub fn exp_tilted(&self, t: f64) -> Result<Self> {
        check_time(t)?;
        Ok(self.reweigh(|c| c.ln_exp_tilt(t)))
    }

    /// Law reweighted by `w e^{-ws}` and renormalized.
    pub fn size_biased_tilted(&self, s: f64) -> Result<Self> {
        check_time(s)?;
        Ok(self.reweigh(|c| c.ln_size_biased_tilt(s)))
    }

    fn reweigh(&self, tilt: impl Fn(&RateComponent) -> (f64, RateComponent)) -> Self {
        let logs: Vec<(f64, RateComponent)> =
            self.parts.iter().map(|(p, c)| {
                let (ln_mass, tilted) = tilt(c);
                (libm::log(*p) + ln_mass, tilted)
            }).collect();
        let max = logs.iter().map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
        let mut parts: Vec<(f64, RateComponent)> =
            logs.into_iter().map(|(l, c)| (libm::exp(l - max), c)).collect();
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        parts.iter_mut().for_each(|(w, _)| *w /= total);
        Self { parts }
    }

    /// Component-wise comparison of two canonical laws.
    pub fn approx_eq(&self, other: &JumpRateLaw, tol: f64) -> bool {
        self.parts.len() == other.parts.len()
            && self
                .parts
                .iter()
                .zip(&other.parts)
                .all(|((p, c), (q, d))| c == d && (p - q).abs() <= tol)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if let [(_, only)] = self.parts.as_slice() {
            return only.sample(rng);
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, c) in &self.parts {
            acc += p;
            if u < acc {
                return c.sample(rng);
            }
        }
        self.parts[self.parts.len() - 1].1.sample(rng)
    }

    fn canonical(mut self) -> Self {
        self.parts.sort_by(|a, b| a.1.canonical_cmp(&b.1));
        let mut merged: Vec<(f64, RateComponent)> = Vec::with_capacity(self.parts.len());
        for (w, c) in self.parts {
            match merged.last_mut() {
                Some((acc, last)) if *last == c => *acc += w,
                _ => merged.push((w, c)),
            }
        }
        Self { parts: merged }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && !t.is_nan() {
        Ok(())
    } else {
        Err(Error::NegativeTime(t))
    }
}

/// A cell `[start, end)` of the initial profile with its rate law.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub start: f64,
    pub end: f64,
    pub law: JumpRateLaw,
}

impl Stratum {
    pub fn new(start: f64, end: f64, law: JumpRateLaw) -> Self {
        Self { start, end, law }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Length of `[a, b) ∩ [start, end)`.
    fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.end.min(b) - self.start.max(a)).max(0.0)
    }
}

/// Piecewise-constant initial profile `y -> μ_{y,0}` over `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialProfile {
    strata: Vec<Stratum>,
    marginal: JumpRateLaw,
}

impl InitialProfile {
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        let first = strata.first().ok_or_else(|| Error::InvalidProfile("no strata".into()))?;
        if first.start != 0.0 {
            return Err(Error::InvalidProfile(format!("first stratum starts at {}", first.start)));
        }
        if strata[strata.len() - 1].end != 1.0 {
            return Err(Error::InvalidProfile("last stratum must end at 1".into()));
        }
        for s in &strata {
            if s.is_empty() || !s.start.is_finite() {
                return Err(Error::InvalidProfile(format!("empty stratum [{}, {})", s.start, s.end)));
            }
        }
        for pair in strata.windows(2) {
            if pair[0].end != pair[1].start {
                return Err(Error::InvalidProfile(format!(
                    "strata are not contiguous at {} / {}",
                    pair[0].end, pair[1].start
                )));
            }
        }
        let weighted: Vec<(f64, JumpRateLaw)> = strata.iter().map(|s| (s.len(), s.law.clone())).collect();
        let marginal = JumpRateLaw::mixture(&weighted)?;
        Ok(Self { strata, marginal })
    }

    /// Profile whose law is the same at every position.
    pub fn factorized(law: JumpRateLaw) -> Self {
        Self { strata: alloc::vec![Stratum::new(0.0, 1.0, law.clone())], marginal: law }
    }

    /// Profile checked against a declared marginal law.
    pub fn with_marginal(strata: Vec<Stratum>, declared: &JumpRateLaw) -> Result<Self> {
        let profile = Self::new(strata)?;
        if !profile.marginal.approx_eq(declared, STRUCTURAL_TOL) {
            return Err(Error::InvalidProfile(
                "y-average of the strata laws differs from the declared marginal".into(),
            ));
        }
        Ok(profile)
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    /// The rate law averaged over positions.
    pub fn marginal(&self) -> &JumpRateLaw {
        &self.marginal
    }

    pub fn stratum_index(&self, y: f64) -> usize {
        self.strata.partition_point(|s| s.start <= y).saturating_sub(1)
    }

    pub fn law_at(&self, y: f64) -> &JumpRateLaw {
        &self.strata[self.stratum_index(y)].law
    }

    /// `Σ_j |[a, 1) ∩ stratum_j| f(law_j)`.
    pub(crate) fn tail_sum(&self, a: f64, mut f: impl FnMut(&JumpRateLaw) -> f64) -> f64 {
        self.strata
            .iter()
            .rev()
            .take_while(|s| s.end > a)
            .map(|s| s.overlap(a, 1.0) * f(&s.law))
            .sum()
    }

    /// `∫_a^1 ∫ e^{-wt} μ_{z,0}(dw) dz`, exact over strata.
    pub fn tail_integral(&self, a: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::OutOfDomain { what: "a", value: a });
        }
        check_time(t)?;
        Ok(self.tail_sum(a, |law| law.laplace_at(t)))
    }

    /// `∫_0^y ∫ g dμ_{z,0} dz`, the limit of the initial empirical statistic.
    pub fn initial_statistic<G: Fn(f64) -> f64>(&self, g: G, y: f64) -> Result<f64> {
        self.strata.iter().try_fold(0.0, |acc, s| {
            let len = s.overlap(0.0, y);
            if len > 0.0 {
                Ok(acc + len * s.law.test_integral(&g, 0.0)?)
            } else {
                Ok(acc)
            }
        })
    }
}

/// `∫_a^1 ∫ e^{-wt} μ_{z,0}(dw) dz`.
pub fn profile_tail_integral(profile: &InitialProfile, a: f64, t: f64) -> Result<f64> {
    profile.tail_integral(a, t)
}

/// Rates and initial ranks of a finite system, indexed by particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub rates: Vec<f64>,
    /// 1-based initial rank `x_{i,0}` of each particle.
    pub initial_positions: Vec<u32>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Population from an arrangement listing particle ids (0-based) by rank.
    pub fn from_arrangement(arrangement: &[usize], rates: Vec<f64>) -> Result<Self> {
        let n = arrangement.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        if rates.len() != n {
            return Err(Error::InvalidProfile(format!("{} rates for {n} particles", rates.len())));
        }
        if let Some(bad) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidLaw(format!("rate {bad} is not positive")));
        }
        let mut initial_positions = alloc::vec![0u32; n];
        for (rank, &particle) in arrangement.iter().enumerate() {
            if particle >= n || initial_positions[particle] != 0 {
                return Err(Error::InvalidProfile("arrangement is not a permutation".into()));
            }
            initial_positions[particle] = rank as u32 + 1;
        }
        Ok(Self { rates, initial_positions })
    }

    /// `y_{i,0} = (x_{i,0} - 1) / N`.
    pub fn initial_scaled(&self, particle: usize) -> f64 {
        scaled_position(self.initial_positions[particle], self.len())
    }
}

/// Draws a random initial arrangement and per-particle rates.
///
/// The particle at scaled position `y` gets a rate drawn from the law of the
/// stratum containing `y`. Single-atom laws consume no randomness.
pub fn sample_rates_and_positions<R: Rng + ?Sized>(
    profile: &InitialProfile,
    n: usize,
    rng: &mut R,
) -> Result<Population> {
    if n == 0 {
        return Err(Error::EmptySystem);
    }
    if n > u32::MAX as usize {
        return Err(Error::OutOfDomain { what: "particle count", value: n as f64 });
    }
    let mut initial_positions: Vec<u32> = (1..=n as u32).collect();
    initial_positions.shuffle(rng);
    let rates = initial_positions
        .iter()
        .map(|&x| profile.law_at(scaled_position(x, n)).sample(rng))
        .collect();
    Ok(Population { rates, initial_positions })
}
