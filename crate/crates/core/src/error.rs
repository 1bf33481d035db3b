use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("{what} = {value} is outside its domain")]
    OutOfDomain { what: &'static str, value: f64 },

    #[error("invalid jump-rate law: {0}")]
    InvalidLaw(String),

    #[error("invalid initial profile: {0}")]
    InvalidProfile(String),

    #[error("particle count must be at least 1")]
    EmptySystem,

    #[error("cannot move the clock back from {current} to {requested}")]
    TimeRegression { current: f64, requested: f64 },

    #[error("y = {y} lies on the boundary curve at t = {t}; choose a side")]
    BoundarySingularity { y: f64, t: f64 },

    #[error("y = {y} is in the head regime (boundary at {boundary})")]
    HeadRegime { y: f64, boundary: f64 },

    #[error("query point {y} is not beyond the empirical boundary {boundary}")]
    OutOfRegime { y: f64, boundary: f64 },

    #[error("no particle sits beyond scaled position {0}")]
    NoParticleBeyond(f64),

    #[error("root finding for {0} did not converge")]
    RootNotConverged(&'static str),

    #[error("operation needs a law made of atoms only")]
    NotAtomic,

    #[error("stencil at (y = {y}, t = {t}) with step {h} straddles a discontinuity")]
    TooCloseToBoundary { y: f64, t: f64, h: f64 },

    #[error("invalid event script: {0}")]
    InvalidScript(String),
}
