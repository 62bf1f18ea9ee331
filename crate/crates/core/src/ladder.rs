//! First-passage times of the auxiliary increment walks.
//!
//! The frontier-thinned walk steps by `Binomial(Z, f)` with probability `p`
//! and by `-X` otherwise; its `tau` is the first index with a strictly
//! negative partial sum. The total-population walk steps by `Z` or `-X`
//! and stops at the first non-positive partial sum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{binomial_thin, IntegerLaw};
use crate::rng::{Lane, RngStream};
use crate::theory::{frontier_f, ladder_tail_asymptote, w_increment_mean, TheoryError};

/// Largest `|increment mean|` accepted as zero drift.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LadderError {
    #[error("frontier-thinned walk needs f in (0, 1), got {0}")]
    BadFrontier(f64),
    #[error("p = {0} must lie strictly between 0 and 1")]
    BadP(f64),
    #[error("increment mean {0} is not zero")]
    DriftNotZero(f64),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WalkKind {
    FrontierThinned,
    TotalPopulation,
}

impl WalkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FrontierThinned => "FRONTIER_THINNED",
            Self::TotalPopulation => "TOTAL_POPULATION",
        }
    }

    /// Whether a partial sum of `s` ends the walk.
    pub fn crossed(&self, s: i128) -> bool {
        match self {
            Self::FrontierThinned => s < 0,
            Self::TotalPopulation => s <= 0,
        }
    }
}

impl std::str::FromStr for WalkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "frontier_thinned" | "frontier" | "thinned" => Ok(Self::FrontierThinned),
            "total_population" | "total" => Ok(Self::TotalPopulation),
            _ => Err(format!("unknown walk kind '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub kind: WalkKind,
    pub p: f64,
    /// Thinning probability; `None` for the total-population walk.
    pub f: Option<f64>,
    pub law_z: IntegerLaw,
    pub law_x: IntegerLaw,
}

impl WalkSpec {
    pub fn frontier_thinned(
        p: f64,
        f: f64,
        law_z: IntegerLaw,
        law_x: IntegerLaw,
    ) -> Result<Self, LadderError> {
        check_p(p)?;
        if !(f > 0.0 && f < 1.0) {
            return Err(LadderError::BadFrontier(f));
        }
        Ok(Self {
            kind: WalkKind::FrontierThinned,
            p,
            f: Some(f),
            law_z,
            law_x,
        })
    }

    /// Frontier-thinned walk with `f` set to the model's frontier, where
    /// the increments have mean zero.
    pub fn at_frontier(p: f64, law_z: IntegerLaw, law_x: IntegerLaw) -> Result<Self, LadderError> {
        let f = frontier_f(p, law_x.mean(), law_z.mean())?;
        Self::frontier_thinned(p, f, law_z, law_x)
    }

    pub fn total_population(
        p: f64,
        law_z: IntegerLaw,
        law_x: IntegerLaw,
    ) -> Result<Self, LadderError> {
        check_p(p)?;
        Ok(Self {
            kind: WalkKind::TotalPopulation,
            p,
            f: None,
            law_z,
            law_x,
        })
    }

    /// Exact mean of one increment (may be infinite or undefined).
    pub fn increment_mean(&self) -> f64 {
        w_increment_mean(
            self.p,
            self.f.unwrap_or(1.0),
            self.law_z.mean(),
            self.law_x.mean(),
        )
    }
}

fn check_p(p: f64) -> Result<(), LadderError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(LadderError::BadP(p))
    }
}

fn to_i128(v: u64) -> i128 {
    i128::from(v)
}

/// One increment. Draw order: event, then the batch size, then (thinned
/// walk only) the thinning.
pub fn sample_increment(spec: &WalkSpec, rng: &mut RngStream) -> i128 {
    if rng.bernoulli(spec.p) {
        let z = spec.law_z.sample(rng);
        match spec.f {
            Some(f) => to_i128(binomial_thin(z, f, rng)),
            None => to_i128(z),
        }
    } else {
        -to_i128(spec.law_x.sample(rng))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauOutcome {
    Hit(u64),
    /// No crossing within the first `cap` steps.
    Censored(u64),
}

impl TauOutcome {
    /// Whether `tau >= n` is known to hold; `None` when censoring hides it.
    pub fn at_least(&self, n: u64) -> Option<bool> {
        match *self {
            Self::Hit(t) => Some(t >= n),
            // censored at cap means tau > cap
            Self::Censored(cap) if n <= cap + 1 => Some(true),
            Self::Censored(_) => None,
        }
    }
}

pub fn sample_tau(spec: &WalkSpec, rng: &mut RngStream, cap: u64) -> TauOutcome {
    let mut s: i128 = 0;
    for n in 1..=cap {
        s += sample_increment(spec, rng);
        if spec.kind.crossed(s) {
            return TauOutcome::Hit(n);
        }
    }
    TauOutcome::Censored(cap)
}

/// `tau` for walks `0..walks`, each on its own stream. Runs on the current
/// rayon pool; the result does not depend on the pool size.
pub fn sample_taus(spec: &WalkSpec, cap: u64, walks: u64, seed: u64) -> Vec<TauOutcome> {
    (0..walks)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i, Lane::Walk);
            sample_tau(spec, &mut rng, cap)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub walks: u64,
}

impl TailEstimate {
    pub fn asymptote(&self) -> f64 {
        ladder_tail_asymptote(self.n)
    }

    pub fn ratio(&self) -> f64 {
        self.estimate / self.asymptote()
    }
}

fn check_zero_drift(spec: &WalkSpec) -> Result<(), LadderError> {
    let mean = spec.increment_mean();
    if mean.is_finite() && mean.abs() <= DRIFT_TOLERANCE {
        Ok(())
    } else {
        Err(LadderError::DriftNotZero(mean))
    }
}

/// Tail estimates at each `n` from one shared set of walks, so the curve is
/// non-increasing. Walks are capped at `max(ns)`.
pub fn tau_tail_curve(
    spec: &WalkSpec,
    ns: &[u64],
    walks: u64,
    seed: u64,
) -> Result<Vec<TailEstimate>, LadderError> {
    check_zero_drift(spec)?;
    if walks == 0 {
        return Err(LadderError::NonPositive("walks"));
    }
    if ns.contains(&0) {
        return Err(LadderError::NonPositive("n"));
    }
    let cap = ns.iter().copied().max().unwrap_or(1);
    let taus = sample_taus(spec, cap, walks, seed);
    Ok(ns
        .iter()
        .map(|&n| {
            let hits = taus.iter().filter(|t| t.at_least(n) == Some(true)).count() as f64;
            let w = walks as f64;
            let est = hits / w;
            TailEstimate {
                n,
                estimate: est,
                stderr: (est * (1.0 - est) / w).sqrt(),
                walks,
            }
        })
        .collect())
}

/// Monte Carlo estimate of `P(tau >= n)` with its binomial standard error.
pub fn tau_tail_estimate(
    spec: &WalkSpec,
    n: u64,
    walks: u64,
    seed: u64,
) -> Result<TailEstimate, LadderError> {
    Ok(tau_tail_curve(spec, &[n], walks, seed)?[0])
}
