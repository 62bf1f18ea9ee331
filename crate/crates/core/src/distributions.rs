//! Positive-integer laws for birth and death batch sizes.
//!
//! Laws are written in a compact colon syntax shared by configs and the
//! command line: `const:k`, `unif:a:b`, `geom:r`, `pois1:lambda`, `zeta:s`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("invalid parameter `{field}` = {value}: {reason}")]
    InvalidParameter {
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("cannot parse law specification: bad token `{token}`")]
    Parse { token: String },
}

/// The family of an [`IntegerLaw`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LawKind {
    Constant,
    UniformRange,
    Geometric,
    ShiftedPoisson,
    Zeta,
}

/// A probability law on `{1, 2, 3, ...}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum IntegerLaw {
    /// Point mass at `k`.
    Constant { k: u64 },
    /// Uniform on the integers `lo..=hi`.
    UniformRange { lo: u64, hi: u64 },
    /// Number of Bernoulli(`r`) trials up to and including the first success.
    Geometric { r: f64 },
    /// `1 + Poisson(lambda)`.
    ShiftedPoisson { lambda: f64 },
    /// `P(k) = k^-s / zeta(s)`.
    Zeta { s: f64 },
}

fn invalid(field: &'static str, value: impl fmt::Display, reason: &'static str) -> LawError {
    LawError::InvalidParameter {
        field,
        value: value.to_string(),
        reason,
    }
}

impl IntegerLaw {
    pub fn constant(k: u64) -> Result<Self, LawError> {
        if k == 0 {
            return Err(invalid("k", k, "must be at least 1"));
        }
        Ok(Self::Constant { k })
    }

    pub fn uniform_range(lo: u64, hi: u64) -> Result<Self, LawError> {
        if lo == 0 {
            return Err(invalid("a", lo, "must be at least 1"));
        }
        if hi < lo {
            return Err(invalid("b", hi, "must be at least a"));
        }
        Ok(Self::UniformRange { lo, hi })
    }

    pub fn geometric(r: f64) -> Result<Self, LawError> {
        if !(r > 0.0 && r < 1.0) {
            return Err(invalid("r", r, "must lie in (0, 1)"));
        }
        Ok(Self::Geometric { r })
    }

    pub fn shifted_poisson(lambda: f64) -> Result<Self, LawError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", lambda, "must be positive and finite"));
        }
        Ok(Self::ShiftedPoisson { lambda })
    }

    pub fn zeta(s: f64) -> Result<Self, LawError> {
        if !(s > 1.0 && s.is_finite()) {
            return Err(invalid("s", s, "must be finite and greater than 1"));
        }
        Ok(Self::Zeta { s })
    }

    /// Builds a law from its kind and a flat parameter list (integers are
    /// passed as reals and must be whole).
    pub fn make(kind: LawKind, params: &[f64]) -> Result<Self, LawError> {
        let arity = match kind {
            LawKind::UniformRange => 2,
            _ => 1,
        };
        if params.len() != arity {
            return Err(invalid(
                "params",
                params.len(),
                "wrong number of parameters",
            ));
        }
        let whole = |field: &'static str, v: f64| -> Result<u64, LawError> {
            if v.fract() != 0.0 || !(v >= 0.0) || v > u64::MAX as f64 {
                Err(invalid(field, v, "must be a non-negative integer"))
            } else {
                Ok(v as u64)
            }
        };
        match kind {
            LawKind::Constant => Self::constant(whole("k", params[0])?),
            LawKind::UniformRange => {
                Self::uniform_range(whole("a", params[0])?, whole("b", params[1])?)
            }
            LawKind::Geometric => Self::geometric(params[0]),
            LawKind::ShiftedPoisson => Self::shifted_poisson(params[0]),
            LawKind::Zeta => Self::zeta(params[0]),
        }
    }

    pub fn kind(&self) -> LawKind {
        match self {
            Self::Constant { .. } => LawKind::Constant,
            Self::UniformRange { .. } => LawKind::UniformRange,
            Self::Geometric { .. } => LawKind::Geometric,
            Self::ShiftedPoisson { .. } => LawKind::ShiftedPoisson,
            Self::Zeta { .. } => LawKind::Zeta,
        }
    }

    /// Draws one value from the law's own lane.
    ///
    /// Randomness consumed per kind: `Constant` none; `UniformRange` one
    /// bounded integer draw (rejection, usually one word); `Geometric` one
    /// `u64`; `ShiftedPoisson` whatever the Poisson sampler needs; `Zeta` two
    /// `u64` per rejection round. Zeta draws beyond `u64::MAX` saturate there;
    /// that event has probability below `1e-9` for `s >= 1.5`.
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        match *self {
            Self::Constant { k } => k,
            Self::UniformRange { lo, hi } => {
                use rand::Rng;
                rng.gen_range(lo..=hi)
            }
            Self::Geometric { r } => {
                // inversion: P(G > k) = (1-r)^k
                let u = rng.next_open_closed();
                let g = (u.ln() / (-r).ln_1p()).floor();
                if g >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    1 + g as u64
                }
            }
            Self::ShiftedPoisson { lambda } => {
                let draw: f64 = Poisson::new(lambda)
                    .expect("lambda validated at construction")
                    .sample(rng);
                1 + draw as u64
            }
            Self::Zeta { s } => sample_zeta(s, rng),
        }
    }

    /// Exact mean, `f64::INFINITY` when it diverges.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Constant { k } => k as f64,
            Self::UniformRange { lo, hi } => (lo as f64 + hi as f64) / 2.0,
            Self::Geometric { r } => 1.0 / r,
            Self::ShiftedPoisson { lambda } => 1.0 + lambda,
            Self::Zeta { s } => {
                if s > 2.0 {
                    riemann_zeta(s - 1.0) / riemann_zeta(s)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Exact `E[X^2]`, `f64::INFINITY` when it diverges.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Constant { k } => (k as f64).powi(2),
            Self::UniformRange { lo, hi } => {
                let sq_sum = |m: f64| m * (m + 1.0) * (2.0 * m + 1.0) / 6.0;
                let (a, b) = (lo as f64, hi as f64);
                (sq_sum(b) - sq_sum(a - 1.0)) / (b - a + 1.0)
            }
            Self::Geometric { r } => (2.0 - r) / (r * r),
            Self::ShiftedPoisson { lambda } => lambda + (1.0 + lambda).powi(2),
            Self::Zeta { s } => {
                if s > 3.0 {
                    riemann_zeta(s - 2.0) / riemann_zeta(s)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        if m.is_infinite() {
            return f64::INFINITY;
        }
        (self.second_moment() - m * m).max(0.0)
    }

    /// Essential supremum, when the law is bounded.
    pub fn sup(&self) -> Option<u64> {
        match *self {
            Self::Constant { k } => Some(k),
            Self::UniformRange { hi, .. } => Some(hi),
            _ => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.sup().is_some()
    }

    /// Probability mass function.
    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match *self {
            Self::Constant { k: c } => f64::from(u8::from(k == c)),
            Self::UniformRange { lo, hi } => {
                if (lo..=hi).contains(&k) {
                    1.0 / (hi - lo + 1) as f64
                } else {
                    0.0
                }
            }
            Self::Geometric { r } => r * (1.0 - r).powf((k - 1) as f64),
            Self::ShiftedPoisson { lambda } => {
                let j = (k - 1) as f64;
                (j * lambda.ln() - lambda - ln_factorial(k - 1)).exp()
            }
            Self::Zeta { s } => (k as f64).powf(-s) / riemann_zeta(s),
        }
    }

    /// The full support with weights, for laws with finite support.
    pub fn finite_support(&self) -> Option<Vec<(u64, f64)>> {
        match *self {
            Self::Constant { k } => Some(vec![(k, 1.0)]),
            Self::UniformRange { lo, hi } => {
                let w = 1.0 / (hi - lo + 1) as f64;
                Some((lo..=hi).map(|k| (k, w)).collect())
            }
            _ => None,
        }
    }
}

impl fmt::Display for IntegerLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { k } => write!(f, "const:{k}"),
            Self::UniformRange { lo, hi } => write!(f, "unif:{lo}:{hi}"),
            Self::Geometric { r } => write!(f, "geom:{r}"),
            Self::ShiftedPoisson { lambda } => write!(f, "pois1:{lambda}"),
            Self::Zeta { s } => write!(f, "zeta:{s}"),
        }
    }
}

impl FromStr for IntegerLaw {
    type Err = LawError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = |token: &str| LawError::Parse {
            token: token.to_string(),
        };
        let mut parts = spec.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let int = |tok: &str| tok.parse::<u64>().map_err(|_| bad(tok));
        let real = |tok: &str| tok.parse::<f64>().map_err(|_| bad(tok));
        let expect = |n: usize| -> Result<(), LawError> {
            match args.len().cmp(&n) {
                std::cmp::Ordering::Equal => Ok(()),
                std::cmp::Ordering::Less => Err(bad(spec)),
                std::cmp::Ordering::Greater => Err(bad(args[n])),
            }
        };
        match head {
            "const" => {
                expect(1)?;
                Self::constant(int(args[0])?)
            }
            "unif" => {
                expect(2)?;
                Self::uniform_range(int(args[0])?, int(args[1])?)
            }
            "geom" => {
                expect(1)?;
                Self::geometric(real(args[0])?)
            }
            "pois1" => {
                expect(1)?;
                Self::shifted_poisson(real(args[0])?)
            }
            "zeta" => {
                expect(1)?;
                Self::zeta(real(args[0])?)
            }
            other => Err(bad(other)),
        }
    }
}

impl From<IntegerLaw> for String {
    fn from(law: IntegerLaw) -> Self {
        law.to_string()
    }
}

impl TryFrom<String> for IntegerLaw {
    type Error = LawError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Devroye's rejection sampler for the zeta law, dominated by the
/// continuous Pareto envelope `floor(U^(-1/(s-1)))`.
fn sample_zeta(s: f64, rng: &mut RngStream) -> u64 {
    let s1 = s - 1.0;
    let b = 2f64.powf(s1);
    loop {
        let u = rng.next_open_closed();
        let x = u.powf(-1.0 / s1).floor();
        if !x.is_finite() {
            return u64::MAX;
        }
        let t = (1.0 + 1.0 / x).powf(s1);
        let v = rng.next_unit();
        if v * x * (t - 1.0) * b <= t * (b - 1.0) {
            return if x >= u64::MAX as f64 {
                u64::MAX
            } else {
                x as u64
            };
        }
    }
}

/// Number of successes among `z` independent trials with success
/// probability `f`, i.e. how many of `z` uniforms land in `[0, f)`.
///
/// Small batches count uniforms one by one; larger ones use an exact
/// binomial sampler.
pub fn binomial_thin(z: u64, f: f64, rng: &mut RngStream) -> u64 {
    const PER_TRIAL_MAX: u64 = 32;
    if z == 0 || f <= 0.0 {
        return 0;
    }
    if f >= 1.0 {
        return z;
    }
    if z <= PER_TRIAL_MAX {
        (0..z).filter(|_| rng.next_unit() < f).count() as u64
    } else {
        Binomial::new(z, f)
            .expect("probability checked above")
            .sample(rng)
    }
}

const BERNOULLI_2J: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Riemann zeta for real `s > 1` by Euler-Maclaurin summation with a
/// 32-term head and eight Bernoulli corrections (relative error well
/// under `1e-13` on `s > 1`).
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta series diverges for s <= 1");
    const HEAD: u32 = 32;
    let n = f64::from(HEAD);
    let mut sum: f64 = (1..HEAD).rev().map(|k| f64::from(k).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) over (2j)!, times N^{-s-2j+1}
    let mut coef = s / 2.0;
    let mut npow = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI_2J.iter().enumerate() {
        sum += b * coef * npow;
        let j = j as f64 + 1.0;
        coef *= (s + 2.0 * j - 1.0) * (s + 2.0 * j) / ((2.0 * j + 1.0) * (2.0 * j + 2.0));
        npow /= n * n;
    }
    sum
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
