//! Closed-form thresholds of the batch birth / bottom-cull model and the
//! classification of parameter space into limiting regimes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::IntegerLaw;

/// Tolerance for deciding `p == p_c`.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("critical probability is undefined when both batch means are infinite")]
    BothMeansInfinite,
    #[error("p = {p} is not above the critical probability {p_c}")]
    NotSupercritical { p: f64, p_c: f64 },
    #[error("invalid argument `{0}`")]
    InvalidArgument(&'static str),
}

/// `mu_x / (mu_x + mu_z)`: birth probability above which the population
/// drifts upward. An infinite death mean gives 1, an infinite birth mean 0.
pub fn critical_p(mu_x: f64, mu_z: f64) -> Result<f64, TheoryError> {
    if !(mu_x > 0.0) || !(mu_z > 0.0) {
        return Err(TheoryError::InvalidArgument("means must be positive"));
    }
    match (mu_x.is_infinite(), mu_z.is_infinite()) {
        (true, true) => Err(TheoryError::BothMeansInfinite),
        (true, false) => Ok(1.0),
        (false, true) => Ok(0.0),
        (false, false) => Ok(mu_x / (mu_x + mu_z)),
    }
}

/// The frontier `f = (q/p)(mu_x/mu_z)` separating transient low-fitness
/// species from the surviving uniform sample.
pub fn frontier_f(p: f64, mu_x: f64, mu_z: f64) -> Result<f64, TheoryError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(TheoryError::InvalidArgument("p must lie in (0, 1)"));
    }
    if !mu_x.is_finite() || !mu_z.is_finite() {
        return Err(TheoryError::InvalidArgument("means must be finite"));
    }
    let p_c = critical_p(mu_x, mu_z)?;
    if p <= p_c + CRITICAL_TOLERANCE {
        return Err(TheoryError::NotSupercritical { p, p_c });
    }
    Ok((1.0 - p) / p * (mu_x / mu_z))
}

/// Mean of one step of the frontier-thinned walk:
/// `p f mu_z - (1 - p) mu_x`. Vanishes at the frontier.
pub fn w_increment_mean(p: f64, f: f64, mu_z: f64, mu_x: f64) -> f64 {
    p * f * mu_z - (1.0 - p) * mu_x
}

/// `P(xi >= m) = (1 - (p f)^M)^floor(m / M)`: tail of the geometric-block
/// bound on the length of a stretch with fewer than `M` sub-frontier
/// species.
pub fn xi_tail(m: u64, bound_m: u64, p: f64, f: f64) -> f64 {
    assert!(bound_m > 0, "M must be positive");
    let blocks = (m / bound_m) as f64;
    (1.0 - (p * f).powf(bound_m as f64)).powf(blocks)
}

/// `1 / sqrt(pi n)`, the zero-drift ladder tail asymptote.
pub fn ladder_tail_asymptote(n: u64) -> f64 {
    1.0 / (std::f64::consts::PI * n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// Finite means, `p > p_c`: the population approaches a `U[f, 1]` sample.
    SupercriticalUniformF1,
    /// Infinite birth mean, finite death mean: approaches a `U[0, 1]` sample.
    #[serde(rename = "INFINITE_BIRTH_UNIFORM_01")]
    InfiniteBirthUniform01,
    /// Finite means, `p < p_c`: empty infinitely often.
    SubcriticalRecurrent,
    /// Infinite death mean, finite birth mean: empty infinitely often.
    InfiniteDeathRecurrent,
    /// Finite means, `p = p_c`: no known limit.
    CriticalUnresolved,
    /// Both means infinite: no known limit.
    DoublyInfiniteUnresolved,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SupercriticalUniformF1 => "SUPERCRITICAL_UNIFORM_F1",
            Self::InfiniteBirthUniform01 => "INFINITE_BIRTH_UNIFORM_01",
            Self::SubcriticalRecurrent => "SUBCRITICAL_RECURRENT",
            Self::InfiniteDeathRecurrent => "INFINITE_DEATH_RECURRENT",
            Self::CriticalUnresolved => "CRITICAL_UNRESOLVED",
            Self::DoublyInfiniteUnresolved => "DOUBLY_INFINITE_UNRESOLVED",
        }
    }

    /// The interval `[lo, 1]` whose uniform law is the limit, if any.
    pub fn uniform_limit_lo(&self, f: Option<f64>) -> Option<f64> {
        match self {
            Self::SupercriticalUniformF1 => f,
            Self::InfiniteBirthUniform01 => Some(0.0),
            _ => None,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(
            self,
            Self::SubcriticalRecurrent | Self::InfiniteDeathRecurrent
        )
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Moment hypotheses checked while classifying.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    #[serde(rename = "X bounded")]
    DeathBounded,
    #[serde(rename = "X unbounded")]
    DeathUnbounded,
    #[serde(rename = "E X < inf")]
    DeathMeanFinite,
    #[serde(rename = "E X = inf")]
    DeathMeanInfinite,
    #[serde(rename = "E Z < inf")]
    BirthMeanFinite,
    #[serde(rename = "E Z = inf")]
    BirthMeanInfinite,
    #[serde(rename = "E Z^2 < inf")]
    BirthSecondMomentFinite,
    #[serde(rename = "E Z^2 = inf")]
    BirthSecondMomentInfinite,
}

impl Hypothesis {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::DeathBounded => "X bounded",
            Self::DeathUnbounded => "X unbounded",
            Self::DeathMeanFinite => "E X < inf",
            Self::DeathMeanInfinite => "E X = inf",
            Self::BirthMeanFinite => "E Z < inf",
            Self::BirthMeanInfinite => "E Z = inf",
            Self::BirthSecondMomentFinite => "E Z^2 < inf",
            Self::BirthSecondMomentInfinite => "E Z^2 = inf",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub p: f64,
    pub mean_x: f64,
    pub mean_z: f64,
    /// Absent only when both means are infinite.
    pub p_c: Option<f64>,
    /// Present iff the regime is supercritical.
    pub f: Option<f64>,
    pub regime: Regime,
    pub hypotheses_used: Vec<Hypothesis>,
}

impl RegimeReport {
    /// Whether the quantitative gap bound's hypotheses (bounded X and
    /// finite `E Z^2`) hold on top of supercriticality.
    pub fn gap_bound_applies(&self) -> bool {
        self.regime == Regime::SupercriticalUniformF1
            && self.hypotheses_used.contains(&Hypothesis::DeathBounded)
            && self
                .hypotheses_used
                .contains(&Hypothesis::BirthSecondMomentFinite)
    }
}

/// Classifies `(p, X, Z)`; depends on the laws only through their moments
/// and boundedness.
pub fn classify_regime(p: f64, law_x: &IntegerLaw, law_z: &IntegerLaw) -> RegimeReport {
    let mean_x = law_x.mean();
    let mean_z = law_z.mean();
    let mut hyps = vec![
        if law_x.is_bounded() {
            Hypothesis::DeathBounded
        } else {
            Hypothesis::DeathUnbounded
        },
        if mean_x.is_finite() {
            Hypothesis::DeathMeanFinite
        } else {
            Hypothesis::DeathMeanInfinite
        },
        if mean_z.is_finite() {
            Hypothesis::BirthMeanFinite
        } else {
            Hypothesis::BirthMeanInfinite
        },
    ];
    hyps.push(if law_z.second_moment().is_finite() {
        Hypothesis::BirthSecondMomentFinite
    } else {
        Hypothesis::BirthSecondMomentInfinite
    });

    let p_c = critical_p(mean_x, mean_z).ok();
    let (regime, f) = match (mean_x.is_finite(), mean_z.is_finite()) {
        (false, false) => (Regime::DoublyInfiniteUnresolved, None),
        (true, false) => (Regime::InfiniteBirthUniform01, None),
        (false, true) => (Regime::InfiniteDeathRecurrent, None),
        (true, true) => {
            let p_c = p_c.expect("finite means");
            if (p - p_c).abs() <= CRITICAL_TOLERANCE {
                (Regime::CriticalUnresolved, None)
            } else if p > p_c {
                let f = (1.0 - p) / p * (mean_x / mean_z);
                (Regime::SupercriticalUniformF1, Some(f))
            } else {
                (Regime::SubcriticalRecurrent, None)
            }
        }
    };
    RegimeReport {
        p,
        mean_x,
        mean_z,
        p_c,
        f,
        regime,
        hypotheses_used: hyps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(s: &str) -> IntegerLaw {
        s.parse().unwrap()
    }

    #[test]
    fn critical_p_examples() {
        assert_eq!(critical_p(1.0, 1.0).unwrap(), 0.5);
        assert!((critical_p(2.0, 3.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(critical_p(f64::INFINITY, 2.0).unwrap(), 1.0);
        assert_eq!(critical_p(2.0, f64::INFINITY).unwrap(), 0.0);
        assert_eq!(
            critical_p(f64::INFINITY, f64::INFINITY),
            Err(TheoryError::BothMeansInfinite)
        );
    }

    #[test]
    fn frontier_examples() {
        assert!((frontier_f(0.75, 1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((frontier_f(0.6, 2.0, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            frontier_f(0.4, 2.0, 2.0),
            Err(TheoryError::NotSupercritical { p_c, .. }) if p_c == 0.5
        ));
        assert!(frontier_f(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn increment_mean_examples() {
        let f = frontier_f(0.6, 2.0, 2.0).unwrap();
        assert!(w_increment_mean(0.6, f, 2.0, 2.0).abs() < 1e-12);
        assert!((w_increment_mean(0.6, 0.9, 2.0, 2.0) - 0.28).abs() < 1e-12);
        assert!((w_increment_mean(0.6, 0.0, 2.0, 2.0) + 0.4 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn classify_examples() {
        let r = classify_regime(0.6, &law("unif:1:3"), &law("pois1:1.0"));
        assert_eq!(r.regime, Regime::SupercriticalUniformF1);
        assert!((r.f.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.gap_bound_applies());

        let r = classify_regime(0.3, &law("unif:1:3"), &law("pois1:1.0"));
        assert_eq!(r.regime, Regime::SubcriticalRecurrent);
        assert_eq!(r.f, None);

        let r = classify_regime(0.5, &law("const:1"), &law("const:1"));
        assert_eq!(r.regime, Regime::CriticalUnresolved);

        let r = classify_regime(0.9, &law("zeta:1.5"), &law("const:2"));
        assert_eq!(r.regime, Regime::InfiniteDeathRecurrent);
        assert_eq!(r.p_c, Some(1.0));

        let r = classify_regime(0.5, &law("const:2"), &law("zeta:1.5"));
        assert_eq!(r.regime, Regime::InfiniteBirthUniform01);
        assert_eq!(r.p_c, Some(0.0));
        assert!(r
            .hypotheses_used
            .contains(&Hypothesis::BirthSecondMomentInfinite));

        let r = classify_regime(0.5, &law("zeta:2"), &law("zeta:1.5"));
        assert_eq!(r.regime, Regime::DoublyInfiniteUnresolved);
        assert_eq!(r.p_c, None);
    }

    #[test]
    fn unbounded_death_disables_gap_bound() {
        let r = classify_regime(0.7, &law("geom:0.5"), &law("const:2"));
        assert_eq!(r.regime, Regime::SupercriticalUniformF1);
        assert!(!r.gap_bound_applies());
        assert!(r.hypotheses_used.contains(&Hypothesis::DeathUnbounded));
    }

    #[test]
    fn xi_tail_examples() {
        assert_eq!(xi_tail(0, 2, 0.6, 0.5), 1.0);
        assert!((xi_tail(4, 2, 0.6, 0.5) - 0.8281).abs() < 1e-15);
        assert_eq!(xi_tail(1, 2, 0.6, 0.5), 1.0);
    }

    #[test]
    fn asymptote_examples() {
        assert!((ladder_tail_asymptote(100) - 0.056_418_958_354_775_63).abs() < 1e-15);
        assert!((ladder_tail_asymptote(1) - 0.564_189_583_547_756_3).abs() < 1e-15);
        let ratio = ladder_tail_asymptote(25) / ladder_tail_asymptote(100);
        assert!((ratio - 2.0).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn finite_law() -> impl Strategy<Value = IntegerLaw> {
            prop_oneof![
                (1u64..6).prop_map(|k| IntegerLaw::constant(k).unwrap()),
                (1u64..4, 0u64..5).prop_map(|(a, d)| IntegerLaw::uniform_range(a, a + d).unwrap()),
                (0.05f64..0.99).prop_map(|r| IntegerLaw::geometric(r).unwrap()),
                (0.01f64..5.0).prop_map(|l| IntegerLaw::shifted_poisson(l).unwrap()),
                (2.05f64..5.0).prop_map(|s| IntegerLaw::zeta(s).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn frontier_in_unit_interval_with_zero_drift(
                p in 0.001f64..0.999,
                x in finite_law(),
                z in finite_law(),
            ) {
                let r = classify_regime(p, &x, &z);
                let p_c = critical_p(x.mean(), z.mean()).unwrap();
                match r.f {
                    Some(f) => {
                        prop_assert!(p > p_c);
                        prop_assert!(f > 0.0 && f < 1.0);
                        let drift = w_increment_mean(p, f, z.mean(), x.mean());
                        prop_assert!(drift.abs() < 1e-12, "drift {}", drift);
                    }
                    None => prop_assert!(p <= p_c + CRITICAL_TOLERANCE),
                }
            }

            #[test]
            fn regime_depends_on_means_only(p in 0.01f64..0.99, k in 1u64..5, d in 0u64..4) {
                // unif:a:a+2d and const:a+d share a mean
                let a = IntegerLaw::uniform_range(k, k + 2 * d).unwrap();
                let b = IntegerLaw::constant(k + d).unwrap();
                let z = IntegerLaw::shifted_poisson(1.5).unwrap();
                prop_assert_eq!(classify_regime(p, &a, &z).regime, classify_regime(p, &b, &z).regime);
                prop_assert_eq!(classify_regime(p, &z, &a).regime, classify_regime(p, &z, &b).regime);
            }

            #[test]
            fn critical_p_is_monotone(mx in 1.0f64..50.0, mz in 1.0f64..50.0, bump in 0.01f64..10.0) {
                let base = critical_p(mx, mz).unwrap();
                prop_assert!(critical_p(mx + bump, mz).unwrap() > base);
                prop_assert!(critical_p(mx, mz + bump).unwrap() < base);
            }
        }
    }
}
