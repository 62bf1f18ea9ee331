//! Statistical checks on trajectories: uniformity of the surviving
//! fitnesses, growth of the above-frontier deficit, and event summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::{Population, SortedVisitor};
use crate::process::Trajectory;

/// Default lower end of the checkpoints used by [`gap_exponent`].
pub const DEFAULT_N_MIN: u64 = 1 << 10;
/// Minimum number of checkpoints in a gap fit.
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("sample is empty")]
    EmptySample,
    #[error("interval [{lo}, {hi}] is empty or not finite")]
    BadInterval { lo: f64, hi: f64 },
    #[error("sample is not sorted")]
    UnsortedSample,
    #[error("need at least {MIN_FIT_POINTS} checkpoints with n >= {n_min}, found {found}")]
    TooFewCheckpoints { n_min: u64, found: usize },
    #[error("trajectory did not track the emptying events")]
    NotTracked,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub sample_size: u64,
    pub p_value: f64,
}

/// `P(K > lambda)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series for the CDF converges fast for small lambda
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1.. {
            let odd = f64::from(2 * k - 1);
            let term = (c * odd * odd).exp();
            sum += term;
            if term <= 1e-17 * sum || k > 100 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = f64::from(k);
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            // alternating series: error below the first omitted term
            if term <= 1e-12 * sum.abs() {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

struct KsAccumulator {
    lo: f64,
    width: f64,
    n: f64,
    seen: u64,
    d: f64,
}

impl KsAccumulator {
    fn new(lo: f64, hi: f64, n: u64) -> Self {
        Self {
            lo,
            width: hi - lo,
            n: n as f64,
            seen: 0,
            d: 0.0,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / self.width).clamp(0.0, 1.0)
    }

    fn finish(self) -> KsResult {
        let statistic = self.d.clamp(0.0, 1.0);
        KsResult {
            statistic,
            sample_size: self.seen,
            p_value: kolmogorov_survival(self.n.sqrt() * statistic),
        }
    }
}

impl SortedVisitor for KsAccumulator {
    fn block(&mut self, lo: f64, hi: f64, count: u64) -> bool {
        let before = self.seen as f64 / self.n;
        let after = (self.seen + count) as f64 / self.n;
        let bound = (after - self.cdf(lo)).max(self.cdf(hi) - before);
        if bound > self.d {
            return true;
        }
        self.seen += count;
        false
    }

    fn point(&mut self, x: f64) {
        let g = self.cdf(x);
        let below = self.seen as f64 / self.n;
        self.seen += 1;
        let upto = self.seen as f64 / self.n;
        self.d = self.d.max(upto - g).max(g - below);
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<(), AnalysisError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(AnalysisError::BadInterval { lo, hi })
    }
}

/// Two-sided KS distance between a sorted sample and `U[lo, hi]`. Values
/// outside the interval are allowed and count fully.
pub fn ks_against_uniform(sample: &[f64], lo: f64, hi: f64) -> Result<KsResult, AnalysisError> {
    check_interval(lo, hi)?;
    if sample.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if sample.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::UnsortedSample);
    }
    let mut acc = KsAccumulator::new(lo, hi, sample.len() as u64);
    for &x in sample {
        acc.point(x);
    }
    Ok(acc.finish())
}

/// KS distance between a whole population and `U[lo, hi]`, exact for
/// lazily held fitnesses too: blocks whose worst case cannot raise the
/// running maximum are skipped without being itemized.
pub fn ks_population(pop: &Population, lo: f64, hi: f64) -> Result<KsResult, AnalysisError> {
    check_interval(lo, hi)?;
    if pop.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let mut acc = KsAccumulator::new(lo, hi, pop.size());
    pop.walk_sorted(&mut acc);
    Ok(acc.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_min: u64,
    pub points: usize,
}

/// Least-squares slope of `ln(gap + 1)` against `ln n` over `n >= n_min`.
pub fn fit_gap_series(series: &[(u64, f64)], n_min: u64) -> Result<GapFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, _)| *n >= n_min && *n > 0)
        .map(|&(n, g)| ((n as f64).ln(), (g + 1.0).ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewCheckpoints {
            n_min,
            found: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - exponent * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(GapFit {
        exponent,
        intercept,
        r_squared,
        n_min,
        points: pts.len(),
    })
}

pub fn gap_exponent(traj: &Trajectory, n_min: u64) -> Result<GapFit, AnalysisError> {
    let series: Vec<(u64, f64)> = traj
        .checkpoints
        .iter()
        .map(|c| (c.n, c.gap() as f64))
        .collect();
    fit_gap_series(&series, n_min)
}

/// `(|L_n| + |R'_n| - |R_n|) / |R'_n|` per checkpoint with `|R'_n| > 0`.
pub fn sym_diff_ratio(traj: &Trajectory) -> Vec<(u64, f64)> {
    traj.checkpoints
        .iter()
        .filter(|c| c.rprime > 0)
        .map(|c| (c.n, c.sym_diff as f64 / c.rprime as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtinctionSummary {
    pub count: u64,
    pub first: Option<u64>,
    pub last: Option<u64>,
    /// Longest stretch between consecutive empty times, counting the start
    /// at time 0 as one.
    pub max_gap: Option<u64>,
}

pub fn extinction_summary(traj: &Trajectory) -> ExtinctionSummary {
    summarize_extinctions(&traj.extinctions)
}

pub fn summarize_extinctions(times: &[u64]) -> ExtinctionSummary {
    let max_gap = std::iter::once(0)
        .chain(times.iter().copied())
        .zip(times.iter().copied())
        .map(|(a, b)| b - a)
        .max();
    ExtinctionSummary {
        count: times.len() as u64,
        first: times.first().copied(),
        last: times.last().copied(),
        max_gap,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyingSummary {
    pub count: u64,
    pub last: Option<u64>,
}

pub fn a_eps_summary(traj: &Trajectory) -> Result<EmptyingSummary, AnalysisError> {
    let times = traj.a_eps.as_ref().ok_or(AnalysisError::NotTracked)?;
    Ok(EmptyingSummary {
        count: times.len() as u64,
        last: times.last().copied(),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// One row of the per-replication summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub rep: String,
    pub ks_stat: Option<f64>,
    pub ks_pvalue: Option<f64>,
    pub gap_exponent: Option<f64>,
    pub sym_diff_final: Option<f64>,
    pub extinctions: Option<f64>,
    pub a_eps_count: Option<f64>,
    pub a_eps_last: Option<f64>,
}

/// Summarizes one trajectory. `uniform_lo` is the lower end of the
/// predicted uniform limit, if the regime has one.
pub fn summarize(
    rep: impl Into<String>,
    traj: &Trajectory,
    uniform_lo: Option<f64>,
    n_min: u64,
) -> ReplicationSummary {
    let ks = uniform_lo.and_then(|lo| ks_population(&traj.final_population, lo, 1.0).ok());
    let a_eps = a_eps_summary(traj).ok();
    ReplicationSummary {
        rep: rep.into(),
        ks_stat: ks.map(|k| k.statistic),
        ks_pvalue: ks.map(|k| k.p_value),
        gap_exponent: traj
            .frontier
            .and_then(|_| gap_exponent(traj, n_min).ok())
            .map(|g| g.exponent),
        sym_diff_final: sym_diff_ratio(traj).last().map(|&(_, r)| r),
        extinctions: Some(traj.extinctions.len() as f64),
        a_eps_count: a_eps.map(|a| a.count as f64),
        a_eps_last: a_eps.and_then(|a| a.last).map(|t| t as f64),
    }
}

/// Column-wise medians over replications, labelled `median`.
pub fn aggregate(rows: &[ReplicationSummary]) -> ReplicationSummary {
    let col = |get: fn(&ReplicationSummary) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(get).collect();
        median(&vals)
    };
    ReplicationSummary {
        rep: "median".to_string(),
        ks_stat: col(|r| r.ks_stat),
        ks_pvalue: col(|r| r.ks_pvalue),
        gap_exponent: col(|r| r.gap_exponent),
        sym_diff_final: col(|r| r.sym_diff_final),
        extinctions: col(|r| r.extinctions),
        a_eps_count: col(|r| r.a_eps_count),
        a_eps_last: col(|r| r.a_eps_last),
    }
}
