//! Step dynamics and checkpointed trajectories.
//!
//! Each step draws one event. With probability `p` a batch of `Z` newborns
//! with i.i.d. `U[0, 1]` fitnesses joins; otherwise the `X` lowest
//! fitnesses are removed (everything, if fewer remain). The step from time
//! `n` to `n + 1` consumes the index-`n` draws, and all recorded times refer
//! to the state after the step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::IntegerLaw;
use crate::population::Population;
use crate::rng::Streams;
use crate::theory::{classify_regime, RegimeReport};

pub const DEFAULT_EPS: f64 = 0.05;
/// Birth batches at least this large enter the population lazily.
pub const DEFAULT_LAZY_BATCH_MIN: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("p = {0} must lie strictly between 0 and 1")]
    InvalidP(f64),
    #[error("eps_track = {eps} must be >= 0 with f + eps < 1 (f = {f:?})")]
    EpsOutOfRange { eps: f64, f: Option<f64> },
    #[error("checkpoints must be strictly increasing within [1, {horizon}]")]
    BadCheckpoints { horizon: u64 },
    #[error("bound M = {bound} is below the death law's supremum {sup}")]
    BoundBelowSupremum { bound: u64, sup: u64 },
    #[error("a bound M is only meaningful for a bounded death law")]
    BoundForUnboundedLaw,
    #[error("lazy batch threshold must be positive")]
    BadLazyThreshold,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Full description of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub p: f64,
    pub law_z: IntegerLaw,
    pub law_x: IntegerLaw,
    pub horizon: u64,
    pub seed: u64,
    /// Margin above the frontier for the emptying-event tracker.
    pub eps_track: f64,
    /// Supremum of the death law, when bounded. Enables bad-time counting.
    pub bound_m: Option<u64>,
    pub checkpoints: Vec<u64>,
    /// Birth batches of at least this size are kept unrealized; `None`
    /// realizes every newborn.
    pub lazy_batch_min: Option<u64>,
}

/// `1, 2, 4, ...` up to `horizon`, plus `horizon` itself.
pub fn geometric_checkpoints(horizon: u64) -> Vec<u64> {
    let mut cps: Vec<u64> = std::iter::successors(Some(1u64), |&n| n.checked_mul(2))
        .take_while(|&n| n <= horizon)
        .collect();
    if horizon > 0 && cps.last() != Some(&horizon) {
        cps.push(horizon);
    }
    cps
}

impl ModelConfig {
    /// Config with defaults: geometric checkpoints, `M` = supremum of the
    /// death law, `eps_track` = 0.05 (halved distance to 1 when the
    /// frontier is too close to 1 for that).
    pub fn new(
        p: f64,
        law_z: IntegerLaw,
        law_x: IntegerLaw,
        horizon: u64,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ConfigError::InvalidP(p));
        }
        let mut config = Self {
            p,
            law_z,
            law_x,
            horizon,
            seed,
            eps_track: DEFAULT_EPS,
            bound_m: law_x.sup(),
            checkpoints: geometric_checkpoints(horizon),
            lazy_batch_min: Some(DEFAULT_LAZY_BATCH_MIN),
        };
        if let Some(f) = config.frontier() {
            if f + DEFAULT_EPS >= 1.0 {
                config.eps_track = (1.0 - f) / 2.0;
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self, ConfigError> {
        self.eps_track = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Result<Self, ConfigError> {
        self.checkpoints = checkpoints;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bound_m(mut self, bound: Option<u64>) -> Result<Self, ConfigError> {
        self.bound_m = bound;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lazy_batch_min(mut self, min: Option<u64>) -> Result<Self, ConfigError> {
        self.lazy_batch_min = min;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(ConfigError::InvalidP(self.p));
        }
        let f = self.frontier();
        if !(self.eps_track >= 0.0) || f.is_some_and(|f| f + self.eps_track >= 1.0) {
            return Err(ConfigError::EpsOutOfRange {
                eps: self.eps_track,
                f,
            });
        }
        let increasing = self.checkpoints.windows(2).all(|w| w[0] < w[1]);
        let in_range = self
            .checkpoints
            .iter()
            .all(|&c| c >= 1 && c <= self.horizon);
        if !increasing || !in_range {
            return Err(ConfigError::BadCheckpoints {
                horizon: self.horizon,
            });
        }
        if let Some(bound) = self.bound_m {
            match self.law_x.sup() {
                None => return Err(ConfigError::BoundForUnboundedLaw),
                Some(sup) if bound < sup => {
                    return Err(ConfigError::BoundBelowSupremum { bound, sup })
                }
                _ => {}
            }
        }
        if self.lazy_batch_min == Some(0) {
            return Err(ConfigError::BadLazyThreshold);
        }
        Ok(())
    }

    pub fn report(&self) -> RegimeReport {
        classify_regime(self.p, &self.law_x, &self.law_z)
    }

    /// The frontier `f`, defined only in the supercritical regime.
    pub fn frontier(&self) -> Option<f64> {
        self.report().f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub size: u64,
    /// Living species below the frontier.
    pub l: u64,
    /// Living species at or above the frontier.
    pub r: u64,
    /// Species ever born at or above the frontier.
    pub rprime: u64,
    /// Steps `1..=n` that ended with fewer than `M` species below the frontier.
    pub t_bad: Option<u64>,
    /// `l + (rprime - r)`.
    pub sym_diff: u64,
}

impl Checkpoint {
    pub fn gap(&self) -> u64 {
        self.rprime - self.r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub horizon: u64,
    /// `None` outside the supercritical regime; then `l = 0` and
    /// `rprime` counts every birth.
    pub frontier: Option<f64>,
    pub eps: f64,
    pub bound_m: Option<u64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Times `n >= 1` with an empty population.
    pub extinctions: Vec<u64>,
    /// Times of death steps that emptied `[0, f + eps)`; `None` when untracked.
    pub a_eps: Option<Vec<u64>>,
    pub final_population: Population,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Birth(u64),
    Death { drawn: u64, removed: u64 },
}

/// One replication in progress.
pub struct Simulation<'a> {
    config: &'a ModelConfig,
    frontier: Option<f64>,
    eps_cut: Option<f64>,
    bound_m: Option<u64>,
    pop: Population,
    streams: Streams,
    n: u64,
    births: u64,
    l: u64,
    l_eps: u64,
    rprime: u64,
    t_bad: u64,
    extinctions: Vec<u64>,
    a_eps: Vec<u64>,
    checkpoints: Vec<Checkpoint>,
    next_cp: usize,
    batch: Vec<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a ModelConfig, replication: u64) -> Self {
        let frontier = config.frontier();
        let streams = Streams::new(config.seed, replication);
        let lazy = streams.lazy.clone();
        Self {
            config,
            frontier,
            eps_cut: frontier.map(|f| f + config.eps_track),
            bound_m: frontier.and(config.bound_m),
            pop: Population::with_lazy_stream(lazy),
            streams,
            n: 0,
            births: 0,
            l: 0,
            l_eps: 0,
            rprime: 0,
            t_bad: 0,
            extinctions: Vec::new(),
            a_eps: Vec::new(),
            checkpoints: Vec::with_capacity(config.checkpoints.len()),
            next_cp: 0,
            batch: Vec::new(),
        }
    }

    pub fn time(&self) -> u64 {
        self.n
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    fn r(&self) -> u64 {
        self.pop.size() - self.l
    }

    fn gap(&self) -> u64 {
        self.rprime - self.r()
    }

    /// Draws and applies one event.
    pub fn step(&mut self) -> StepOutcome {
        if self.streams.event.bernoulli(self.config.p) {
            let z = self.config.law_z.sample(&mut self.streams.births);
            if self.config.lazy_batch_min.is_some_and(|m| z >= m) {
                self.apply_lazy_birth(z);
            } else {
                let mut batch = std::mem::take(&mut self.batch);
                batch.clear();
                batch.extend((0..z).map(|_| self.streams.fitness.next_unit()));
                self.apply_birth(&batch);
                self.batch = batch;
            }
            StepOutcome::Birth(z)
        } else {
            let x = self.config.law_x.sample(&mut self.streams.deaths);
            let removed = self.apply_death(x);
            StepOutcome::Death { drawn: x, removed }
        }
    }

    /// Applies a birth event with the given fitnesses.
    pub fn apply_birth(&mut self, fitnesses: &[f64]) {
        self.pop
            .insert_batch(fitnesses)
            .expect("newborn fitnesses lie in [0, 1)");
        self.after_birth(fitnesses.len() as u64);
    }

    /// Applies a birth event of `count` unrealized uniform newborns.
    pub fn apply_lazy_birth(&mut self, count: u64) {
        self.pop.insert_uniform_lazy(count);
        self.after_birth(count);
    }

    fn after_birth(&mut self, z: u64) {
        let gap_before = self.rprime - (self.pop.size() - z - self.l);
        self.births = self.births.saturating_add(z);
        let l_before = self.l;
        self.refresh_low_counts();
        if self.frontier.is_some() {
            self.rprime += z - (self.l - l_before);
        }
        debug_assert_eq!(self.gap(), gap_before, "births never widen the gap");
        self.finish_step(false);
    }

    /// Applies a death event removing up to `x` lowest fitnesses.
    pub fn apply_death(&mut self, x: u64) -> u64 {
        let (l_before, l_eps_before, gap_before) = (self.l, self.l_eps, self.gap());
        let removed = self.pop.remove_k_smallest(x);
        self.refresh_low_counts();
        let emptied = self.eps_cut.is_some() && x >= l_eps_before;
        debug_assert!(
            self.eps_cut.is_none() || emptied == (self.l_eps == 0),
            "emptying tracker disagrees with the population"
        );
        if let Some(m) = self.bound_m {
            debug_assert!(
                self.gap() == gap_before || l_before < m,
                "gap moved at n = {} with {l_before} >= M = {m} species below f",
                self.n
            );
        }
        self.finish_step(emptied);
        removed
    }

    fn refresh_low_counts(&mut self) {
        if let (Some(f), Some(cut)) = (self.frontier, self.eps_cut) {
            self.l = self.pop.count_below(f);
            self.l_eps = self.pop.count_below(cut);
        } else {
            self.rprime = self.births;
        }
    }

    fn finish_step(&mut self, emptied_low: bool) {
        self.n += 1;
        let n = self.n;
        if self.bound_m.is_some_and(|m| self.l < m) {
            self.t_bad += 1;
        }
        if self.pop.is_empty() {
            self.extinctions.push(n);
        }
        if emptied_low {
            self.a_eps.push(n);
        }
        if self.config.checkpoints.get(self.next_cp) == Some(&n) {
            self.next_cp += 1;
            let r = self.r();
            self.checkpoints.push(Checkpoint {
                n,
                size: self.pop.size(),
                l: self.l,
                r,
                rprime: self.rprime,
                t_bad: self.bound_m.map(|_| self.t_bad),
                sym_diff: self.l + (self.rprime - r),
            });
        }
    }

    pub fn finish(self) -> Trajectory {
        Trajectory {
            horizon: self.config.horizon,
            frontier: self.frontier,
            eps: self.config.eps_track,
            bound_m: self.bound_m,
            checkpoints: self.checkpoints,
            extinctions: self.extinctions,
            a_eps: self.eps_cut.map(|_| self.a_eps),
            final_population: self.pop,
        }
    }
}

/// Runs replication `replication` of `config` from the empty population.
pub fn run_replication(config: &ModelConfig, replication: u64) -> Trajectory {
    let mut sim = Simulation::new(config, replication);
    for _ in 0..config.horizon {
        sim.step();
    }
    sim.finish()
}

/// Replication 0.
pub fn run(config: &ModelConfig) -> Trajectory {
    run_replication(config, 0)
}

/// Replications `0..replications` on a pool of `threads` workers. The
/// output depends only on `(config, replications)`.
pub fn run_ensemble(
    config: &ModelConfig,
    replications: u64,
    threads: usize,
) -> Result<Vec<Trajectory>, ConfigError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ConfigError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|i| run_replication(config, i))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(s: &str) -> IntegerLaw {
        s.parse().unwrap()
    }

    fn supercritical(horizon: u64) -> ModelConfig {
        ModelConfig::new(0.6, law("pois1:1.0"), law("unif:1:3"), horizon, 5).unwrap()
    }

    #[test]
    fn geometric_grid() {
        assert_eq!(geometric_checkpoints(0), Vec::<u64>::new());
        assert_eq!(geometric_checkpoints(1), vec![1]);
        assert_eq!(geometric_checkpoints(8), vec![1, 2, 4, 8]);
        assert_eq!(geometric_checkpoints(10), vec![1, 2, 4, 8, 10]);
    }

    #[test]
    fn config_validation() {
        let z = law("const:1");
        assert_eq!(
            ModelConfig::new(1.0, z, z, 10, 0),
            Err(ConfigError::InvalidP(1.0))
        );
        let c = ModelConfig::new(0.75, z, z, 10, 0).unwrap();
        assert_eq!(c.bound_m, Some(1));
        assert!(c.clone().with_checkpoints(vec![3, 2]).is_err());
        assert!(c.clone().with_checkpoints(vec![0, 2]).is_err());
        assert!(c.clone().with_checkpoints(vec![11]).is_err());
        assert!(c.clone().with_eps(-0.1).is_err());
        // f = 1/3, so f + eps must stay below 1
        assert!(c.clone().with_eps(0.7).is_err());
        assert!(c.clone().with_eps(0.6).is_ok());
        assert!(c.clone().with_bound_m(Some(0)).is_err());
        assert!(c.clone().with_bound_m(Some(4)).is_ok());
        let g = ModelConfig::new(0.75, z, law("geom:0.5"), 10, 0).unwrap();
        assert_eq!(g.bound_m, None);
        assert_eq!(
            g.with_bound_m(Some(3)),
            Err(ConfigError::BoundForUnboundedLaw)
        );
    }

    #[test]
    fn eps_default_shrinks_near_one() {
        // f = (0.49/0.51) * (1/1) is about 0.96
        let c = ModelConfig::new(0.51, law("const:1"), law("const:1"), 10, 0).unwrap();
        let f = c.frontier().unwrap();
        assert!(f + c.eps_track < 1.0);
        assert!((c.eps_track - (1.0 - f) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn death_on_empty_population() {
        let c = supercritical(10);
        let mut sim = Simulation::new(&c, 0);
        assert_eq!(sim.apply_death(3), 0);
        assert_eq!(sim.population().size(), 0);
        let t = sim.finish();
        assert_eq!(t.extinctions, vec![1]);
        assert_eq!(t.a_eps, Some(vec![1]));
    }

    #[test]
    fn birth_counts_split_at_frontier() {
        let c = supercritical(10);
        let mut sim = Simulation::new(&c, 0);
        sim.apply_birth(&[0.1, 0.7, 0.95]);
        assert_eq!(sim.population().size(), 3);
        assert_eq!(sim.rprime, 2);
        assert_eq!(sim.l, 1);
    }

    #[test]
    fn death_removes_low_species_first() {
        let c = supercritical(10);
        let mut sim = Simulation::new(&c, 0);
        sim.apply_birth(&[0.1, 0.2, 0.9]);
        let (l0, r0) = (sim.l, sim.r());
        assert_eq!(sim.apply_death(2), 2);
        assert_eq!(sim.population().snapshot_sorted(), vec![0.9]);
        assert_eq!(l0 - sim.l, 2);
        assert_eq!(sim.r(), r0);
        // 0.9 is above f + eps = 0.7166..: the death emptied [0, f + eps)
        let t = sim.finish();
        assert_eq!(t.a_eps, Some(vec![2]));
    }

    #[test]
    fn empty_horizon() {
        let t = run(&supercritical(0));
        assert!(t.checkpoints.is_empty());
        assert!(t.extinctions.is_empty());
        assert!(t.final_population.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let c = supercritical(20_000);
        let a = run(&c);
        let b = run(&c);
        assert_eq!(a, b);
        assert_ne!(a, run(&c.clone().with_seed(6)));
        assert_ne!(a, run_replication(&c, 1));
    }

    #[test]
    fn trajectory_invariants() {
        let c = supercritical(50_000);
        let t = run(&c);
        let m = c.bound_m.unwrap();
        for w in t.checkpoints.windows(2) {
            assert!(w[0].rprime <= w[1].rprime);
            assert!(w[0].t_bad <= w[1].t_bad);
        }
        for cp in &t.checkpoints {
            assert_eq!(cp.size, cp.l + cp.r);
            assert!(cp.r <= cp.rprime);
            assert!(cp.gap() <= m * cp.t_bad.unwrap());
        }
        assert_eq!(t.checkpoints.last().unwrap().n, 50_000);
        assert_eq!(
            t.final_population.size(),
            t.checkpoints.last().unwrap().size
        );
    }

    #[test]
    fn conservation_per_step() {
        let c = ModelConfig::new(0.45, law("geom:0.4"), law("unif:1:4"), 5_000, 9).unwrap();
        let mut sim = Simulation::new(&c, 0);
        for _ in 0..c.horizon {
            let before = sim.population().size();
            match sim.step() {
                StepOutcome::Birth(z) => assert_eq!(sim.population().size(), before + z),
                StepOutcome::Death { drawn, removed } => {
                    assert_eq!(removed, drawn.min(before));
                    assert_eq!(sim.population().size(), before - removed);
                }
            }
        }
    }

    #[test]
    fn non_supercritical_uses_zero_frontier() {
        let c = ModelConfig::new(0.3, law("pois1:1.0"), law("unif:1:3"), 2_000, 1).unwrap();
        let t = run(&c);
        assert_eq!(t.frontier, None);
        assert_eq!(t.a_eps, None);
        for cp in &t.checkpoints {
            assert_eq!(cp.l, 0);
            assert_eq!(cp.r, cp.size);
            assert_eq!(cp.t_bad, None);
        }
        assert!(!t.extinctions.is_empty());
    }

    #[test]
    fn lazy_births_stay_consistent() {
        // infinite-mean births: big batches enter unrealized
        let c = ModelConfig::new(0.5, law("zeta:1.5"), law("const:2"), 3_000, 4).unwrap();
        let t = run(&c);
        let last = t.checkpoints.last().unwrap();
        assert_eq!(last.size, t.final_population.size());
        assert_eq!(last.rprime - last.size, last.sym_diff);
        assert!(t.final_population.lazy_len() > 0);
    }

    #[test]
    fn ensemble_matches_single_runs() {
        let c = supercritical(3_000);
        let serial = run_ensemble(&c, 4, 1).unwrap();
        let parallel = run_ensemble(&c, 4, 3).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial[0], run(&c));
        assert_eq!(serial[2], run_replication(&c, 2));
    }
}
