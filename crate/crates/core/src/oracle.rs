//! Naive reference implementations.
//!
//! [`naive_run`] replays the model on a plain vector that is fully
//! re-sorted before each death, with its own bookkeeping of the tracked
//! counts, and draws from the same lanes in the same order as the engine.
//! Runs with lazy birth batches disabled must agree with
//! [`crate::process::run_replication`] exactly.
//!
//! [`enumerate_tau`] computes exact ladder tails by walking every increment
//! sequence.

use std::collections::BTreeMap;

use rand::RngCore;
use thiserror::Error;

use crate::distributions::IntegerLaw;
use crate::ladder::{WalkKind, WalkSpec};
use crate::population::Population;
use crate::process::{geometric_checkpoints, run_replication, Checkpoint, ModelConfig, Trajectory};
use crate::rng::{Lane, RngStream};

pub const MAX_ENUMERATION_LEN: u64 = 14;
pub const MAX_ENUMERATED_PATHS: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("increment support too large: {atoms} atoms over {steps} steps")]
    SupportTooLarge { atoms: usize, steps: u64 },
    #[error("enumeration needs finitely supported laws")]
    InfiniteSupport,
    #[error("max_len must be in 1..={MAX_ENUMERATION_LEN}, got {0}")]
    BadLength(u64),
}

/// Unordered list of `(fitness, insertion index)` pairs.
#[derive(Clone, Debug, Default)]
pub struct NaivePopulation {
    items: Vec<(f64, u64)>,
    next: u64,
}

impl NaivePopulation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.items.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn insert(&mut self, fitness: f64) {
        self.items.push((fitness, self.next));
        self.next += 1;
    }

    fn sort(&mut self) {
        self.items
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    /// Removes and returns the `k` smallest (fewer if the list is shorter).
    pub fn remove_smallest(&mut self, k: u64) -> Vec<f64> {
        self.sort();
        let k = (k.min(self.len())) as usize;
        self.items.drain(..k).map(|(f, _)| f).collect()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut copy = self.clone();
        copy.sort();
        copy.items.into_iter().map(|(f, _)| f).collect()
    }
}

/// Replication `replication` of `config`, every newborn realized.
pub fn naive_run_replication(config: &ModelConfig, replication: u64) -> Trajectory {
    let lane = |l| RngStream::new(config.seed, replication, l);
    let (mut event, mut births, mut deaths, mut fitness) = (
        lane(Lane::Event),
        lane(Lane::Births),
        lane(Lane::Deaths),
        lane(Lane::Fitness),
    );

    let report = config.report();
    let f = report.f;
    let cut = f.map(|f| f + config.eps_track);
    let bound = f.and(config.bound_m);

    let mut pop = NaivePopulation::new();
    let (mut low, mut low_eps, mut above_born, mut bad) = (0u64, 0u64, 0u64, 0u64);
    let mut extinctions = Vec::new();
    let mut a_eps = Vec::new();
    let mut checkpoints = Vec::new();
    let mut cp_iter = config.checkpoints.iter().peekable();

    for n in 1..=config.horizon {
        if event.bernoulli(config.p) {
            let z = config.law_z.sample(&mut births);
            for _ in 0..z {
                let v = fitness.next_unit();
                pop.insert(v);
                match (f, cut) {
                    (Some(f), Some(cut)) => {
                        if v < f {
                            low += 1;
                        } else {
                            above_born += 1;
                        }
                        if v < cut {
                            low_eps += 1;
                        }
                    }
                    _ => above_born += 1,
                }
            }
        } else {
            let x = config.law_x.sample(&mut deaths);
            let gone = pop.remove_smallest(x);
            if let (Some(f), Some(cut)) = (f, cut) {
                low -= gone.iter().filter(|&&v| v < f).count() as u64;
                low_eps -= gone.iter().filter(|&&v| v < cut).count() as u64;
                if low_eps == 0 {
                    a_eps.push(n);
                }
            }
        }
        if let Some(m) = bound {
            if low < m {
                bad += 1;
            }
        }
        if pop.is_empty() {
            extinctions.push(n);
        }
        if cp_iter.peek() == Some(&&n) {
            cp_iter.next();
            let size = pop.len();
            let r = size - low;
            checkpoints.push(Checkpoint {
                n,
                size,
                l: low,
                r,
                rprime: above_born,
                t_bad: bound.map(|_| bad),
                sym_diff: low + above_born - r,
            });
        }
    }

    Trajectory {
        horizon: config.horizon,
        frontier: f,
        eps: config.eps_track,
        bound_m: bound,
        checkpoints,
        extinctions,
        a_eps: cut.map(|_| a_eps),
        final_population: Population::from_values(&pop.sorted())
            .expect("uniform fitnesses lie in [0, 1)"),
    }
}

pub fn naive_run(config: &ModelConfig) -> Trajectory {
    naive_run_replication(config, 0)
}

/// First point where the engine and the oracle disagree, if any.
pub fn compare_with_engine(config: &ModelConfig) -> Result<(), String> {
    let fast = run_replication(config, 0);
    let slow = naive_run(config);
    if fast.checkpoints != slow.checkpoints {
        let at = fast
            .checkpoints
            .iter()
            .zip(&slow.checkpoints)
            .find(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |(a, _)| format!("n = {}", a.n));
        return Err(format!("checkpoints differ ({at})"));
    }
    if fast.extinctions != slow.extinctions {
        return Err("extinction times differ".into());
    }
    if fast.a_eps != slow.a_eps {
        return Err("emptying times differ".into());
    }
    if fast.final_population != slow.final_population {
        return Err("final snapshots differ".into());
    }
    if fast != slow {
        return Err("trajectory metadata differs".into());
    }
    Ok(())
}

fn random_law(rng: &mut RngStream, for_births: bool) -> IntegerLaw {
    let u = |rng: &mut RngStream| rng.next_unit();
    let int = |rng: &mut RngStream, lo: u64, hi: u64| {
        lo + (rng.next_unit() * (hi - lo + 1) as f64) as u64
    };
    let law = match int(rng, 0, 4) {
        0 => IntegerLaw::constant(int(rng, 1, 4)),
        1 => {
            let lo = int(rng, 1, 3);
            let hi = lo + int(rng, 0, 4);
            IntegerLaw::uniform_range(lo, hi)
        }
        2 => IntegerLaw::geometric(0.2 + 0.75 * u(rng)),
        3 => IntegerLaw::shifted_poisson(0.1 + 3.0 * u(rng)),
        // heavy birth tails would make the naive re-sorting crawl
        _ if for_births => IntegerLaw::zeta(2.5 + 1.5 * u(rng)),
        _ => IntegerLaw::zeta(1.1 + 2.5 * u(rng)),
    };
    law.expect("generated parameters are in range")
}

/// `count` random configurations for the equivalence suite: laws of every
/// kind, `p` across all regimes, random tracking margins and occasionally
/// random checkpoint sets. Lazy birth batches are disabled.
pub fn random_configs(count: u64, horizon: u64, seed: u64) -> Vec<ModelConfig> {
    (0..count)
        .map(|i| {
            let mut rng = RngStream::new(seed, i, Lane::Params);
            let law_z = random_law(&mut rng, true);
            let law_x = random_law(&mut rng, false);
            let p = 0.05 + 0.9 * rng.next_unit();
            let mut config = ModelConfig::new(p, law_z, law_x, horizon, rng.next_u64())
                .expect("p in (0, 1)")
                .with_lazy_batch_min(None)
                .expect("disabling is valid");
            if let Some(f) = config.frontier() {
                let eps = (1.0 - f) * 0.9 * rng.next_unit();
                config = config.with_eps(eps).expect("eps below 1 - f");
            }
            if horizon > 0 && rng.next_unit() < 0.25 {
                let mut cps: Vec<u64> = (0..8)
                    .map(|_| 1 + (rng.next_unit() * horizon as f64) as u64)
                    .map(|c| c.min(horizon))
                    .collect();
                cps.sort_unstable();
                cps.dedup();
                config = config.with_checkpoints(cps).expect("sorted and in range");
            } else {
                debug_assert_eq!(config.checkpoints, geometric_checkpoints(horizon));
            }
            config
        })
        .collect()
}

/// Increment values with their probabilities, for finitely supported laws.
pub fn increment_atoms(spec: &WalkSpec) -> Result<Vec<(i64, f64)>, OracleError> {
    let zs = spec
        .law_z
        .finite_support()
        .ok_or(OracleError::InfiniteSupport)?;
    let xs = spec
        .law_x
        .finite_support()
        .ok_or(OracleError::InfiniteSupport)?;
    let q = 1.0 - spec.p;
    let mut atoms: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (z, wz) in zs {
        match (spec.kind, spec.f) {
            (WalkKind::FrontierThinned, Some(f)) => {
                for k in 0..=z {
                    let w = spec.p * wz * binomial_pmf(z, k, f);
                    atoms.entry(k as i64).or_default().push(w);
                }
            }
            _ => atoms.entry(z as i64).or_default().push(spec.p * wz),
        }
    }
    for (x, wx) in xs {
        atoms.entry(-(x as i64)).or_default().push(q * wx);
    }
    Ok(atoms
        .into_iter()
        .map(|(v, ws)| (v, neumaier_sum(ws.iter().copied())))
        .filter(|&(_, w)| w > 0.0)
        .collect())
}

fn binomial_pmf(n: u64, k: u64, f: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * f.powi(k as i32) * (1.0 - f).powi((n - k) as i32)
}

/// Compensated sum.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact `P(tau >= n)` for `n = 1..=max_len`, entry `n - 1`, by summing the
/// weights of every increment sequence that has not crossed after `n - 1`
/// steps.
pub fn enumerate_tau(spec: &WalkSpec, max_len: u64) -> Result<Vec<f64>, OracleError> {
    if !(1..=MAX_ENUMERATION_LEN).contains(&max_len) {
        return Err(OracleError::BadLength(max_len));
    }
    let atoms = increment_atoms(spec)?;
    let steps = max_len - 1;
    if (atoms.len() as f64).powi(steps as i32) > MAX_ENUMERATED_PATHS {
        return Err(OracleError::SupportTooLarge {
            atoms: atoms.len(),
            steps,
        });
    }
    let mut survive = vec![Neumaier::default(); max_len as usize];
    survive[0].add(1.0);
    let mut stack: Vec<(u64, i64, f64)> = vec![(0, 0, 1.0)];
    while let Some((depth, sum, weight)) = stack.pop() {
        if depth == steps {
            continue;
        }
        for &(v, w) in &atoms {
            let s = sum + v;
            if spec.kind.crossed(i128::from(s)) {
                continue;
            }
            let weight = weight * w;
            survive[depth as usize + 1].add(weight);
            stack.push((depth + 1, s, weight));
        }
    }
    Ok(survive.iter().map(Neumaier::value).collect())
}
