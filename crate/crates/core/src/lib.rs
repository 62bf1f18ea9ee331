//! Simulation and verification toolkit for an evolution model in which
//! random-size batches of species are born with uniform fitnesses or culled
//! from the bottom of the fitness order.
//!
//! * [`distributions`]: batch-size laws with exact moments.
//! * [`population`]: the ordered fitness multiset.
//! * [`theory`]: critical probability, frontier, regime classification.
//! * [`process`]: step dynamics, trajectories and ensembles.
//! * [`ladder`]: first-passage study of the auxiliary increment walks.
//! * [`analysis`]: KS distance, gap-exponent fits and event summaries.
//! * [`oracle`]: naive reference engine and exact enumeration.
//! * [`io`]: CSV and record formats.

pub mod analysis;
pub mod distributions;
pub mod io;
pub mod ladder;
pub mod oracle;
pub mod population;
pub mod process;
pub mod rng;
pub mod theory;

pub use distributions::{IntegerLaw, LawError, LawKind};
pub use population::Population;
pub use process::{ModelConfig, Trajectory};
pub use rng::{Lane, RngStream};
pub use theory::{classify_regime, Regime, RegimeReport};
