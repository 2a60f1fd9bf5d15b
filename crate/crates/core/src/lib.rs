//! Envy in random one-to-one matching markets.
//!
//! Students and schools have uniformly random strict rankings of the other
//! side. For deferred acceptance, random serial dictatorship and top
//! trading cycles this crate measures who is envied by nobody and who
//! envies nobody, compares the averages with their closed forms, and
//! checks the exact statements by brute force on tiny markets.
//!
//! ```
//! use envylab::{deferred_acceptance, generate_market, build_envy_graph, unenvied_count, Seed};
//!
//! let market = generate_market(50, Seed::new(42, 0)).unwrap();
//! let matching = deferred_acceptance(&market);
//! let graph = build_envy_graph(&market, &matching);
//! assert!(unenvied_count(&graph) >= 1);
//! ```

pub mod cli;
pub mod coupon;
pub mod envy;
pub mod error;
pub mod experiments;
pub mod mechanisms;
pub mod model;
pub mod oracle;
pub mod stats;
pub mod theory;
pub mod verify;

pub use coupon::{run_collector, singleton_count_from_da, CollectorRun};
pub use envy::{
    build_envy_graph, envy_nobody_count, rank_histogram, under_demanded_schools, unenvied_count, EnvyDegrees,
    EnvyGraph, RankHistogram,
};
pub use error::{Error, Result};
pub use experiments::{run_experiment, AggregateRecord, ExperimentConfig, Metric};
pub use mechanisms::{
    blocking_pairs, deferred_acceptance, rsd, sequential_da, ttc, Endowment, ProposalLog, QueueDiscipline,
    SequentialDaRun, SerialOrder,
};
pub use model::{generate_market, LazyPreferenceStream, MarketInstance, Matching, Seed};
pub use theory::{harmonic, predict, Mechanism, Prediction};
