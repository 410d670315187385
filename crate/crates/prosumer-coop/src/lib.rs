//! Cooperative battery-dispatch game engine for prosumer energy coalitions.
//!
//! The crate models groups of prosumers (consumers with PV and/or battery
//! storage) that pool their energy positions behind a community meter and
//! jointly schedule their batteries. It provides:
//!
//! - [`model`]: validated domain types (scenarios, tariffs, storage,
//!   coalitions);
//! - [`dispatch`]: the coalition cost-minimization LP and a memoizing
//!   evaluator with instrumented solve counts;
//! - [`game`]: characteristic-function construction, excess machinery, the
//!   nucleolus (sequential LP scheme) and the Shapley value;
//! - [`cluster`]: restarted K-means over post-dispatch load profiles with
//!   evenness-based selection;
//! - [`pipeline`]: the scalable cluster-then-decluster payoff pipeline;
//! - [`scenario`]: synthetic scenario generation and CSV/JSON ingestion.

pub mod cluster;
pub mod dispatch;
pub mod game;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod scenario;

pub use model::{Coalition, Prosumer, Scenario, StorageSpec, TariffSchedule};
