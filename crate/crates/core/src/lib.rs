//! Online association of user equipment to base stations when handovers
//! have heterogeneous costs.
//!
//! The crate models the network ([`net_model`]), implements the learning
//! controller ([`lda`]) and its comparison policies ([`benchmarks`]), builds
//! synthetic or recorded scenarios ([`scenarios`]) and runs seeded
//! experiments ([`harness`]).

pub mod benchmarks;
pub mod error;
pub mod harness;
pub mod lda;
pub mod net_model;
pub mod scenarios;

pub use error::{Error, Result};
pub use harness::{run_experiment, Algorithm, ExperimentConfig, ExperimentReport, RunMetrics};
pub use lda::{derive_params, Lda, LdaParams};
pub use net_model::{Association, DelayModel, ScenarioTrace};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/learner.md")]
    mod learner {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
