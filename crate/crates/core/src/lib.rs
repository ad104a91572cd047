//! Optimistic learning and exact oracles for episodic factored MDPs.
//!
//! A [`FmdpSpec`] describes the model. [`env`] simulates and generates
//! instances. [`estimation`], [`bonus`] and [`planner`] make up the learners
//! in [`agent`]. [`oracle`] answers exact questions about a known spec, and
//! [`rlwk`] adds per-episode budgets.
//!
//! ```
//! use factored_rl::agent::{run, Algorithm, RunConfig};
//! use factored_rl::env::gen_production_line;
//!
//! let spec = gen_production_line(3, 2, 2, 4, 1)?;
//! let record = run(&spec, &RunConfig::new(Algorithm::Ch, 20, 0.1, 0))?;
//! assert_eq!(record.episodes.len(), 20);
//! # Ok::<(), factored_rl::Error>(())
//! ```

pub mod error;
pub mod index;
pub mod model;
pub mod rng;

pub mod env;
pub mod estimation;

pub mod bonus;
pub mod planner;

pub mod agent;
pub mod oracle;
pub mod rlwk;

pub use error::{Error, Result};
pub use index::{cardinality, decode_index, encode_index, FlatIndex};
pub use model::{
    flatten_to_flat_mdp, project_scope, validate_spec, FactorDims, FmdpSpec, Layout, RewardDist,
    RewardFactor, Scope, TransitionFactor, ValidationReport, Violation,
};

// The guide's snippets run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/bonuses.md")]
    mod bonuses {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/learners.md")]
    mod learners {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/knapsack.md")]
    mod knapsack {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
