//! Experiment runner and verification suites on top of [`factored_rl`].
//!
//! Every entry point returns a [`Failure`] on error, which carries the
//! process exit code the binary should use.

pub mod config;
pub mod experiment;
pub mod knapsack;
pub mod verify;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

/// Name of the environment variable capping the worker pool.
pub const THREADS_ENV: &str = "FACTORED_RL_THREADS";

#[derive(Debug, Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated during run: {0}")]
    Invariant(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Invariant(_) => EXIT_INVARIANT,
            Failure::Verification(_) => EXIT_VERIFICATION,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Failure::Config(format!("{}: {err}", path.display()))
    }
}

impl From<factored_rl::Error> for Failure {
    fn from(err: factored_rl::Error) -> Self {
        use factored_rl::Error as E;
        match err {
            E::Invariant(_) | E::UndefinedEstimate { .. } | E::UndefinedBonus => {
                Failure::Invariant(err.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

/// Worker pool sized by [`THREADS_ENV`] when set, else by rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Config(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Failure::Config(format!("cannot start worker pool: {e}")))
}
