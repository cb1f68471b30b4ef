//! Seeded Monte Carlo episodes and parameter sweeps.

mod accounting;
mod episode;
mod sweep;

pub use accounting::{CostAccumulator, ExactSum};
pub use episode::{
    check_feasibility, run_episode, worst_case_theta, EpisodeResult, EventKind, EventRecord,
    ProactiveSettings, SimSetup, TxRecord,
};
pub use sweep::{aggregate, mean_stderr, run_seeds, sweep, SweepParam, SweepRow, CSV_HEADER};
