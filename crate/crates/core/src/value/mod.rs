//! Cache states, value tables and the machinery that builds and checks them.

mod analytic;
mod exact;
mod scenario;
mod state;
mod table;

pub use analytic::{analytic_table, one_missing_stage};
pub use exact::{
    bellman_backup, bounds, exact_value_iteration, Bounds, ExactInstance, ExactValues,
    MAX_STATE_BITS,
};
pub use scenario::{Scenario, ScenarioCost, ScenarioCosts, ScenarioSet};
pub use state::{CacheState, ReferenceState};
pub use table::{ValueTable, TABLE_HEADER};

/// Energy and symbol usage of a set of transmissions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub energy: f64,
    pub symbols: f64,
    pub weighted_total: f64,
}

impl CostBreakdown {
    pub fn new(energy: f64, symbols: f64, symbol_weight: f64) -> Self {
        Self {
            energy,
            symbols,
            weighted_total: energy + symbol_weight * symbols,
        }
    }
}
