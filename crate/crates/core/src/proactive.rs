//! Periodic proactive multicast to cache nodes.
//!
//! At each opportunity the BS may push one segment of one live file. The
//! value of pushing is the ratio between the estimated remaining cost
//! without the push and the push cost plus the remaining cost after it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phy::{decodes, optimal_tx_for_theta, PhyConfig};
use crate::traffic::FileSpec;
use crate::value::{CacheState, ValueTable};

pub const DEFAULT_THRESHOLD: f64 = 1.1;

/// A transmission opportunity with fresh statistics for every cache node.
#[derive(Clone, Debug, PartialEq)]
pub struct ProactiveOpportunity {
    pub time: f64,
    pub cache_theta: Vec<f64>,
}

/// What the scheduler knows about one file at an opportunity.
#[derive(Clone, Copy, Debug)]
pub struct FileView<'a> {
    pub file: &'a FileSpec,
    pub state: &'a CacheState,
    pub remaining: f64,
    pub table: &'a ValueTable<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProactiveDecision {
    pub file_index: usize,
    pub segment: usize,
    pub target: usize,
    pub power: f64,
    pub symbols: f64,
    /// Cache nodes missing the segment that decode the push.
    pub receivers: Vec<usize>,
    pub gain_ratio: f64,
}

pub fn remaining_cost_estimate(view: &FileView<'_>) -> f64 {
    view.table
        .remaining_cost(view.state, view.remaining, view.file)
}

/// Best push of `segment` over all targets, with its gain ratio. Targets
/// are the nodes missing the segment; every node missing it whose
/// statistic clears the target's threshold decodes too.
pub fn evaluate_candidate(
    view: &FileView<'_>,
    file_index: usize,
    segment: usize,
    opp: &ProactiveOpportunity,
    phy: &PhyConfig<f64>,
) -> Result<Option<ProactiveDecision>> {
    let missing: Vec<usize> = (0..view.state.n_caches())
        .filter(|&c| !view.state.get(c, segment))
        .collect();
    if missing.is_empty() {
        return Ok(None);
    }
    let before = remaining_cost_estimate(view);
    if !(before > 0.0) {
        return Ok(None);
    }
    let marginals: Vec<f64> = (0..view.state.n_caches())
        .map(|c| view.table.future_marginal(c, view.remaining, view.file))
        .collect();
    let bits = view.file.segment_bits;
    let mut best: Option<ProactiveDecision> = None;
    for &target in &missing {
        let tx = match optimal_tx_for_theta(opp.cache_theta[target], bits, phy) {
            Ok(tx) => tx,
            Err(Error::InfeasibleLink { .. }) => continue,
            Err(e) => return Err(e),
        };
        let receivers: Vec<usize> = missing
            .iter()
            .copied()
            .filter(|&c| c == target || decodes(opp.cache_theta[c], bits, &tx, phy))
            .collect();
        let after = before - receivers.iter().map(|&c| marginals[c]).sum::<f64>();
        let ratio = before / (tx.objective(phy.symbol_weight) + after);
        if best.as_ref().is_none_or(|b| ratio > b.gain_ratio) {
            best = Some(ProactiveDecision {
                file_index,
                segment,
                target,
                power: tx.power,
                symbols: tx.symbols,
                receivers,
                gain_ratio: ratio,
            });
        }
    }
    Ok(best)
}

/// The argmax push over every live file and incomplete segment, if its
/// ratio reaches `threshold`. Ties go to the lowest (file, segment, node).
pub fn decide(
    views: &[FileView<'_>],
    opp: &ProactiveOpportunity,
    phy: &PhyConfig<f64>,
    threshold: f64,
) -> Result<Option<ProactiveDecision>> {
    let pairs: Vec<(usize, usize)> = views
        .iter()
        .enumerate()
        .filter(|(_, v)| v.remaining > 0.0)
        .flat_map(|(f, v)| (0..v.state.n_segments()).map(move |s| (f, s)))
        .collect();
    let evaluated = pairs
        .par_iter()
        .map(|&(f, s)| evaluate_candidate(&views[f], f, s, opp, phy))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<ProactiveDecision> = None;
    for cand in evaluated.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| cand.gain_ratio > b.gain_ratio) {
            best = Some(cand);
        }
    }
    Ok(best.filter(|b| b.gain_ratio >= threshold))
}
