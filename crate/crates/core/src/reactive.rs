//! Per-request scheduling: the proposed value-based policy and two baselines.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::phy::{decodes, optimal_tx_for_theta, theta, PhyConfig, TxParams, DECODE_TOLERANCE};
use crate::topology::UserLocation;
use crate::traffic::{FileSpec, RequestEvent};
use crate::value::{CacheState, ValueTable};

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Proposed,
    Baseline1,
    Baseline2,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Proposed, Policy::Baseline1, Policy::Baseline2];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::Baseline1 => "baseline1",
            Policy::Baseline2 => "baseline2",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "proposed" => Ok(Policy::Proposed),
            "baseline1" => Ok(Policy::Baseline1),
            "baseline2" => Ok(Policy::Baseline2),
            other => Err(Error::InvalidParameter(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    User,
    Cache(usize),
}

/// One segment multicast.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentTx {
    pub segment: usize,
    pub target: Target,
    pub power: f64,
    /// Continuous symbol count; rounded up only when costs are accounted.
    pub symbols: f64,
    /// Every cache node whose decode threshold the transmission meets.
    pub receivers: Vec<usize>,
}

impl SegmentTx {
    pub fn tx(&self) -> TxParams<f64> {
        TxParams {
            power: self.power,
            symbols: self.symbols,
        }
    }

    pub fn objective(&self, symbol_weight: f64) -> f64 {
        self.tx().objective(symbol_weight)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decision {
    pub segments: Vec<SegmentTx>,
}

impl Decision {
    pub fn objective(&self, symbol_weight: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| s.objective(symbol_weight))
            .sum()
    }
}

/// Everything a policy sees when a request arrives.
#[derive(Clone, Copy, Debug)]
pub struct SchedulerContext<'a> {
    pub state: &'a CacheState,
    pub remaining: f64,
    pub event: &'a RequestEvent,
    pub file: &'a FileSpec,
    pub table: &'a ValueTable<f64>,
    pub phy: &'a PhyConfig<f64>,
    /// True for the first request of the file.
    pub first_request: bool,
}

impl SchedulerContext<'_> {
    pub fn user_theta(&self, segment: usize) -> f64 {
        theta(&self.event.user_links[segment], self.phy)
    }

    pub fn cache_theta(&self, segment: usize, cache: usize) -> f64 {
        theta(&self.event.cache_links[segment][cache], self.phy)
    }

    fn transmit(&self, segment: usize, target: Target, target_theta: f64) -> Result<SegmentTx> {
        let tx = optimal_tx_for_theta(target_theta, self.file.segment_bits, self.phy)?;
        let receivers = (0..self.state.n_caches())
            .filter(|&c| {
                decodes(
                    self.cache_theta(segment, c),
                    self.file.segment_bits,
                    &tx,
                    self.phy,
                )
            })
            .collect();
        Ok(SegmentTx {
            segment,
            target,
            power: tx.power,
            symbols: tx.symbols,
            receivers,
        })
    }
}

/// Segments the requesting user must get from the BS.
pub fn demanded_segments(state: &CacheState, user: &UserLocation) -> Vec<usize> {
    match user.serving_cache {
        None => (0..state.n_segments()).collect(),
        Some(c) => (0..state.n_segments())
            .filter(|&s| !state.get(c, s))
            .collect(),
    }
}

/// One option of the per-segment minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub target: Target,
    pub theta: f64,
    pub tx_cost: f64,
    pub future_cost: f64,
}

impl Candidate {
    pub fn total(&self) -> f64 {
        self.tx_cost + self.future_cost
    }
}

/// Candidates for segment `s` in evaluation order: the user alone, then
/// every weaker cache node still missing `s`, strongest first. The future
/// cost term sums the Poisson-weighted marginal value of each node still
/// missing `s` that the multicast would not reach.
pub fn candidates(
    ctx: &SchedulerContext<'_>,
    segment: usize,
    marginals: &[f64],
) -> Result<Vec<Candidate>> {
    let th_u = ctx.user_theta(segment);
    let zero: Vec<(usize, f64)> = (0..ctx.state.n_caches())
        .filter(|&c| !ctx.state.get(c, segment))
        .map(|c| (c, ctx.cache_theta(segment, c)))
        .collect();
    let future = |th_target: f64| -> f64 {
        zero.iter()
            .filter(|(_, th)| *th < th_target)
            .map(|(c, _)| marginals[*c])
            .sum()
    };
    let cost = |th: f64| -> Result<f64> {
        Ok(optimal_tx_for_theta(th, ctx.file.segment_bits, ctx.phy)?
            .objective(ctx.phy.symbol_weight))
    };
    let mut out = vec![Candidate {
        target: Target::User,
        theta: th_u,
        tx_cost: cost(th_u)?,
        future_cost: future(th_u),
    }];
    let mut weaker: Vec<(usize, f64)> = zero.iter().copied().filter(|(_, th)| *th < th_u).collect();
    weaker.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (c, th) in weaker {
        match cost(th) {
            Ok(tx_cost) => out.push(Candidate {
                target: Target::Cache(c),
                theta: th,
                tx_cost,
                future_cost: future(th),
            }),
            Err(Error::InfeasibleLink { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Poisson-weighted marginal future cost of each node for this file.
pub fn future_marginals(ctx: &SchedulerContext<'_>) -> Vec<f64> {
    (0..ctx.state.n_caches())
        .map(|c| ctx.table.future_marginal(c, ctx.remaining, ctx.file))
        .collect()
}

/// Argmin over the candidates; ties go to the earliest candidate.
pub fn schedule_segment(
    ctx: &SchedulerContext<'_>,
    segment: usize,
    marginals: &[f64],
) -> Result<SegmentTx> {
    let cands = candidates(ctx, segment, marginals)?;
    let mut best = 0;
    for (k, c) in cands.iter().enumerate().skip(1) {
        if c.total() < cands[best].total() {
            best = k;
        }
    }
    let c = &cands[best];
    ctx.transmit(segment, c.target, c.theta)
}

pub fn proposed(ctx: &SchedulerContext<'_>) -> Result<Decision> {
    let segs = demanded_segments(ctx.state, &ctx.event.user);
    if segs.is_empty() {
        return Ok(Decision::default());
    }
    let marginals = future_marginals(ctx);
    let segments = segs
        .into_iter()
        .map(|s| schedule_segment(ctx, s, &marginals))
        .collect::<Result<_>>()?;
    Ok(Decision { segments })
}

pub fn baseline1(ctx: &SchedulerContext<'_>) -> Result<Decision> {
    let segments = demanded_segments(ctx.state, &ctx.event.user)
        .into_iter()
        .map(|s| ctx.transmit(s, Target::User, ctx.user_theta(s)))
        .collect::<Result<_>>()?;
    Ok(Decision { segments })
}

/// On the first request every demanded segment is sized for the weakest of
/// the user and all cache nodes missing it; afterwards as `baseline1`.
pub fn baseline2(ctx: &SchedulerContext<'_>) -> Result<Decision> {
    if !ctx.first_request {
        return baseline1(ctx);
    }
    let segments = demanded_segments(ctx.state, &ctx.event.user)
        .into_iter()
        .map(|s| {
            let mut target = (Target::User, ctx.user_theta(s));
            for c in 0..ctx.state.n_caches() {
                let th = ctx.cache_theta(s, c);
                if !ctx.state.get(c, s) && th < target.1 {
                    target = (Target::Cache(c), th);
                }
            }
            ctx.transmit(s, target.0, target.1)
        })
        .collect::<Result<_>>()?;
    Ok(Decision { segments })
}

pub fn decide(policy: Policy, ctx: &SchedulerContext<'_>) -> Result<Decision> {
    match policy {
        Policy::Proposed => proposed(ctx),
        Policy::Baseline1 => baseline1(ctx),
        Policy::Baseline2 => baseline2(ctx),
    }
}

/// Independent check of a decision against the rate and power constraints,
/// recomputing every decode condition from symbol thresholds.
pub fn validate_decision(
    ctx: &SchedulerContext<'_>,
    decision: &Decision,
) -> std::result::Result<(), String> {
    let demanded = demanded_segments(ctx.state, &ctx.event.user);
    let scheduled: Vec<usize> = decision.segments.iter().map(|s| s.segment).collect();
    if scheduled != demanded {
        return Err(format!(
            "scheduled segments {scheduled:?} differ from demanded {demanded:?}"
        ));
    }
    let bits = ctx.file.segment_bits;
    let alpha = ctx.phy.stbc_rate;
    for seg in &decision.segments {
        if !(seg.power > 0.0 && seg.power <= ctx.phy.peak_power) {
            return Err(format!(
                "segment {}: power {} outside (0, P_B]",
                seg.segment, seg.power
            ));
        }
        let meets = |th: f64| {
            let rate = alpha * (th + seg.power.log2());
            rate > 0.0 && seg.symbols >= bits / rate * (1.0 - DECODE_TOLERANCE)
        };
        if !meets(ctx.user_theta(seg.segment)) {
            return Err(format!(
                "segment {}: requesting user cannot decode",
                seg.segment
            ));
        }
        for &c in &seg.receivers {
            if !meets(ctx.cache_theta(seg.segment, c)) {
                return Err(format!(
                    "segment {}: cache {c} listed but cannot decode",
                    seg.segment
                ));
            }
        }
    }
    Ok(())
}
