use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::phy::{decodes, theta, PhyConfig};
use crate::proactive::{self, FileView, ProactiveOpportunity};
use crate::reactive::{self, Policy, SchedulerContext, Target};
use crate::rng::{purpose, stream};
use crate::sim::CostAccumulator;
use crate::topology::{pathloss, CellLayout, LinkModel, Point, UserDistribution};
use crate::traffic::{generate_requests, FileSpec, RequestEvent};
use crate::value::{CacheState, CostBreakdown, ValueTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProactiveSettings {
    pub period: f64,
    pub threshold: f64,
}

/// Everything needed to replay episodes: the physical setup, the files,
/// the value table policies plan with, and the master seed.
#[derive(Clone, Debug)]
pub struct SimSetup {
    pub phy: PhyConfig<f64>,
    pub layout: CellLayout,
    pub users: UserDistribution,
    pub links: LinkModel,
    pub files: Vec<FileSpec>,
    pub table: ValueTable<f64>,
    pub proactive: Option<ProactiveSettings>,
    pub master_seed: u64,
}

/// Lowest statistic any receiver inside the cell can see.
pub fn worst_case_theta(layout: &CellLayout, links: &LinkModel, phy: &PhyConfig<f64>) -> f64 {
    let edge = pathloss(
        &Point::ORIGIN,
        &Point::new(layout.cell_radius(), 0.0),
        layout.pathloss_exponent(),
    );
    let gain = edge * links.shadowing.worst_gain();
    if gain <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let link = crate::phy::LinkState {
        pathloss: edge,
        shadowing: links.shadowing.worst_gain(),
        interference: links.interference,
    };
    theta(&link, phy)
}

/// Every receiver in the cell must be reachable at peak power under the
/// worst admissible shadowing.
pub fn check_feasibility(
    layout: &CellLayout,
    links: &LinkModel,
    phy: &PhyConfig<f64>,
) -> Result<()> {
    let th = worst_case_theta(layout, links, phy);
    let offset = th + phy.peak_power.log2();
    if !(offset > 0.0) {
        return Err(Error::InfeasibleLink { offset });
    }
    Ok(())
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.phy.validate()?;
        if self.files.is_empty() {
            return Err(invalid("file catalog is empty"));
        }
        for f in &self.files {
            f.validate()?;
        }
        if self.table.n_caches() != self.layout.n_caches() {
            return Err(invalid(
                "value table and layout disagree on the cache count",
            ));
        }
        if let Some(p) = self.proactive {
            if !(p.period > 0.0 && p.period.is_finite()) {
                return Err(invalid("proactive period must be positive"));
            }
            if !(p.threshold > 1.0) {
                return Err(invalid("proactive threshold must exceed 1"));
            }
        }
        check_feasibility(&self.layout, &self.links, &self.phy)
    }

    pub fn horizon_end(&self) -> f64 {
        self.files
            .iter()
            .map(FileSpec::end_time)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TxRecord {
    pub segment: usize,
    pub power: f64,
    pub symbols: f64,
    pub receivers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Request {
        region: Option<usize>,
        target_caches: Vec<Option<usize>>,
    },
    Proactive {
        target: usize,
        gain_ratio: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub file_index: usize,
    #[serde(flatten)]
    pub kind: EventKind,
    pub transmissions: Vec<TxRecord>,
    pub energy: f64,
    pub symbols: u128,
    pub newly_decoded: usize,
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub seed_index: u64,
    pub policy: Policy,
    pub per_file: Vec<CostAccumulator>,
    /// The same costs accumulated event by event across files.
    pub per_event: CostAccumulator,
    pub final_states: Vec<CacheState>,
    pub n_requests: usize,
    pub n_proactive: usize,
    pub log: Vec<EventRecord>,
}

impl EpisodeResult {
    pub fn total(&self, symbol_weight: f64) -> CostBreakdown {
        self.per_event.breakdown(symbol_weight)
    }

    pub fn total_cost(&self, symbol_weight: f64) -> f64 {
        self.total(symbol_weight).weighted_total
    }

    /// Total obtained by merging the per-file sums instead.
    pub fn file_rollup(&self, symbol_weight: f64) -> CostBreakdown {
        let mut acc = CostAccumulator::default();
        for f in &self.per_file {
            acc.merge(f);
        }
        acc.breakdown(symbol_weight)
    }

    pub fn file_cost(&self, file_index: usize, symbol_weight: f64) -> f64 {
        self.per_file[file_index]
            .breakdown(symbol_weight)
            .weighted_total
    }
}

fn draw_opportunity<R: Rng + ?Sized>(
    time: f64,
    setup: &SimSetup,
    rng: &mut R,
) -> ProactiveOpportunity {
    let cache_theta = setup
        .links
        .cache_links(&setup.layout, rng)
        .iter()
        .map(|l| theta(l, &setup.phy))
        .collect();
    ProactiveOpportunity { time, cache_theta }
}

/// Simulates every file's lifetime under `policy`. Requests come from the
/// request stream of `seed_index`; proactive opportunities draw from a
/// separate stream, so enabling them never perturbs the requests.
pub fn run_episode(
    setup: &SimSetup,
    seed_index: u64,
    policy: Policy,
    record_log: bool,
) -> Result<EpisodeResult> {
    let n_caches = setup.layout.n_caches();
    let mut req_rng = stream(setup.master_seed, seed_index, purpose::REQUESTS);
    let mut requests: Vec<(usize, RequestEvent)> = Vec::new();
    for (fi, f) in setup.files.iter().enumerate() {
        for ev in generate_requests(f, &setup.users, &setup.layout, &setup.links, &mut req_rng) {
            requests.push((fi, ev));
        }
    }
    requests.sort_by(|a, b| {
        a.1.arrival_time
            .total_cmp(&b.1.arrival_time)
            .then(a.0.cmp(&b.0))
    });

    let mut states: Vec<CacheState> = setup
        .files
        .iter()
        .map(|f| CacheState::empty(n_caches, f.num_segments))
        .collect();
    let mut seen_request = vec![false; setup.files.len()];
    let mut per_file = vec![CostAccumulator::default(); setup.files.len()];
    let mut per_event = CostAccumulator::default();
    let mut log = Vec::new();
    let mut n_proactive = 0;

    let mut pro_rng = stream(setup.master_seed, seed_index, purpose::PROACTIVE);
    let horizon = setup.horizon_end();
    let mut next_opp = setup.proactive.map(|p| p.period).filter(|&t| t <= horizon);

    let mut ri = 0;
    loop {
        let next_req = requests.get(ri).map(|(_, e)| e.arrival_time);
        let take_request = match (next_req, next_opp) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            // Requests go first on ties.
            (Some(tr), Some(to)) => tr <= to,
        };
        if take_request {
            let (fi, ev) = &requests[ri];
            ri += 1;
            let file = &setup.files[*fi];
            let ctx = SchedulerContext {
                state: &states[*fi],
                remaining: file.remaining_lifetime(ev.arrival_time),
                event: ev,
                file,
                table: &setup.table,
                phy: &setup.phy,
                first_request: !seen_request[*fi],
            };
            let decision = reactive::decide(policy, &ctx)?;
            reactive::validate_decision(&ctx, &decision).map_err(Error::ConstraintViolation)?;
            seen_request[*fi] = true;
            let mut event_acc = CostAccumulator::default();
            let mut newly = 0;
            let mut txs = Vec::new();
            for seg in &decision.segments {
                event_acc.add_transmission(seg.power, seg.symbols);
                for &c in &seg.receivers {
                    newly += usize::from(states[*fi].set(c, seg.segment));
                }
                if record_log {
                    txs.push(TxRecord {
                        segment: seg.segment,
                        power: seg.power,
                        symbols: seg.symbols.ceil(),
                        receivers: seg.receivers.clone(),
                    });
                }
            }
            if record_log {
                log.push(EventRecord {
                    time: ev.arrival_time,
                    file_index: *fi,
                    kind: EventKind::Request {
                        region: ev.user.serving_cache,
                        target_caches: decision
                            .segments
                            .iter()
                            .map(|s| match s.target {
                                Target::User => None,
                                Target::Cache(c) => Some(c),
                            })
                            .collect(),
                    },
                    transmissions: txs,
                    energy: event_acc.energy(),
                    symbols: event_acc.symbols(),
                    newly_decoded: newly,
                });
            }
            per_file[*fi].merge(&event_acc);
            per_event.merge(&event_acc);
        } else {
            let settings = setup.proactive.expect("opportunities only when enabled");
            let t = next_opp.expect("checked above");
            let k = (t / settings.period).round() + 1.0;
            next_opp = Some(k * settings.period).filter(|&x| x <= horizon);
            let opp = draw_opportunity(t, setup, &mut pro_rng);
            let live: Vec<usize> = (0..setup.files.len())
                .filter(|&fi| {
                    let f = &setup.files[fi];
                    f.start_time <= t && t < f.end_time()
                })
                .collect();
            let views: Vec<FileView<'_>> = live
                .iter()
                .map(|&fi| FileView {
                    file: &setup.files[fi],
                    state: &states[fi],
                    remaining: setup.files[fi].remaining_lifetime(t),
                    table: &setup.table,
                })
                .collect();
            let Some(d) = proactive::decide(&views, &opp, &setup.phy, settings.threshold)? else {
                continue;
            };
            let fi = live[d.file_index];
            let file = &setup.files[fi];
            let tx = crate::phy::TxParams {
                power: d.power,
                symbols: d.symbols,
            };
            if !(d.power > 0.0 && d.power <= setup.phy.peak_power)
                || d.receivers
                    .iter()
                    .any(|&c| !decodes(opp.cache_theta[c], file.segment_bits, &tx, &setup.phy))
            {
                return Err(Error::ConstraintViolation(format!(
                    "proactive push at t={t} is not decodable"
                )));
            }
            n_proactive += 1;
            let mut event_acc = CostAccumulator::default();
            event_acc.add_transmission(d.power, d.symbols);
            let mut newly = 0;
            for &c in &d.receivers {
                newly += usize::from(states[fi].set(c, d.segment));
            }
            if record_log {
                log.push(EventRecord {
                    time: t,
                    file_index: fi,
                    kind: EventKind::Proactive {
                        target: d.target,
                        gain_ratio: d.gain_ratio,
                    },
                    transmissions: vec![TxRecord {
                        segment: d.segment,
                        power: d.power,
                        symbols: d.symbols.ceil(),
                        receivers: d.receivers.clone(),
                    }],
                    energy: event_acc.energy(),
                    symbols: event_acc.symbols(),
                    newly_decoded: newly,
                });
            }
            per_file[fi].merge(&event_acc);
            per_event.merge(&event_acc);
        }
    }

    Ok(EpisodeResult {
        seed_index,
        policy,
        per_file,
        per_event,
        final_states: states,
        n_requests: requests.len(),
        n_proactive,
        log,
    })
}
