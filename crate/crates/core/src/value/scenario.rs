//! Discretized expectation over user location and shadowing.
//!
//! A scenario fixes where the requesting user is and the log-SNR statistic of
//! the user and of every cache node. One draw of shadowing is shared by all
//! segments inside a scenario, which makes values exactly symmetric across
//! segments; since segments are statistically identical, expectations agree
//! with the per-segment model used in simulation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::phy::{optimal_tx_for_theta, theta, PhyConfig};
use crate::scalar::Cost;
use crate::topology::{sample_user, CellLayout, LinkModel, UserDistribution};

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub region: Option<usize>,
    pub user_theta: f64,
    pub cache_theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    n_caches: usize,
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(n_caches: usize, scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidParameter("scenario set is empty".into()));
        }
        for sc in &scenarios {
            if sc.cache_theta.len() != n_caches || sc.region.is_some_and(|r| r >= n_caches) {
                return Err(Error::InvalidParameter(
                    "scenario does not match cache count".into(),
                ));
            }
        }
        Ok(Self {
            n_caches,
            scenarios,
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        count: usize,
        layout: &CellLayout,
        dist: &UserDistribution,
        links: &LinkModel,
        phy: &PhyConfig<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        let scenarios = (0..count)
            .map(|_| {
                let user = sample_user(dist, layout, rng);
                let user_theta = theta(&links.user_link(layout, &user.point, rng), phy);
                let cache_theta = (0..layout.n_caches())
                    .map(|c| theta(&links.cache_link(layout, c, rng), phy))
                    .collect();
                Scenario {
                    region: user.serving_cache,
                    user_theta,
                    cache_theta,
                }
            })
            .collect();
        Self::new(layout.n_caches(), scenarios)
    }

    pub fn n_caches(&self) -> usize {
        self.n_caches
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn outside_fraction(&self) -> f64 {
        self.scenarios.iter().filter(|s| s.region.is_none()).count() as f64 / self.len() as f64
    }

    /// Optimal single-segment costs for every receiver of every scenario.
    pub fn costs<T: Cost>(
        &self,
        phy: &PhyConfig<f64>,
        segment_bits: f64,
    ) -> Result<ScenarioCosts<T>> {
        let entries = self
            .scenarios
            .iter()
            .map(|sc| ScenarioCost::new(sc, phy, segment_bits))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScenarioCosts {
            n_caches: self.n_caches,
            segment_bits,
            entries,
        })
    }
}

/// Costs of delivering one segment to a given receiver, as if it were the
/// weakest one targeted.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioCost<T> {
    pub region: Option<usize>,
    pub user_theta: f64,
    pub cache_theta: Vec<f64>,
    pub user_cost: T,
    pub cache_cost: Vec<T>,
}

impl<T: Cost> ScenarioCost<T> {
    fn new(sc: &Scenario, phy: &PhyConfig<f64>, bits: f64) -> Result<Self> {
        let cost_of = |th: f64| -> Result<f64> {
            Ok(optimal_tx_for_theta(th, bits, phy)?.objective(phy.symbol_weight))
        };
        let mut nodes: Vec<(f64, f64, usize)> = Vec::with_capacity(sc.cache_theta.len() + 1);
        nodes.push((sc.user_theta, cost_of(sc.user_theta)?, usize::MAX));
        for (c, &th) in sc.cache_theta.iter().enumerate() {
            nodes.push((th, cost_of(th)?, c));
        }
        // The optimal cost is nonincreasing in theta; enforce it exactly so
        // rounding can never make a weaker receiver cheaper.
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[b].0.total_cmp(&nodes[a].0));
        let mut running = f64::NEG_INFINITY;
        for &k in &order {
            running = running.max(nodes[k].1);
            nodes[k].1 = running;
        }
        Ok(Self {
            region: sc.region,
            user_theta: sc.user_theta,
            cache_theta: sc.cache_theta.clone(),
            user_cost: T::from_f64_exact(nodes[0].1),
            cache_cost: nodes[1..].iter().map(|n| T::from_f64_exact(n.1)).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioCosts<T> {
    pub n_caches: usize,
    pub segment_bits: f64,
    pub entries: Vec<ScenarioCost<T>>,
}

impl<T> ScenarioCosts<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
