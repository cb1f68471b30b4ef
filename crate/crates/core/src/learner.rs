//! Online estimation of the value table from observed requests.
//!
//! The estimates start from a prior table (normally the one built for
//! uniformly placed users) and are running means: after `t` events each
//! entry is the average of the prior and the `t` one-event samples. A sample
//! for `v_star` is the realized per-request cost from the all-cached state
//! times the number of stages; a sample for `v_one` adds to it the marginal
//! cost of the missing bit, evaluated on the request's own channel draws
//! under both branches of the one-missing-bit recursion.

use crate::error::{invalid, Error, Result};
use crate::phy::{optimal_tx_for_theta, theta, PhyConfig};
use crate::traffic::{FileSpec, RequestEvent};
use crate::value::ValueTable;

/// Fraction of the prior's one-stage all-cached value used as the default
/// convergence threshold.
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct LearnerState {
    t: usize,
    estimates: ValueTable<f64>,
    threshold: f64,
    last_change: Option<f64>,
}

impl LearnerState {
    pub fn init(prior: &ValueTable<f64>, threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(invalid("learner threshold must be nonnegative"));
        }
        if prior
            .v_star
            .iter()
            .chain(prior.v_one.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(invalid("prior table has non-finite entries"));
        }
        let mut estimates = prior.clone();
        estimates.v_star_se.iter_mut().for_each(|x| *x = 0.0);
        estimates
            .v_one_se
            .iter_mut()
            .flatten()
            .for_each(|x| *x = 0.0);
        Ok(Self {
            t: 0,
            estimates,
            threshold,
            last_change: None,
        })
    }

    pub fn default_threshold(prior: &ValueTable<f64>) -> f64 {
        DEFAULT_THRESHOLD_FRACTION * prior.v_star.get(1).copied().unwrap_or(0.0)
    }

    pub fn iterations(&self) -> usize {
        self.t
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn estimates(&self) -> &ValueTable<f64> {
        &self.estimates
    }

    pub fn into_table(self) -> ValueTable<f64> {
        self.estimates
    }

    /// Largest absolute change of any entry in the last update.
    pub fn last_change(&self) -> Option<f64> {
        self.last_change
    }

    pub fn converged(&self) -> bool {
        self.last_change.is_some_and(|c| c <= self.threshold)
    }

    /// One-event samples `(v_star[N], v_one[i][N])` for `N = 0..=n_max`,
    /// rescaled to the table's reference file.
    pub fn samples(
        &self,
        event: &RequestEvent,
        file: &FileSpec,
        phy: &PhyConfig<f64>,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let table = &self.estimates;
        let n_max = table.n_max();
        let n_caches = table.n_caches();
        if event
            .cache_links
            .first()
            .is_none_or(|l| l.len() != n_caches)
        {
            return Err(Error::InvalidParameter(
                "event does not match the table's cache count".into(),
            ));
        }
        let scale = table.segment_bits / file.segment_bits;
        let cost = |th: f64| -> Result<f64> {
            Ok(scale
                * optimal_tx_for_theta(th, file.segment_bits, phy)?.objective(phy.symbol_weight))
        };
        let outside = event.user.serving_cache.is_none();
        let user_theta: Vec<f64> = event.user_links.iter().map(|l| theta(l, phy)).collect();
        let user_costs = user_theta
            .iter()
            .map(|&th| cost(th))
            .collect::<Result<Vec<_>>>()?;
        let mean_user = user_costs.iter().sum::<f64>() / user_costs.len() as f64;
        let n_f = table.n_segments as f64;
        let stage_star = if outside { n_f * mean_user } else { 0.0 };
        let star: Vec<f64> = (0..=n_max).map(|n| n as f64 * stage_star).collect();

        // The segment at stake uses the draws of the event's first segment.
        // Each v_one sample is the v_star sample plus a sample of the
        // marginal, which bootstraps from the previous marginal estimate:
        // bootstrapping v_one directly carries early noise undamped to
        // every later stage.
        let (th_u, c_u) = (user_theta[0], user_costs[0]);
        let mut one = vec![vec![0.0; n_max + 1]; n_caches];
        for (i, row) in one.iter_mut().enumerate() {
            let needs = outside || event.user.serving_cache == Some(i);
            let th_i = theta(&event.cache_links[0][i], phy);
            let free = th_i >= th_u;
            let c_i = if free || !needs {
                c_u
            } else {
                cost(th_i)?.max(c_u)
            };
            for n in 1..=n_max {
                let prev = table.v_one[i][n - 1] - table.v_star[n - 1];
                let marginal = if needs {
                    let serve_user = c_u + if free { 0.0 } else { prev };
                    serve_user.min(c_i) - if outside { c_u } else { 0.0 }
                } else {
                    prev
                };
                row[n] = star[n] + marginal;
            }
        }
        Ok((star, one))
    }

    /// Folds one observed request into the running means.
    pub fn observe(
        &mut self,
        event: &RequestEvent,
        file: &FileSpec,
        phy: &PhyConfig<f64>,
    ) -> Result<()> {
        let (star, one) = self.samples(event, file, phy)?;
        self.t += 1;
        let k = self.t as f64;
        let keep = k / (k + 1.0);
        let mut change: f64 = 0.0;
        let mut update = |est: &mut f64, sample: f64| {
            let new = keep * *est + sample / (k + 1.0);
            change = change.max((new - *est).abs());
            *est = new;
        };
        for (e, s) in self.estimates.v_star.iter_mut().zip(star) {
            update(e, s);
        }
        for (row, srow) in self.estimates.v_one.iter_mut().zip(one) {
            for (e, s) in row.iter_mut().zip(srow) {
                update(e, s);
            }
        }
        self.last_change = Some(change);
        Ok(())
    }
}
