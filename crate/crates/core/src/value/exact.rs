//! Exact backward induction over every cache state of a small instance.

use crate::error::{Error, Result};
use crate::scalar::Cost;
use crate::value::{CacheState, ScenarioCost, ScenarioCosts, ValueTable};

pub const MAX_STATE_BITS: usize = 12;

/// One file on a discretized scenario set, with states encoded as bitmasks
/// (bit `c * n_segments + s` is the cache bit of node `c`, segment `s`).
#[derive(Clone, Debug)]
pub struct ExactInstance<T> {
    pub costs: ScenarioCosts<T>,
    pub n_segments: usize,
}

impl<T: Cost> ExactInstance<T> {
    pub fn new(costs: ScenarioCosts<T>, n_segments: usize) -> Result<Self> {
        let bits = costs.n_caches * n_segments;
        if bits > MAX_STATE_BITS {
            return Err(Error::StateSpaceTooLarge {
                bits,
                limit: MAX_STATE_BITS,
            });
        }
        if costs.is_empty() || n_segments == 0 {
            return Err(Error::InvalidParameter(
                "instance needs scenarios and segments".into(),
            ));
        }
        Ok(Self { costs, n_segments })
    }

    pub fn n_caches(&self) -> usize {
        self.costs.n_caches
    }

    pub fn n_bits(&self) -> usize {
        self.n_caches() * self.n_segments
    }

    pub fn n_states(&self) -> usize {
        1 << self.n_bits()
    }

    pub fn state(&self, mask: u64) -> CacheState {
        CacheState::from_mask(mask, self.n_caches(), self.n_segments)
    }

    fn bit(&self, cache: usize, segment: usize) -> u64 {
        1 << (cache * self.n_segments + segment)
    }

    /// Segments the requesting user still needs from the BS.
    fn demanded(&self, e: &ScenarioCost<T>, mask: u64) -> Vec<usize> {
        match e.region {
            None => (0..self.n_segments).collect(),
            Some(r) => (0..self.n_segments)
                .filter(|&s| mask & self.bit(r, s) == 0)
                .collect(),
        }
    }

    /// Per-segment choices `(cost, bits decoded)`: serve the user alone or
    /// size the multicast for any weaker cache node. Every node at least as
    /// strong as the target decodes.
    fn options(&self, e: &ScenarioCost<T>, segment: usize) -> Vec<(T, u64)> {
        let decoded = |th: f64| {
            (0..self.n_caches())
                .filter(|&c| e.cache_theta[c] >= th)
                .fold(0u64, |m, c| m | self.bit(c, segment))
        };
        let mut out = vec![(e.user_cost.clone(), decoded(e.user_theta))];
        for c in 0..self.n_caches() {
            if e.cache_theta[c] < e.user_theta {
                out.push((e.cache_cost[c].clone(), decoded(e.cache_theta[c])));
            }
        }
        out
    }

    fn best_joint(
        &self,
        opts: &[Vec<(T, u64)>],
        k: usize,
        cost: T,
        mask: u64,
        next: &dyn Fn(u64) -> T,
    ) -> T {
        if k == opts.len() {
            return cost + next(mask);
        }
        let mut best: Option<T> = None;
        for (c, bits) in &opts[k] {
            let v = self.best_joint(opts, k + 1, cost.clone() + c.clone(), mask | bits, next);
            best = Some(match best {
                None => v,
                Some(b) => T::min_of(b, v),
            });
        }
        best.expect("at least the user option")
    }
}

/// One Bellman backup at `mask`: the scenario average of the cheapest joint
/// per-segment decision plus `next_value` of the resulting state.
pub fn bellman_backup<T: Cost>(
    inst: &ExactInstance<T>,
    mask: u64,
    next_value: &dyn Fn(u64) -> T,
) -> T {
    let mut sum = T::zero();
    for e in &inst.costs.entries {
        let segs = inst.demanded(e, mask);
        let opts: Vec<Vec<(T, u64)>> = segs.iter().map(|&s| inst.options(e, s)).collect();
        sum = sum + inst.best_joint(&opts, 0, T::zero(), mask, next_value);
    }
    sum / T::from_count(inst.costs.len())
}

/// `values[N][mask]` for `N = 0..=n_max`.
#[derive(Clone, Debug)]
pub struct ExactValues<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Cost> ExactValues<T> {
    pub fn get(&self, n: usize, mask: u64) -> &T {
        &self.values[n][mask as usize]
    }
}

pub fn exact_value_iteration<T: Cost>(inst: &ExactInstance<T>, n_max: usize) -> ExactValues<T> {
    let mut values = vec![vec![T::zero(); inst.n_states()]];
    for n in 1..=n_max {
        let prev = &values[n - 1];
        let next = |m: u64| prev[m as usize].clone();
        let row: Vec<T> = (0..inst.n_states() as u64)
            .map(|m| bellman_backup(inst, m, &next))
            .collect();
        values.push(row);
    }
    ExactValues { values }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lower: T,
    pub upper: T,
    pub refined: T,
}

/// Lower bound, linear approximation, and the approximation improved by one
/// exact backup on the instance's scenario set.
pub fn bounds<T: Cost>(
    inst: &ExactInstance<T>,
    table: &ValueTable<T>,
    state: &CacheState,
    n: usize,
) -> Result<Bounds<T>> {
    let lower = table.lower_bound(state, n)?;
    let upper = table.approx_value(state, n)?;
    let refined = if n == 0 {
        T::zero()
    } else {
        let next = |m: u64| {
            table
                .approx_value(&inst.state(m), n - 1)
                .expect("stage within table")
        };
        bellman_backup(inst, state.to_mask(), &next)
    };
    Ok(Bounds {
        lower,
        upper,
        refined,
    })
}
