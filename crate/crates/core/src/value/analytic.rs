//! Model-based evaluation of the value table from a scenario set.
//!
//! From the all-cached state only requests from uncovered users cost
//! anything, so `v_star[N] = N * E[1(out) * N_f * c_user]`.
//!
//! From the state missing segment `s` at node `i` the request either leaves
//! the state unchanged (user served by another cache), or needs segment `s`
//! (user in region `i`, or uncovered). In the latter case the BS either
//! serves the user alone, with node `i` decoding for free when its
//! statistic is at least the user's, or sizes the transmission for node
//! `i`. Uncovered users additionally receive the other `N_f - 1` segments.

use rayon::prelude::*;

use crate::scalar::Cost;
use crate::value::{ScenarioCost, ScenarioCosts, ValueTable};

fn stats(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let m = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

fn star_stage<T: Cost>(e: &ScenarioCost<T>, n_segments: usize) -> T {
    if e.region.is_none() {
        T::from_count(n_segments) * e.user_cost.clone()
    } else {
        T::zero()
    }
}

/// One-stage sample of the value of the state missing one bit at `cache`,
/// given the next-stage values of the all-cached and one-missing states.
pub fn one_missing_stage<T: Cost>(
    e: &ScenarioCost<T>,
    cache: usize,
    n_segments: usize,
    next_star: &T,
    next_one: &T,
) -> T {
    let outside = e.region.is_none();
    if !(outside || e.region == Some(cache)) {
        return next_one.clone();
    }
    let others = if outside {
        T::from_count(n_segments - 1) * e.user_cost.clone()
    } else {
        T::zero()
    };
    let decodes_free = e.cache_theta[cache] >= e.user_theta;
    let serve_user = e.user_cost.clone()
        + if decodes_free {
            next_star.clone()
        } else {
            next_one.clone()
        };
    let target_cost = if decodes_free {
        e.user_cost.clone()
    } else {
        e.cache_cost[cache].clone()
    };
    let serve_cache = target_cost + next_star.clone();
    others + T::min_of(serve_user, serve_cache)
}

/// Builds `v_star` and `v_one` for `N = 0..=n_max` by backward recursion
/// over the scenario set. Cache rows are computed in parallel.
pub fn analytic_table<T: Cost>(
    costs: &ScenarioCosts<T>,
    n_segments: usize,
    n_max: usize,
) -> ValueTable<T> {
    assert!(!costs.is_empty(), "empty scenario set");
    assert!(n_segments >= 1);
    let s = costs.len();
    let stage: Vec<T> = costs
        .entries
        .iter()
        .map(|e| star_stage(e, n_segments))
        .collect();
    let c_star = crate::scalar::mean(stage.iter().cloned());
    let stage_se = stats(&stage.iter().map(Cost::to_f64_lossy).collect::<Vec<_>>());
    let v_star: Vec<T> = (0..=n_max)
        .map(|n| T::from_count(n) * c_star.clone())
        .collect();
    let v_star_se: Vec<f64> = (0..=n_max).map(|n| n as f64 * stage_se).collect();

    let rows: Vec<(Vec<T>, Vec<f64>)> = (0..costs.n_caches)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![T::zero(); n_max + 1];
            let mut se = vec![0.0; n_max + 1];
            let mut samples = Vec::with_capacity(s);
            for n in 1..=n_max {
                samples.clear();
                let mut sum = T::zero();
                for e in &costs.entries {
                    let v = one_missing_stage(e, i, n_segments, &v_star[n - 1], &row[n - 1]);
                    samples.push(v.to_f64_lossy());
                    sum = sum + v;
                }
                row[n] = sum / T::from_count(s);
                se[n] = stats(&samples);
            }
            (row, se)
        })
        .collect();

    let (v_one, v_one_se): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut table =
        ValueTable::new(n_segments, costs.segment_bits, v_star, v_one).expect("consistent shape");
    table.v_star_se = v_star_se;
    table.v_one_se = v_one_se;
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::PhyConfig;
    use crate::value::{Scenario, ScenarioSet};
    use num_rational::BigRational;

    fn phy() -> PhyConfig<f64> {
        PhyConfig::new(8, 0.5, 1e-13, 39.8, 10.0).unwrap()
    }

    fn set(scenarios: Vec<(Option<usize>, f64, Vec<f64>)>) -> ScenarioSet {
        let n = scenarios[0].2.len();
        ScenarioSet::new(
            n,
            scenarios
                .into_iter()
                .map(|(region, user_theta, cache_theta)| Scenario {
                    region,
                    user_theta,
                    cache_theta,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_stage_and_linearity() {
        let s = set(vec![
            (None, 3.0, vec![5.0]),
            (Some(0), 4.0, vec![2.0]),
            (None, 1.0, vec![0.5]),
        ]);
        let c: ScenarioCosts<BigRational> = s.costs(&phy(), 1e6).unwrap();
        let t = analytic_table(&c, 2, 6);
        assert_eq!(t.v_star[0], BigRational::from_count(0));
        assert_eq!(t.v_star[2].clone() + t.v_star[2].clone(), t.v_star[4]);
        for n in 0..=6 {
            assert!(t.v_one[0][n] >= t.v_star[n]);
            if n > 0 {
                assert!(t.v_one[0][n] >= t.v_one[0][n - 1]);
            }
        }
    }

    #[test]
    fn fully_covered_cell_costs_nothing() {
        let s = set(vec![(Some(0), 3.0, vec![5.0]), (Some(0), 1.0, vec![5.0])]);
        let t = analytic_table(&s.costs::<f64>(&phy(), 1e6).unwrap(), 1, 3);
        assert_eq!(t.v_star[1], 0.0);
    }

    #[test]
    fn free_decoding_cache_matches_all_cached() {
        // Node 0 always hears the user and no user ever sits in its region.
        let s = set(vec![
            (None, 3.0, vec![5.0, 1.0]),
            (Some(1), 4.0, vec![6.0, 2.0]),
            (None, 1.0, vec![1.5, 0.0]),
        ]);
        let t = analytic_table(&s.costs::<BigRational>(&phy(), 1e6).unwrap(), 2, 4);
        assert_eq!(t.v_one[0][1], t.v_star[1]);
        assert!(t.v_one[1][1] > t.v_star[1]);
    }

    #[test]
    fn standard_errors_reported() {
        let s = set(vec![
            (None, 3.0, vec![5.0]),
            (None, 1.0, vec![2.0]),
            (Some(0), 2.0, vec![1.0]),
        ]);
        let t = analytic_table(&s.costs::<f64>(&phy(), 1e6).unwrap(), 1, 2);
        assert!(t.v_star_se[1] > 0.0);
        assert!((t.v_star_se[2] - 2.0 * t.v_star_se[1]).abs() < 1e-9 * t.v_star_se[2]);
        assert!(t.v_one_se[0][2] > 0.0);
    }
}
