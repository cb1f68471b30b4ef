use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reactive::Policy;
use crate::sim::{run_episode, EpisodeResult, ProactiveSettings, SimSetup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Expected requests per lifetime; sets every file's arrival rate.
    LambdaT,
    /// Seconds between proactive opportunities.
    ProactivePeriod,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::LambdaT => "lambda_t",
            SweepParam::ProactivePeriod => "proactive_period",
        }
    }

    pub fn apply(&self, setup: &SimSetup, value: f64) -> Result<SimSetup> {
        let mut s = setup.clone();
        match self {
            SweepParam::LambdaT => {
                for f in &mut s.files {
                    f.arrival_rate = value / f.lifetime;
                }
            }
            SweepParam::ProactivePeriod => {
                let threshold = setup
                    .proactive
                    .map_or(crate::proactive::DEFAULT_THRESHOLD, |p| p.threshold);
                s.proactive = Some(ProactiveSettings {
                    period: value,
                    threshold,
                });
            }
        }
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_t" => Ok(SweepParam::LambdaT),
            "proactive_period" => Ok(SweepParam::ProactivePeriod),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter '{other}'"
            ))),
        }
    }
}

/// Mean and standard error of independent per-seed totals.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sweep_param: Option<f64>,
    pub policy: Policy,
    pub mean_cost: f64,
    pub stderr: f64,
    pub n_seeds: usize,
    /// Total weighted cost of each seed, in seed order.
    pub per_seed: Vec<f64>,
}

pub const CSV_HEADER: &str = "sweep_param,policy,mean_cost,stderr,n_seeds";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let param = self.sweep_param.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{}",
            param, self.policy, self.mean_cost, self.stderr, self.n_seeds
        )
    }
}

/// Runs seeds `0..n_seeds` of one policy in parallel.
pub fn run_seeds(
    setup: &SimSetup,
    policy: Policy,
    n_seeds: usize,
    record_log: bool,
) -> Result<Vec<EpisodeResult>> {
    setup.validate()?;
    (0..n_seeds as u64)
        .into_par_iter()
        .map(|seed| run_episode(setup, seed, policy, record_log))
        .collect()
}

pub fn aggregate(
    setup: &SimSetup,
    policy: Policy,
    sweep_param: Option<f64>,
    episodes: &[EpisodeResult],
) -> SweepRow {
    let w = setup.phy.symbol_weight;
    let per_seed: Vec<f64> = episodes.iter().map(|e| e.total_cost(w)).collect();
    let (mean_cost, stderr) = mean_stderr(&per_seed);
    SweepRow {
        sweep_param,
        policy,
        mean_cost,
        stderr,
        n_seeds: per_seed.len(),
        per_seed,
    }
}

/// One row per (grid value, policy), every cell using the same seeds.
pub fn sweep(
    setup: &SimSetup,
    grid: Option<(SweepParam, &[f64])>,
    policies: &[Policy],
    n_seeds: usize,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(Option<f64>, SimSetup)> = match grid {
        None => vec![(None, setup.clone())],
        Some((param, values)) => values
            .iter()
            .map(|&v| Ok((Some(v), param.apply(setup, v)?)))
            .collect::<Result<_>>()?,
    };
    let mut rows = Vec::with_capacity(cells.len() * policies.len());
    for (value, cell) in &cells {
        for &policy in policies {
            let eps = run_seeds(cell, policy, n_seeds, false)?;
            rows.push(aggregate(cell, policy, *value, &eps));
        }
    }
    Ok(rows)
}
