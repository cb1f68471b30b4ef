//! File catalog, Poisson request generation and Poisson PMF helpers.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::phy::LinkState;
use crate::topology::{sample_user, CellLayout, LinkModel, UserDistribution, UserLocation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileSpec {
    pub file_id: usize,
    /// Requests per second.
    pub arrival_rate: f64,
    /// Seconds.
    pub lifetime: f64,
    pub start_time: f64,
    pub num_segments: usize,
    pub segment_bits: f64,
}

impl FileSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(invalid(format!(
                "file {}: arrival rate must be nonnegative",
                self.file_id
            )));
        }
        if !(self.lifetime > 0.0 && self.lifetime.is_finite()) {
            return Err(invalid(format!(
                "file {}: lifetime must be positive",
                self.file_id
            )));
        }
        if !self.start_time.is_finite() {
            return Err(invalid(format!(
                "file {}: start time must be finite",
                self.file_id
            )));
        }
        if self.num_segments == 0 {
            return Err(invalid(format!(
                "file {}: needs at least one segment",
                self.file_id
            )));
        }
        if !(self.segment_bits > 0.0 && self.segment_bits.is_finite()) {
            return Err(invalid(format!(
                "file {}: segment bits must be positive",
                self.file_id
            )));
        }
        Ok(())
    }

    /// Expected number of requests over the lifetime.
    pub fn mean_requests(&self) -> f64 {
        self.arrival_rate * self.lifetime
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.lifetime
    }

    pub fn remaining_lifetime(&self, t: f64) -> f64 {
        (self.end_time() - t).clamp(0.0, self.lifetime)
    }
}

/// One request with the large-scale channel draws for every segment
/// transmission it may trigger. Shadowing is quasi-static per segment, so
/// `user_links[s]` and `cache_links[s][c]` are independent across `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestEvent {
    pub file_id: usize,
    pub arrival_time: f64,
    pub user: UserLocation,
    pub user_links: Vec<LinkState<f64>>,
    pub cache_links: Vec<Vec<LinkState<f64>>>,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `(lt)^n e^{-lt} / n!`, evaluated in the log domain.
pub fn poisson_pmf(lt: f64, n: usize) -> f64 {
    assert!(lt >= 0.0, "Poisson mean must be nonnegative");
    if lt == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * lt.ln() - lt - ln_factorial(n)).exp()
}

/// PMF values for `n = 0..=n_max`, via the log-domain ratio recurrence.
pub fn poisson_pmfs(lt: f64, n_max: usize) -> Vec<f64> {
    assert!(lt >= 0.0, "Poisson mean must be nonnegative");
    let mut out = Vec::with_capacity(n_max + 1);
    if lt == 0.0 {
        out.push(1.0);
        out.resize(n_max + 1, 0.0);
        return out;
    }
    let ln_lt = lt.ln();
    let mut log_p = -lt;
    for n in 0..=n_max {
        if n > 0 {
            log_p += ln_lt - (n as f64).ln();
        }
        out.push(log_p.exp());
    }
    out
}

/// Upper tails `P(X > n)` for `n = 0..=n_max`, summed from the far tail
/// downward to avoid cancellation.
pub fn poisson_upper_tails(lt: f64, n_max: usize) -> Vec<f64> {
    let far = n_max.max((lt + 40.0 * lt.sqrt() + 60.0).ceil() as usize);
    let pmf = poisson_pmfs(lt, far);
    let mut tails = vec![0.0; far + 1];
    let mut acc = 0.0;
    for n in (0..far).rev() {
        acc += pmf[n + 1];
        tails[n] = acc;
    }
    tails.truncate(n_max + 1);
    tails
}

/// Smallest `N` with `P(X > N) < eps`.
pub fn truncation_horizon(lt: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("tail mass must lie in (0, 1)"));
    }
    if !(lt >= 0.0 && lt.is_finite()) {
        return Err(invalid("Poisson mean must be nonnegative"));
    }
    if lt == 0.0 {
        return Ok(0);
    }
    let bound = (lt + 40.0 * lt.sqrt() + 60.0).ceil() as usize;
    let tails = poisson_upper_tails(lt, bound);
    Ok(tails.iter().position(|&t| t < eps).unwrap_or(bound))
}

pub fn sample_poisson<R: Rng + ?Sized>(lt: f64, rng: &mut R) -> usize {
    if lt <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lt).expect("positive Poisson mean");
    let x: f64 = d.sample(rng);
    x as usize
}

/// Draws all requests of one file over its lifetime, sorted by arrival.
pub fn generate_requests<R: Rng + ?Sized>(
    spec: &FileSpec,
    dist: &UserDistribution,
    layout: &CellLayout,
    links: &LinkModel,
    rng: &mut R,
) -> Vec<RequestEvent> {
    let count = sample_poisson(spec.mean_requests(), rng);
    let mut times: Vec<f64> = (0..count)
        .map(|_| spec.start_time + rng.random::<f64>() * spec.lifetime)
        .collect();
    times.sort_by(f64::total_cmp);
    times
        .into_iter()
        .map(|t| sample_event(spec, t, dist, layout, links, rng))
        .collect()
}

/// One request at a given time with fresh location and shadowing draws.
pub fn sample_event<R: Rng + ?Sized>(
    spec: &FileSpec,
    arrival_time: f64,
    dist: &UserDistribution,
    layout: &CellLayout,
    links: &LinkModel,
    rng: &mut R,
) -> RequestEvent {
    let user = sample_user(dist, layout, rng);
    let mut user_links = Vec::with_capacity(spec.num_segments);
    let mut cache_links = Vec::with_capacity(spec.num_segments);
    for _ in 0..spec.num_segments {
        user_links.push(links.user_link(layout, &user.point, rng));
        cache_links.push(links.cache_links(layout, rng));
    }
    RequestEvent {
        file_id: spec.file_id,
        arrival_time,
        user,
        user_links,
        cache_links,
    }
}
