//! Value tables for the all-cached state and the one-missing-bit states, the
//! linear approximation built on them, and their Poisson mixtures.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Cost;
use crate::traffic::{poisson_pmfs, FileSpec};
use crate::value::CacheState;

pub const TABLE_HEADER: &str = "# cachecast value-table v1";

/// `v_star[N]` and `v_one[i][N]` for `N = 0..=n_max`, with `N = 0` fixed at
/// zero. Built for a reference file with `n_segments` segments of
/// `segment_bits` bits each.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable<T> {
    pub n_segments: usize,
    pub segment_bits: f64,
    pub v_star: Vec<T>,
    pub v_one: Vec<Vec<T>>,
    /// Monte Carlo standard errors, zero when unknown.
    pub v_star_se: Vec<f64>,
    pub v_one_se: Vec<Vec<f64>>,
}

impl<T: Cost> ValueTable<T> {
    pub fn new(
        n_segments: usize,
        segment_bits: f64,
        v_star: Vec<T>,
        v_one: Vec<Vec<T>>,
    ) -> Result<Self> {
        if v_star.is_empty() || v_one.iter().any(|r| r.len() != v_star.len()) {
            return Err(Error::TableFormat("ragged value table".into()));
        }
        let n = v_star.len();
        let n_caches = v_one.len();
        Ok(Self {
            n_segments,
            segment_bits,
            v_star,
            v_one,
            v_star_se: vec![0.0; n],
            v_one_se: vec![vec![0.0; n]; n_caches],
        })
    }

    pub fn zeros(n_caches: usize, n_segments: usize, segment_bits: f64, n_max: usize) -> Self {
        Self::new(
            n_segments,
            segment_bits,
            vec![T::zero(); n_max + 1],
            vec![vec![T::zero(); n_max + 1]; n_caches],
        )
        .expect("consistent shape")
    }

    pub fn n_max(&self) -> usize {
        self.v_star.len() - 1
    }

    pub fn n_caches(&self) -> usize {
        self.v_one.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.n_max() {
            return Err(Error::TableRange {
                requested: n,
                available: self.n_max(),
            });
        }
        Ok(())
    }

    /// `v_one[i][N] - v_star[N]`.
    pub fn marginal(&self, cache: usize, n: usize) -> T {
        self.v_one[cache][n].clone() - self.v_star[n].clone()
    }

    /// Linear approximation: `v_star[N]` plus one marginal per zero bit.
    pub fn approx_value(&self, state: &CacheState, n: usize) -> Result<T> {
        self.check(n)?;
        let mut v = self.v_star[n].clone();
        for (c, _) in state.zero_bits() {
            v = v + self.marginal(c, n);
        }
        Ok(v)
    }

    /// Linear approximation for a file with `n_segments` segments of
    /// `segment_bits` bits, rescaled from this table's reference file.
    pub fn approx_value_cross_file(
        &self,
        state: &CacheState,
        n: usize,
        n_segments: usize,
        segment_bits: f64,
    ) -> Result<T> {
        self.check(n)?;
        let base_scale = T::from_f64_exact(n_segments as f64 * segment_bits)
            / T::from_f64_exact(self.n_segments as f64 * self.segment_bits);
        let bit_scale = T::from_f64_exact(segment_bits) / T::from_f64_exact(self.segment_bits);
        let mut v = base_scale * self.v_star[n].clone();
        for c in 0..state.n_caches() {
            let zeros = state.zeros_of_cache(c);
            if zeros > 0 {
                v = v + bit_scale.clone() * T::from_count(zeros) * self.marginal(c, n);
            }
        }
        Ok(v)
    }

    /// Lower bound on the value with `N` stages left: the
    /// all-cached value plus one-stage marginals per zero bit.
    pub fn lower_bound(&self, state: &CacheState, n: usize) -> Result<T> {
        self.check(n)?;
        if n == 0 {
            return Ok(T::zero());
        }
        self.check(1)?;
        let mut v = self.v_star[n].clone();
        for (c, _) in state.zero_bits() {
            v = v + self.marginal(c, 1);
        }
        Ok(v)
    }

    pub fn to_f64(&self) -> ValueTable<f64> {
        ValueTable {
            n_segments: self.n_segments,
            segment_bits: self.segment_bits,
            v_star: self.v_star.iter().map(Cost::to_f64_lossy).collect(),
            v_one: self
                .v_one
                .iter()
                .map(|r| r.iter().map(Cost::to_f64_lossy).collect())
                .collect(),
            v_star_se: self.v_star_se.clone(),
            v_one_se: self.v_one_se.clone(),
        }
    }
}

impl ValueTable<f64> {
    fn scales(&self, file: &FileSpec) -> (f64, f64) {
        let base = (file.num_segments as f64 * file.segment_bits)
            / (self.n_segments as f64 * self.segment_bits);
        (base, file.segment_bits / self.segment_bits)
    }

    fn pmf(&self, file: &FileSpec, remaining: f64) -> Vec<f64> {
        poisson_pmfs(file.arrival_rate * remaining.max(0.0), self.n_max())
    }

    /// Expected future cost of the state over the requests still to come in
    /// `remaining` seconds: a Poisson mixture of the linear approximation.
    pub fn remaining_cost(&self, state: &CacheState, remaining: f64, file: &FileSpec) -> f64 {
        let pmf = self.pmf(file, remaining);
        (1..=self.n_max())
            .map(|n| {
                let v = self
                    .approx_value_cross_file(state, n, file.num_segments, file.segment_bits)
                    .expect("within horizon");
                pmf[n] * v
            })
            .sum()
    }

    /// Expected future cost of leaving a single bit of `cache` undecoded.
    pub fn future_marginal(&self, cache: usize, remaining: f64, file: &FileSpec) -> f64 {
        let pmf = self.pmf(file, remaining);
        let (_, bit_scale) = self.scales(file);
        bit_scale
            * (1..=self.n_max())
                .map(|n| pmf[n] * self.marginal(cache, n))
                .sum::<f64>()
    }

    /// Lower bound on the minimum expected cost over the remaining lifetime.
    pub fn cost_to_go_lower_bound(
        &self,
        state: &CacheState,
        remaining: f64,
        file: &FileSpec,
    ) -> f64 {
        let pmf = self.pmf(file, remaining);
        let (base, bit_scale) = self.scales(file);
        let extra: f64 = (0..state.n_caches())
            .map(|c| state.zeros_of_cache(c) as f64 * self.marginal(c, 1))
            .sum();
        (1..=self.n_max())
            .map(|n| pmf[n] * (base * self.v_star[n] + bit_scale * extra))
            .sum()
    }

    /// Versioned flat text format; columns `N, v_star, v_one_1 .. v_one_C`
    /// for `N = 1..=n_max`.
    pub fn to_flat(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{TABLE_HEADER}").unwrap();
        writeln!(
            out,
            "# n_caches={} n_segments={} segment_bits={} n_max={}",
            self.n_caches(),
            self.n_segments,
            self.segment_bits,
            self.n_max()
        )
        .unwrap();
        let mut cols = vec!["N".to_string(), "v_star".to_string()];
        cols.extend((1..=self.n_caches()).map(|i| format!("v_one_{i}")));
        writeln!(out, "{}", cols.join(",")).unwrap();
        for n in 1..=self.n_max() {
            write!(out, "{},{}", n, self.v_star[n]).unwrap();
            for row in &self.v_one {
                write!(out, ",{}", row[n]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_flat(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::TableFormat(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(TABLE_HEADER) {
            return Err(bad("missing or unsupported version header"));
        }
        let meta = lines.next().ok_or_else(|| bad("missing metadata line"))?;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| bad("malformed metadata line"))?;
        let (mut n_caches, mut n_segments, mut segment_bits, mut n_max) = (None, None, None, None);
        for kv in meta.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad("malformed metadata entry"))?;
            match k {
                "n_caches" => n_caches = v.parse::<usize>().ok(),
                "n_segments" => n_segments = v.parse::<usize>().ok(),
                "segment_bits" => segment_bits = v.parse::<f64>().ok(),
                "n_max" => n_max = v.parse::<usize>().ok(),
                _ => return Err(bad("unknown metadata key")),
            }
        }
        let (Some(n_caches), Some(n_segments), Some(segment_bits), Some(n_max)) =
            (n_caches, n_segments, segment_bits, n_max)
        else {
            return Err(bad("incomplete metadata"));
        };
        let header = lines.next().ok_or_else(|| bad("missing column header"))?;
        if header.split(',').count() != n_caches + 2 {
            return Err(bad("column count does not match n_caches"));
        }
        let mut table = Self::zeros(n_caches, n_segments, segment_bits, n_max);
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_caches + 2 {
                return Err(bad("row has the wrong number of columns"));
            }
            let n: usize = fields[0].parse().map_err(|_| bad("bad stage index"))?;
            if n != seen + 1 || n > n_max {
                return Err(bad("stage rows must be 1..=n_max in order"));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
            table.v_star[n] = parse(fields[1])?;
            for c in 0..n_caches {
                table.v_one[c][n] = parse(fields[c + 2])?;
            }
            seen = n;
        }
        if seen != n_max {
            return Err(bad("table is truncated"));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_flat())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_flat(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> ValueTable<f64> {
        // v_star linear, v_one above it
        let v_star = vec![0.0, 2.0, 4.0, 6.0];
        let v_one = vec![vec![0.0, 3.0, 5.5, 7.5], vec![0.0, 2.5, 4.75, 6.9]];
        ValueTable::new(2, 1e6, v_star, v_one).unwrap()
    }

    fn file(lambda: f64, segs: usize, bits: f64) -> FileSpec {
        FileSpec {
            file_id: 0,
            arrival_rate: lambda,
            lifetime: 10.0,
            start_time: 0.0,
            num_segments: segs,
            segment_bits: bits,
        }
    }

    #[test]
    fn approx_value_examples() {
        let t = toy();
        assert_eq!(t.approx_value(&CacheState::full(2, 2), 3).unwrap(), 6.0);
        let one = CacheState::from_rows(&[vec![true, true], vec![false, true]]).unwrap();
        assert_eq!(t.approx_value(&one, 2).unwrap(), 4.75);
        // two caches, two segments, state [1,0 | 1,0]
        let ex = CacheState::from_rows(&[vec![true, false], vec![true, false]]).unwrap();
        let expect = 4.0 + (5.5 - 4.0) + (4.75 - 4.0);
        assert_eq!(t.approx_value(&ex, 2).unwrap(), expect);
        assert!(matches!(
            t.approx_value(&ex, 4),
            Err(Error::TableRange {
                requested: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn cross_file_scaling() {
        let t = toy();
        let st = CacheState::from_rows(&[vec![false, true], vec![true, true]]).unwrap();
        assert_eq!(
            t.approx_value_cross_file(&st, 2, 2, 1e6).unwrap(),
            t.approx_value(&st, 2).unwrap()
        );
        let single = ValueTable::new(1, 1e6, vec![0.0, 2.0], vec![vec![0.0, 3.0]]).unwrap();
        let zero = CacheState::empty(1, 1);
        assert_eq!(
            single.approx_value_cross_file(&zero, 1, 1, 2e6).unwrap(),
            2.0 * single.approx_value(&zero, 1).unwrap()
        );
    }

    #[test]
    fn mixtures() {
        let t = toy();
        let f = file(0.3, 2, 1e6);
        let full = CacheState::full(2, 2);
        assert_eq!(t.remaining_cost(&full, 0.0, &f), 0.0);
        assert_eq!(
            t.cost_to_go_lower_bound(&CacheState::empty(2, 2), 0.0, &f),
            0.0
        );
        let pmf = poisson_pmfs(0.3 * 4.0, 3);
        let direct: f64 = (1..=3).map(|n| pmf[n] * t.v_star[n]).sum();
        assert!((t.remaining_cost(&full, 4.0, &f) - direct).abs() < 1e-15);
        assert!((t.cost_to_go_lower_bound(&full, 4.0, &f) - direct).abs() < 1e-15);

        // remaining cost = all-cached part + one future marginal per zero bit
        let st = CacheState::from_rows(&[vec![false, true], vec![false, false]]).unwrap();
        let ident = t.remaining_cost(&full, 4.0, &f)
            + t.future_marginal(0, 4.0, &f)
            + 2.0 * t.future_marginal(1, 4.0, &f);
        assert!((t.remaining_cost(&st, 4.0, &f) - ident).abs() < 1e-12);
    }

    #[test]
    fn flat_file_round_trip() {
        let t = toy();
        let text = t.to_flat();
        assert!(text.starts_with(TABLE_HEADER));
        assert!(text.contains("N,v_star,v_one_1,v_one_2"));
        let back = ValueTable::from_flat(&text).unwrap();
        assert_eq!(back.v_star, t.v_star);
        assert_eq!(back.v_one, t.v_one);
        assert!(ValueTable::from_flat(&text.replace("v1", "v9")).is_err());
        let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(ValueTable::from_flat(&truncated).is_err());
    }

    proptest! {
        #[test]
        fn flipping_a_bit_removes_its_marginal(mask in 0u64..16, k in 0usize..4, n in 0usize..4) {
            let t = toy();
            let st = CacheState::from_mask(mask, 2, 2);
            prop_assume!(mask >> k & 1 == 0);
            let mut next = st.clone();
            next.set(k / 2, k % 2);
            let drop = t.approx_value(&st, n).unwrap() - t.approx_value(&next, n).unwrap();
            prop_assert!((drop - t.marginal(k / 2, n)).abs() < 1e-12);
        }
    }
}
