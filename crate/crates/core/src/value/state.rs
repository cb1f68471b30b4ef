use std::fmt;

use crate::error::{Error, Result};

/// Decoded-segment bits of one file: `bit(c, s)` is set once cache node `c`
/// holds segment `s`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CacheState {
    n_caches: usize,
    n_segments: usize,
    bits: Vec<bool>,
}

/// The two families of states the linear approximation is anchored on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceState {
    AllCached,
    AllBut { cache: usize, segment: usize },
}

impl CacheState {
    pub fn empty(n_caches: usize, n_segments: usize) -> Self {
        Self {
            n_caches,
            n_segments,
            bits: vec![false; n_caches * n_segments],
        }
    }

    pub fn full(n_caches: usize, n_segments: usize) -> Self {
        Self {
            n_caches,
            n_segments,
            bits: vec![true; n_caches * n_segments],
        }
    }

    pub fn reference(r: ReferenceState, n_caches: usize, n_segments: usize) -> Self {
        let mut st = Self::full(n_caches, n_segments);
        if let ReferenceState::AllBut { cache, segment } = r {
            st.bits[cache * n_segments + segment] = false;
        }
        st
    }

    /// Row-major bits: `rows[c][s]`.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n_segments = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_segments) {
            return Err(Error::InvalidParameter(
                "cache state rows must have equal length".into(),
            ));
        }
        Ok(Self {
            n_caches: rows.len(),
            n_segments,
            bits: rows.concat(),
        })
    }

    pub fn n_caches(&self) -> usize {
        self.n_caches
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn n_bits(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, cache: usize, segment: usize) -> bool {
        self.bits[cache * self.n_segments + segment]
    }

    /// Sets a bit; returns whether it was previously clear.
    pub fn set(&mut self, cache: usize, segment: usize) -> bool {
        let b = &mut self.bits[cache * self.n_segments + segment];
        let flipped = !*b;
        *b = true;
        flipped
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn segment_complete(&self, segment: usize) -> bool {
        (0..self.n_caches).all(|c| self.get(c, segment))
    }

    pub fn zeros_of_cache(&self, cache: usize) -> usize {
        (0..self.n_segments)
            .filter(|&s| !self.get(cache, s))
            .count()
    }

    pub fn count_zeros(&self) -> usize {
        self.bits.iter().filter(|&&b| !b).count()
    }

    /// `(cache, segment)` pairs that are still undecoded.
    pub fn zero_bits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| !b)
            .map(move |(k, _)| (k / self.n_segments, k % self.n_segments))
    }

    /// Bit `c * n_segments + s` of the mask holds `bit(c, s)`.
    pub fn to_mask(&self) -> u64 {
        assert!(self.bits.len() <= 64, "state does not fit a mask");
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (k, &b)| if b { m | (1 << k) } else { m })
    }

    pub fn from_mask(mask: u64, n_caches: usize, n_segments: usize) -> Self {
        let bits = (0..n_caches * n_segments)
            .map(|k| mask >> k & 1 == 1)
            .collect();
        Self {
            n_caches,
            n_segments,
            bits,
        }
    }

    /// True if every bit set in `self` is also set in `later`.
    pub fn is_dominated_by(&self, later: &CacheState) -> bool {
        self.bits.iter().zip(&later.bits).all(|(&a, &b)| !a || b)
    }
}

impl fmt::Debug for CacheState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for c in 0..self.n_caches {
            if c > 0 {
                write!(f, "|")?;
            }
            for s in 0..self.n_segments {
                write!(f, "{}", u8::from(self.get(c, s)))?;
            }
        }
        write!(f, "]")
    }
}
