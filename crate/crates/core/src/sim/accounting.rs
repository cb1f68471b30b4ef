//! Exact cost accumulation.
//!
//! Floating-point addition is not associative, so two rollups of the same
//! costs in different orders would disagree in the last bits. `ExactSum`
//! keeps the running sum as a list of non-overlapping partials (Shewchuk's
//! algorithm) and rounds once at the end, so any grouping of the same terms
//! yields the same correctly rounded total.

use crate::value::CostBreakdown;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round half-even across the remaining partials.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// Energy and symbols summed exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostAccumulator {
    energy: ExactSum,
    symbols: u128,
}

impl CostAccumulator {
    /// Accounts one transmission; symbols are rounded up to whole symbols.
    pub fn add_transmission(&mut self, power: f64, symbols: f64) {
        let whole = symbols.ceil();
        self.energy.add(power * whole);
        self.symbols += whole as u128;
    }

    pub fn merge(&mut self, other: &CostAccumulator) {
        self.energy.merge(&other.energy);
        self.symbols += other.symbols;
    }

    pub fn energy(&self) -> f64 {
        self.energy.value()
    }

    pub fn symbols(&self) -> u128 {
        self.symbols
    }

    pub fn breakdown(&self, symbol_weight: f64) -> CostBreakdown {
        CostBreakdown::new(self.energy(), self.symbols as f64, symbol_weight)
    }
}
