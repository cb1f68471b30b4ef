//! Physical-layer model of a full-diversity STBC downlink.
//!
//! Everything here works in the high-SINR regime, where the ergodic rate of a
//! receiver with log-SNR statistic `theta` at transmit power `P` is
//! `alpha * (theta + log2 P)` bits per symbol. The same rate model is used
//! for optimization and for deciding which receivers decode a multicast.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITERATIONS: usize = 64;

/// Relative slack used when checking whether a receiver decodes.
pub const DECODE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhyConfig<T> {
    pub num_antennas: u32,
    pub stbc_rate: T,
    pub noise_power: T,
    pub peak_power: T,
    pub symbol_weight: T,
    /// Power floor used only when `symbol_weight == 0`.
    pub min_power: T,
}

impl<T: Real> PhyConfig<T> {
    pub fn new(
        num_antennas: u32,
        stbc_rate: T,
        noise_power: T,
        peak_power: T,
        symbol_weight: T,
    ) -> Result<Self> {
        let cfg = Self {
            num_antennas,
            stbc_rate,
            noise_power,
            peak_power,
            symbol_weight,
            min_power: peak_power * T::lit(1e-6),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_min_power(mut self, min_power: T) -> Result<Self> {
        self.min_power = min_power;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(invalid("num_antennas must be at least 1"));
        }
        let one = T::one();
        let zero = T::zero();
        if !(self.stbc_rate > zero && self.stbc_rate <= one) {
            return Err(invalid("stbc_rate must lie in (0, 1]"));
        }
        if !(self.noise_power > zero && self.noise_power.is_finite()) {
            return Err(invalid("noise_power must be positive"));
        }
        if !(self.peak_power > zero && self.peak_power.is_finite()) {
            return Err(invalid("peak_power must be positive"));
        }
        if !(self.symbol_weight >= zero && self.symbol_weight.is_finite()) {
            return Err(invalid("symbol_weight must be nonnegative"));
        }
        if !(self.min_power > zero && self.min_power <= self.peak_power) {
            return Err(invalid("min_power must lie in (0, peak_power]"));
        }
        Ok(())
    }
}

/// Large-scale state of one BS-to-receiver link during one segment transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState<T> {
    pub pathloss: T,
    pub shadowing: T,
    pub interference: T,
}

impl<T: Real> LinkState<T> {
    pub fn new(pathloss: T, shadowing: T, interference: T) -> Result<Self> {
        if !(pathloss > T::zero() && shadowing > T::zero() && interference >= T::zero()) {
            return Err(invalid(
                "link requires pathloss > 0, shadowing > 0, interference >= 0",
            ));
        }
        Ok(Self {
            pathloss,
            shadowing,
            interference,
        })
    }

    /// Combined large-scale power gain.
    pub fn gain(&self) -> T {
        self.pathloss * self.shadowing
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentDemand<T> {
    pub info_bits: T,
    pub link: LinkState<T>,
}

/// Transmit power and (continuous) symbol count of one segment multicast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TxParams<T> {
    pub power: T,
    pub symbols: T,
}

impl<T: Real> TxParams<T> {
    /// Weighted cost `P N + w N`.
    pub fn objective(&self, symbol_weight: T) -> T {
        (self.power + symbol_weight) * self.symbols
    }
}

/// Principal branch of the Lambert-W function on `[0, inf)`.
pub fn lambert_w<T: Real>(x: T) -> Result<T> {
    if x.is_nan() || x < T::zero() {
        return Err(Error::Domain(x.to_f64().unwrap_or(f64::NAN)));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x.is_infinite() {
        return Ok(x);
    }
    let one = T::one();
    let two = T::lit(2.0);
    let tol = T::epsilon() * T::lit(4.0);

    // Winitzki's approximation, within a few percent on the whole half-line.
    let l = x.ln_1p();
    let mut w = l * (one - (one + l).ln() / (two + l));

    if x > T::lit(std::f64::consts::E) {
        // Halley on w + ln w - ln x, which stays well scaled for huge x.
        let lx = x.ln();
        for _ in 0..MAX_ITERATIONS {
            let f = w + w.ln() - lx;
            let f1 = one + one / w;
            let f2 = -one / (w * w);
            let step = f / (f1 - f * f2 / (two * f1));
            w = w - step;
            if step.abs() <= tol * w.abs() {
                break;
            }
        }
    } else {
        for _ in 0..MAX_ITERATIONS {
            let ew = w.exp();
            let f = w * ew - x;
            let wp1 = w + one;
            let step = f / (ew * wp1 - (w + two) * f / (two * wp1));
            w = w - step;
            if step.abs() <= tol * w.abs().max(T::min_positive_value()) {
                break;
            }
        }
    }
    Ok(w)
}

/// Digamma at a positive integer: `psi(n) = -gamma + H_{n-1}`.
pub fn digamma_int<T: Real>(n: u32) -> T {
    assert!(n >= 1, "digamma_int needs n >= 1");
    let mut acc = -T::lit(EULER_GAMMA);
    for k in 1..n {
        acc = acc + T::one() / T::lit(k as f64);
    }
    acc
}

/// `E[log2(|h|^2 / (N_T (sigma^2 + I)))]` for `|h|^2 ~ Gamma(N_T, rho*eta)`.
pub fn theta<T: Real>(link: &LinkState<T>, cfg: &PhyConfig<T>) -> T {
    let nt = T::lit(cfg.num_antennas as f64);
    let psi = digamma_int::<T>(cfg.num_antennas);
    (psi + link.gain().ln() - (nt * (cfg.noise_power + link.interference)).ln())
        / T::lit(std::f64::consts::LN_2)
}

/// Bits per symbol under the high-SINR model.
pub fn rate_per_symbol<T: Real>(theta: T, power: T, cfg: &PhyConfig<T>) -> T {
    cfg.stbc_rate * (theta + power.log2())
}

/// Cost-minimizing `(P, N)` that delivers `info_bits` to a receiver with
/// log-SNR statistic `theta`, subject to `P <= P_B`.
pub fn optimal_tx_for_theta<T: Real>(
    theta: T,
    info_bits: T,
    cfg: &PhyConfig<T>,
) -> Result<TxParams<T>> {
    let peak_offset = theta + cfg.peak_power.log2();
    if !(peak_offset > T::zero()) {
        return Err(Error::InfeasibleLink {
            offset: peak_offset.to_f64().unwrap_or(f64::NAN),
        });
    }
    let w = cfg.symbol_weight;
    let unclamped = if w > T::zero() {
        let arg = T::lit(2.0).powf(theta) * w / T::lit(std::f64::consts::E);
        w / lambert_w(arg)?
    } else {
        // Limit of w / W(2^theta w / e) as w -> 0.
        (T::lit(std::f64::consts::E) * T::lit(2.0).powf(-theta)).max(cfg.min_power)
    };
    let power = unclamped.min(cfg.peak_power);
    // Equals max{R ln2 / (alpha (W + 1)), R / (alpha (theta + log2 P_B))}.
    let symbols = info_bits / rate_per_symbol(theta, power, cfg);
    Ok(TxParams { power, symbols })
}

pub fn optimal_tx<T: Real>(demand: &SegmentDemand<T>, cfg: &PhyConfig<T>) -> Result<TxParams<T>> {
    optimal_tx_for_theta(theta(&demand.link, cfg), demand.info_bits, cfg)
}

/// Minimal (continuous) symbol count that lets a receiver with statistic
/// `theta` decode `info_bits` at `power`.
pub fn decode_threshold_symbols_for_theta<T: Real>(
    theta: T,
    info_bits: T,
    power: T,
    cfg: &PhyConfig<T>,
) -> Result<T> {
    if !(power > T::zero() && power <= cfg.peak_power) {
        return Err(invalid("power must lie in (0, peak_power]"));
    }
    let rate = rate_per_symbol(theta, power, cfg);
    if !(rate > T::zero()) {
        return Err(Error::InfeasibleLink {
            offset: (theta + power.log2()).to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(info_bits / rate)
}

pub fn decode_threshold_symbols<T: Real>(
    demand: &SegmentDemand<T>,
    power: T,
    cfg: &PhyConfig<T>,
) -> Result<T> {
    decode_threshold_symbols_for_theta(theta(&demand.link, cfg), demand.info_bits, power, cfg)
}

/// Whether a receiver with statistic `theta` decodes the transmission `tx`.
pub fn decodes<T: Real>(theta: T, info_bits: T, tx: &TxParams<T>, cfg: &PhyConfig<T>) -> bool {
    let rate = rate_per_symbol(theta, tx.power, cfg);
    rate > T::zero() && tx.symbols * rate >= info_bits * (T::one() - T::lit(DECODE_TOLERANCE))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma};

    fn cfg(nt: u32, alpha: f64, pb: f64, w: f64) -> PhyConfig<f64> {
        PhyConfig::new(nt, alpha, 1.0, pb, w).unwrap()
    }

    /// Plain Newton on w e^w - x, used as an independent reference.
    fn newton_w(x: f64) -> f64 {
        let mut w = if x < 1.0 { x } else { x.ln() };
        for _ in 0..200 {
            let f = w * w.exp() - x;
            let df = w.exp() * (w + 1.0);
            w -= f / df;
        }
        w
    }

    #[test]
    fn lambert_w_examples() {
        assert_eq!(lambert_w(0.0_f64).unwrap(), 0.0);
        assert!((lambert_w(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-14);
        let omega = newton_w(1.0);
        assert!((omega - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w(1.0_f64).unwrap() - omega).abs() < 1e-14);
    }

    #[test]
    fn lambert_w_rejects_negative() {
        assert!(matches!(lambert_w(-1e-3_f64), Err(Error::Domain(_))));
        assert!(lambert_w(f64::NAN).is_err());
    }

    #[test]
    fn lambert_w_f32() {
        let w = lambert_w(1.0_f32).unwrap();
        assert!((w - 0.567_143_3).abs() < 1e-6);
    }

    #[test]
    fn theta_single_antenna_unit_mean() {
        // sigma^2 + I = rho * eta, so |h|^2 / (sigma^2 + I) ~ Exp(1).
        let c = cfg(1, 1.0, 10.0, 1.0);
        let link = LinkState::new(0.5, 2.0, 0.0).unwrap();
        let th = theta(&link, &c);
        assert!((th + EULER_GAMMA / std::f64::consts::LN_2).abs() < 1e-12);
        assert!((th + 0.8327).abs() < 1e-4);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dist = rand_distr::Exp1;
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x: f64 = dist.sample(&mut rng);
            let v = x.log2();
            s += v;
            s2 += v * v;
        }
        let m = s / n as f64;
        let se = ((s2 / n as f64 - m * m) / n as f64).sqrt();
        assert!((m - th).abs() < 3.0 * se, "mc {m} closed {th} se {se}");
    }

    #[test]
    fn theta_eight_antennas_matches_gamma_monte_carlo() {
        let c = cfg(8, 1.0, 10.0, 1.0);
        let link = LinkState::new(1.0, 1.0, 0.0).unwrap();
        let th = theta(&link, &c);
        let gamma = Gamma::new(8.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let g: f64 = gamma.sample(&mut rng);
            let v = (g / 8.0).log2();
            s += v;
            s2 += v * v;
        }
        let m = s / n as f64;
        let se = ((s2 / n as f64 - m * m) / n as f64).sqrt();
        assert!((m - th).abs() < 3.0 * se, "mc {m} closed {th} se {se}");
    }

    #[test]
    fn doubling_gain_adds_one_bit() {
        let c = cfg(4, 1.0, 10.0, 1.0);
        let a = LinkState::new(1e-9, 1.3, 1e-3).unwrap();
        let b = LinkState::new(2e-9, 1.3, 1e-3).unwrap();
        assert!((theta(&b, &c) - theta(&a, &c) - 1.0).abs() < 1e-12);
    }

    fn grid_best(theta: f64, info_bits: f64, c: &PhyConfig<f64>, steps: usize) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..=steps {
            let p = c.peak_power * k as f64 / steps as f64;
            let r = c.stbc_rate * (theta + p.log2());
            if r <= 0.0 {
                continue;
            }
            let obj = (p + c.symbol_weight) * info_bits / r;
            if obj < best.0 {
                best = (obj, p);
            }
        }
        best
    }

    #[test]
    fn optimal_tx_worked_example() {
        let c = cfg(1, 1.0, 100.0, 1.0);
        let tx = optimal_tx_for_theta(0.0, 1.0, &c).unwrap();
        let w = lambert_w(1.0 / std::f64::consts::E).unwrap();
        assert!((tx.power - 1.0 / w).abs() < 1e-12);
        assert!((tx.power - 3.591).abs() < 1e-3);
        assert!((tx.symbols - std::f64::consts::LN_2 / (w + 1.0)).abs() < 1e-12);
        assert!((tx.symbols - 0.5422).abs() < 1e-4);
        // Grid search with step 1e-4 over (0, 100].
        let (best, p) = grid_best(0.0, 1.0, &c, 1_000_000);
        assert!((p - tx.power).abs() < 2e-4);
        assert!(tx.objective(1.0) <= best * (1.0 + 1e-9));
    }

    #[test]
    fn optimal_tx_clamps_at_peak() {
        let c = cfg(2, 1.0, 2.0, 50.0);
        let tx = optimal_tx_for_theta(3.0, 10.0, &c).unwrap();
        assert_eq!(tx.power, 2.0);
        let closed_n = (10.0 * std::f64::consts::LN_2
            / (lambert_w(8.0 * 50.0 / std::f64::consts::E).unwrap() + 1.0))
            .max(10.0 / (3.0 + 1.0));
        assert!((tx.symbols - closed_n).abs() < 1e-12 * closed_n);
    }

    #[test]
    fn optimal_tx_linear_in_bits() {
        let c = cfg(8, 0.5, 40.0, 10.0);
        let a = optimal_tx_for_theta(7.5, 1e6, &c).unwrap();
        let b = optimal_tx_for_theta(7.5, 2e6, &c).unwrap();
        assert_eq!(a.power, b.power);
        assert!((b.symbols - 2.0 * a.symbols).abs() < 1e-9 * b.symbols);
    }

    #[test]
    fn optimal_tx_infeasible_below_peak() {
        let c = cfg(1, 1.0, 4.0, 1.0);
        assert!(matches!(
            optimal_tx_for_theta(-2.0, 1.0, &c),
            Err(Error::InfeasibleLink { .. })
        ));
        assert!(optimal_tx_for_theta(-1.9, 1.0, &c).is_ok());
    }

    #[test]
    fn zero_weight_uses_energy_optimal_limit() {
        let c = cfg(1, 1.0, 100.0, 0.0);
        let tx = optimal_tx_for_theta(1.0, 1.0, &c).unwrap();
        assert!((tx.power - std::f64::consts::E / 2.0).abs() < 1e-12);
        // Continuity with small positive weights.
        let c_small = cfg(1, 1.0, 100.0, 1e-9);
        let tx_small = optimal_tx_for_theta(1.0, 1.0, &c_small).unwrap();
        assert!((tx_small.power - tx.power).abs() < 1e-6);
    }

    #[test]
    fn decode_threshold_examples() {
        let c = cfg(1, 1.0, 64.0, 1.0);
        // theta + log2 P = 4 bits per symbol
        let link = LinkState::new(1.0, 1.0, 0.0).unwrap();
        let th = theta(&link, &c);
        let p = 2f64.powf(4.0 - th);
        let d = SegmentDemand {
            info_bits: 4.0,
            link,
        };
        assert!((decode_threshold_symbols(&d, p, &c).unwrap() - 1.0).abs() < 1e-12);
        let d2 = SegmentDemand {
            info_bits: 8.0,
            link,
        };
        assert!((decode_threshold_symbols(&d2, p, &c).unwrap() - 2.0).abs() < 1e-12);
        assert!(decode_threshold_symbols(&d, 128.0, &c).is_err());
    }

    #[test]
    fn decode_threshold_consistent_with_optimal_tx() {
        let c = PhyConfig::<f64>::new(8, 0.5, 1e-13, 39.8, 10.0).unwrap();
        let link = LinkState::new(3e-9, 0.7, 1e-11).unwrap();
        let d = SegmentDemand {
            info_bits: 14e6,
            link,
        };
        let tx = optimal_tx(&d, &c).unwrap();
        let n = decode_threshold_symbols(&d, tx.power, &c).unwrap();
        assert!((n - tx.symbols).abs() <= 1e-9 * n);
        assert!(decodes(theta(&link, &c), 14e6, &tx, &c));
    }

    proptest! {
        #[test]
        fn lambert_w_round_trip(log_x in -18.4f64..18.4) {
            let x = log_x.exp();
            let w = lambert_w(x).unwrap();
            prop_assert!(((w * w.exp() - x) / x).abs() < 1e-12);
        }

        #[test]
        fn closed_form_beats_grid(theta in -3.0f64..15.0, w in 0.01f64..100.0, bits in 1.0f64..1e7, pb in 1.0f64..100.0) {
            prop_assume!(theta + pb.log2() > 0.05);
            let c = cfg(8, 0.5, pb, w);
            let tx = optimal_tx_for_theta(theta, bits, &c).unwrap();
            prop_assert!(tx.power <= pb);
            let rate = c.stbc_rate * (theta + tx.power.log2());
            prop_assert!((tx.symbols * rate - bits).abs() <= 1e-9 * bits);
            let (best, _) = grid_best(theta, bits, &c, 20_000);
            prop_assert!(tx.objective(w) <= best * (1.0 + 1e-9));
            prop_assert!(tx.objective(w) >= best * (1.0 - 1e-3));
        }

        #[test]
        fn objective_nonincreasing_in_theta(theta in -2.0f64..14.0, dt in 0.0f64..4.0, w in 0.0f64..50.0) {
            let c = cfg(8, 0.5, 40.0, w);
            let a = optimal_tx_for_theta(theta, 1e6, &c).unwrap();
            let b = optimal_tx_for_theta(theta + dt, 1e6, &c).unwrap();
            prop_assert!(b.objective(w) <= a.objective(w) * (1.0 + 1e-12));
        }
    }
}
