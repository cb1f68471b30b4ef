//! Cache-assisted downlink multicast scheduling.
//!
//! A base station multicasts file segments to requesting users and, in the
//! same transmission, to cache nodes that can later serve nearby users over
//! a side link. Scheduling is a finite-horizon MDP over cache states; this
//! crate evaluates a linear approximation of its value function, bounds it,
//! learns it online, and simulates the resulting policies.
//!
//! Physical-layer math is generic over [`scalar::Real`]; value tables and
//! the exact oracle are generic over [`scalar::Cost`], which also covers
//! exact rationals.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod learner;
pub mod phy;
pub mod proactive;
pub mod reactive;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod topology;
pub mod traffic;
pub mod value;

pub use error::{Error, Result};

use num_rational::BigRational;

pub type PhyConfig64 = phy::PhyConfig<f64>;
pub type PhyConfig32 = phy::PhyConfig<f32>;
pub type LinkState64 = phy::LinkState<f64>;
pub type ValueTable64 = value::ValueTable<f64>;
pub type ExactValueTable = value::ValueTable<BigRational>;
pub type ExactInstance = value::ExactInstance<BigRational>;
pub type Rational = BigRational;
