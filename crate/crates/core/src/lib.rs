//! Simulation and asymptotic analysis of information regimes in two-sided
//! matching markets with a common quality term and idiosyncratic match terms.

pub mod asymptotics;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod market;
pub mod oracles;
pub mod rng;
pub mod special;
pub mod welfare;

pub use dist::DistSpec;
pub use error::{Error, Result};
pub use market::{MarketConfig, Regime, SamplingMode, Setting, Supply};
