//! Fractional smoothness of option payoffs under geometric Brownian motion
//! and the convergence rate of discrete-time delta hedging.

pub mod chaos;
pub mod error;
pub mod hedging;
pub mod model;
pub mod normal;
pub mod payoffs;
pub mod quadrature;
pub mod ratefit;
pub mod report;
pub mod rng;
pub mod smoothness;
pub mod stats;
pub mod timenets;
pub mod weaklimit;

pub use error::{Error, Result};
pub use model::{MarketModel, Measure, PathBatch};
pub use payoffs::{Greeks, Payoff, PricingConfig};
pub use timenets::{make_theta_net, TimeNet};
