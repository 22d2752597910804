//! Synthetic binary prediction markets.
//!
//! Agents hold ellipsoidal opinions about where in feature space their asset
//! pays off and trade one unit at a time against a logarithmic market scoring
//! rule market maker. The long-run Asset 1 price of a market conditioned on an
//! input serves as a classifier; populations are trained by an evolutionary
//! loop driven by market profits.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod datasets;
pub mod error;
pub mod evolve;
pub mod lmsr;
pub mod market;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use lmsr::{AssetSide, MarketState};
pub use scalar::Scalar;

pub type PricePair = lmsr::PricePair<f64>;
pub type Liquidity = lmsr::Liquidity<f64>;
pub type AgentParams = agents::AgentParams<f64>;
pub type AgentState = agents::AgentState<f64>;
pub type MarketConfig = market::MarketConfig<f64>;
pub type MarketOutcome = market::MarketOutcome<f64>;
pub type Settlement = market::Settlement<f64>;
pub type Dataset = datasets::Dataset<f64>;
pub type TrainConfig = evolve::TrainConfig<f64>;
pub type Population = evolve::Population<f64>;
pub type MemorizingMarket = evolve::MemorizingMarket<f64>;
