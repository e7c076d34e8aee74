//! Simultaneous one-shot second-price sealed-bid auctions with price
//! prediction strategies.
//!
//! Modules build on each other: [`valuation`] and [`mechanism`] define the
//! market, [`prediction`] the price distributions agents bid against,
//! [`strategies`] the bidding heuristics, [`scpp`] the self-confirming
//! prediction search, [`oracle`] exact expected utility and optimal bids,
//! and [`egta`] empirical game analysis over strategy profiles.

pub mod egta;
pub mod error;
pub mod mechanism;
pub mod oracle;
pub mod prediction;
pub mod scpp;
pub mod seed;
pub mod strategies;
pub mod valuation;

pub use error::{Error, Result};
pub use mechanism::{run_auction, AuctionResult, BidVector, PriceVector};
pub use prediction::{PriceHistogram, Statistic};
pub use strategies::{PredictionSource, StrategyKind, StrategySpec};
pub use valuation::{Bundle, Environment, Valuation, ValuationFamily};
