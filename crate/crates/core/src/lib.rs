//! Symbolic data analysis of stock-market data.
//!
//! Daily quotes are turned into per-stock indicators, aggregated into
//! interval and modal descriptions of stocks, sectors, markets, portfolios
//! or weeks, then analyzed by divisive clustering, interval PCA or a
//! pyramid.

pub mod div;
pub mod error;
pub mod indicators;
pub mod ipca;
pub mod market_data;
pub mod pyramid;
pub mod query;
pub mod synth;
pub mod symbolic;
mod svg;

pub use error::{Error, Result};
