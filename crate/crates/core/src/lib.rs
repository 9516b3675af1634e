//! Deterministic research engine for news-sentiment trading studies.
//!
//! The pipeline deduplicates news, labels articles by their aggregated
//! three-day excess return, scores them (dictionary or ingested model
//! scores), evaluates directional accuracy, fits a two-way fixed-effects
//! panel regression of next-day returns on scores, and backtests daily
//! value-weighted long/short sentiment portfolios.

pub mod backtest;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod error;
pub mod marketdata;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
