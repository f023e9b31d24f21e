//! Backtesting toolkit for single-stock daily trading controllers under
//! proportional transaction costs.
//!
//! The pieces, bottom up:
//!
//! - [`market_data`]: price series, CSV loading, causal history views;
//! - [`portfolio`]: the integer-share cash/stock state machine;
//! - [`predictors`]: one-step-ahead price estimates;
//! - [`smpc`] and [`technical`]: the controllers;
//! - [`histopt`]: the hindsight-optimal trajectory and its causal variant;
//! - [`harness`]: daily loop, metrics, baselines and the experiment matrix;
//! - [`tuner`]: grid search, re-tuning and the overfitting report;
//! - [`cli`]: configuration and report writing behind `tradectl`.

pub mod cli;
pub mod error;
pub mod harness;
pub mod histopt;
pub mod market_data;
pub mod parallel;
pub mod portfolio;
pub mod predictors;
pub mod rng;
pub mod smpc;
pub mod synthetic;
pub mod technical;
pub mod tuner;

pub use error::{Error, Result};
pub use harness::{ControllerKind, ControllerSpec, RunConfig, RunMetrics, SummaryRow};
pub use market_data::{HistoryView, PriceSeries};
pub use portfolio::{CostModel, PortfolioState, Signal};
pub use predictors::PredictorKind;
