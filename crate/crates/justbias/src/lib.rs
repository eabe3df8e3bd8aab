//! Shrinking-window tests for justification bias in self-assessed health.
//!
//! The library generates synthetic monthly retirement panels with a known
//! injected reporting bias, estimates fixed-effects 2SLS around a statutory
//! retirement age over narrowing windows, and checks that the window test
//! recovers the injected bias (or correctly fails to reject when there is
//! none), alongside an indirect OLS-versus-IV comparison, an objective-health
//! placebo, robustness variants, a biennial-thinning power study, and a Monte
//! Carlo harness for size and power.

pub mod biastests;
pub mod csvio;
pub mod error;
pub mod estimation;
pub mod mcstudy;
pub mod panel;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod runconfig;
pub mod seeds;
pub mod synthpanel;
pub mod thinning;

pub use error::{Error, EstimError, Result};
