//! Conditional scenario generation.
//!
//! Joint forecasting and simulation of macroeconomic states, financial factor
//! returns and asset returns, calibrated to historical data and to
//! forward-looking views (stress scenarios, capital market assumptions) by
//! Kalman filtering and smoothing of Gaussian dynamic linear models.
//!
//! Module map:
//!
//! * [`gaussdlm`]: filtering, smoothing, disturbance and simulation smoothing
//!   for time-varying DLMs with correlated state/measurement noise.
//! * [`views`]: typed views and their compilation to the unified linear
//!   constraint form on `(alpha, x~, eps)`.
//! * [`markets`]: factor/asset model, alpha process, Nelson-Siegel curves.
//! * [`estimation`]: parameter bundle, NIW link regression, VAR estimation,
//!   assembly of the joint historical DLM.
//! * [`forecast`]: the conditional forecasting pipelines.
//! * [`blref`]: reference Black-Litterman and its single-period embedding.

pub mod blref;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod gaussdlm;
pub mod linalg;
pub mod markets;
pub mod rng;
pub mod views;

pub use error::{Error, Result};
