//! Precision of linear dose-response measurement methods estimated from
//! balanced interlaboratory studies.
//!
//! Every laboratory measures the same centered dose vector `x` (length `n`,
//! doses may repeat) and the response follows
//!
//! ```text
//! Y_ij = (a0 + A_i) + (b0 + B_i) x_j + E_ij
//! A_i ~ N(0, σ²_A), B_i ~ N(0, σ²_B), E_ij ~ N(0, σ²_E)
//! ```
//!
//! The crate fits the overall line and per-laboratory deviations in closed
//! form, decomposes the total sum of squares as `S_T = S_E + S_L + S_R` with
//! `S_L = S_A + S_B`, estimates the repeatability, between-laboratory and
//! reproducibility variances, and runs the three F-tests (overall trend,
//! homogeneity of intercepts, homogeneity of slopes).
//!
//! # Modules
//!
//! - [`ingest`] - CSV parsing, transforms and balance validation
//! - [`model`] - closed-form overall and per-laboratory fits
//! - [`anova`] - sums of squares, ANOVA tables, variance components, F-tests
//! - [`fdist`] - F distribution CDF, survival function and quantile
//! - [`sim`] - seeded data generation and Monte Carlo checks
//! - [`report`] - text and JSON reports
//! - [`cli`] - command-line front end
//!
//! # Example
//!
//! ```
//! use dose_precision::{anova, ingest::Dataset, model};
//!
//! let x = vec![-1.0, -1.0, 0.0, 0.0, 1.0, 1.0];
//! let y = vec![
//!     vec![0.9, 1.1, 2.0, 2.1, 3.0, 2.9],
//!     vec![1.4, 1.6, 2.4, 2.6, 3.7, 3.5],
//!     vec![0.2, 0.1, 1.2, 1.0, 2.1, 2.0],
//! ];
//! let data = Dataset::new(vec!["a".into(), "b".into(), "c".into()], x, y).unwrap();
//! let fit = model::fit(&data).unwrap();
//! let ss = anova::sums_of_squares(&data, &fit.design, &fit.overall, &fit.effects);
//! assert!((ss.total - (ss.error + ss.lab + ss.regression)).abs() < 1e-12);
//! let vc = anova::variance_components(&ss, &fit.design);
//! assert!(vc.repeatability > 0.0);
//! ```

pub mod anova;
pub mod cli;
pub mod error;
pub mod fdist;
pub mod ingest;
pub mod model;
mod numeric;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
