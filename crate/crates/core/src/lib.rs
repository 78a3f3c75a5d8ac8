// SPDX-License-Identifier: Apache-2.0

//! Gauge likelihood analysis (GLA): unsupervised anomaly detection for
//! discrete event series.
//!
//! A long event stream is cut into fixed-length windows and one hidden
//! Markov model is fitted per window. Because HMM parameters are not
//! identifiable, each model is represented by the log-likelihoods it assigns
//! to a fixed set of gauge sequences. Those vectors are embedded in 2D with
//! t-SNE and clustered with HDBSCAN; windows left as noise are the anomalies.
//!
//! ```no_run
//! use gla::pipeline::{run, GlaConfig};
//! use gla::par::Execution;
//!
//! let config = GlaConfig {
//!     input: Some("events.txt".into()),
//!     out_dir: Some("out".into()),
//!     ..GlaConfig::default()
//! };
//! let report = run(&config, Execution::Parallel)?;
//! println!("{} anomalous windows", report.outliers.len());
//! # Ok::<(), gla::Error>(())
//! ```

pub mod cluster;
pub mod embed;
pub mod error;
pub mod eval;
pub mod events;
pub mod gauge;
pub mod hmm;
pub mod par;
pub mod pipeline;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
