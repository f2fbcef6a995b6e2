//! Bayesian model-averaged polyhazard survival modelling.
//!
//! The overall hazard is a sum of independent Weibull or log-logistic
//! subhazards, each with its own shape and a log-link linear predictor with
//! spike-and-slab covariate selection. Posterior sampling runs in continuous
//! time: a sticky zig-zag process moves the continuous coordinates while
//! superposed jump processes update the number of subhazards, their
//! distributions, and the shared hyperparameters. Post-processing turns the
//! event record into submodel probabilities, mean survival, and hazard-ratio
//! summaries.
//!
//! ## Example: fit simulated data and summarize survival
//!
//! ```rust
//! use polyhazard::engine::{self, SamplerConfig};
//! use polyhazard::jumps::JumpRates;
//! use polyhazard::model::{Dataset, PriorConfig};
//! use polyhazard::oracle;
//! use polyhazard::postprocess::{apply_ordering, mean_survival, submodel_probabilities};
//! use polyhazard::survdist::DistKind;
//!
//! // 200 observations from a unit-shape Weibull with rate 1/2 (E[Y] = 2),
//! // lightly censored.
//! let raw = oracle::simulate_polyhazard(&[(DistKind::Weibull, 1.0, 0.5)], 0.1, 200, 7)?;
//! let data = Dataset::new(raw)?;
//!
//! let prior = PriorConfig { k_max: 2, ..PriorConfig::default() };
//! let config = SamplerConfig {
//!     total_time: 200.0,
//!     sample_rate: 2.0,
//!     rates: JumpRates::combined(9.0),
//!     seed: 42,
//!     chains: 1,
//!     ..SamplerConfig::default()
//! };
//!
//! let runs = engine::run(&config, &prior, &data, 1)?;
//! let probs = submodel_probabilities(&runs[0].skeleton);
//! assert!((probs.iter().map(|p| p.occupancy).sum::<f64>() - 1.0).abs() < 1e-9);
//!
//! let mut samples = runs[0].skeleton.samples.clone();
//! samples.iter_mut().for_each(apply_ordering);
//! let ms = mean_survival(&samples, &[], 10.0 * data.max_time())?;
//! assert!(ms.stats.mean > 1.0 && ms.stats.mean < 3.0);
//! # Ok::<(), polyhazard::Error>(())
//! ```

pub mod cli;
pub mod engine;
pub mod error;
pub mod jumps;
pub mod model;
pub mod oracle;
pub mod postprocess;
pub mod survdist;
pub mod zigzag;

pub use error::{Error, Result};
