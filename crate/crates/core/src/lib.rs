//! Generalized Gaussian (GG) noise mechanisms for differential privacy.
//!
//! The GG family `GG(mu, b, p)` has density proportional to
//! `exp(-(|x - mu| / b)^p)`; `p = 1` is the Laplace distribution and `p = 2`
//! the Gaussian. This crate provides:
//!
//! * [`numerics`]: special functions and seeded, splittable random streams.
//! * [`ggdist`]: density, CDF, interval masses and (truncated) sampling.
//! * [`sensitivity`]: l_p global sensitivity bounds and utility sensitivity.
//! * [`calibration`]: noise-scale lower bounds, closed form and Monte-Carlo.
//! * [`mechanisms`]: sanitization dispatch, post-processing and privacy audits.
//! * [`analysis`]: utility metrics and Laplace-vs-Gaussian comparisons.
//! * [`pipeline`]: histogram ingestion, synthetic data and the experiment harness.

// Negated float comparisons are used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod error;
pub mod ggdist;
pub mod mechanisms;
pub mod numerics;
pub mod pipeline;
pub mod sensitivity;

pub use calibration::{Calibration, CalibrationMethod, McConfig, PrivacyParams};
pub use error::{Error, Result};
pub use ggdist::GGParams;
pub use mechanisms::{MechanismKind, MechanismSpec, SanitizedResult, Sanitizer};
pub use numerics::RngStream;
pub use sensitivity::{SensitivityProfile, UtilitySensitivity};
