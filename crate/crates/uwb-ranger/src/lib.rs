//! UWB ranging estimators with soft NLOS identification and error mitigation.
//!
//! Ultra-wideband time-of-arrival ranging degrades badly when the direct path
//! is blocked: the first detectable path arrives late and the range estimate
//! is positively biased. This crate implements a family of estimators that
//! deal with that, all operating on channel parameters extracted from a
//! measured power delay profile:
//!
//! - **TOA-only** — `d = c * toa`, the naive baseline.
//! - **TOA with mitigation** — a soft LOS/NLOS decision from the rise time,
//!   mixing a bias-corrected LOS branch with a polynomial NLOS correction
//!   ([`estimators::MitigationModel`]).
//! - **GPR** — Gaussian process regression from standardized channel
//!   parameters straight to range ([`gpr`]).
//! - **kPCA** — kernel principal component analysis with per-component
//!   linear read-outs, combined into a precision-weighted range estimate
//!   ([`kpca`]).
//! - **kPCA+ / kPCA+GPR** — hybrids that classify LOS vs NLOS from the
//!   leading kernel principal components and fall back to a kPCA or GPR
//!   ranger trained on NLOS samples only ([`estimators::HybridModel`]).
//!
//! The crate also ships a seeded synthetic channel generator ([`sim`]) so the
//! whole pipeline — dataset, training, evaluation, parameter sweeps — runs
//! without measurement hardware, and an evaluation harness ([`eval`]) that
//! produces RMSE, error percentiles and error CDFs per method.
//!
//! Start with the runnable programs in `examples/`; the `uwb-ranger` binary
//! exposes the same pipeline as subcommands (`simulate`, `extract`, `train`,
//! `evaluate`, `sweep`).

pub mod cli;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod features;
pub mod gpr;
pub mod io;
pub mod kernels;
pub mod kpca;
pub mod metrics;
pub mod nlos;
pub mod pdp;
pub mod sim;

pub use error::{Error, Result};

/// Speed of light in m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
