//! Robust subband adaptive filtering.
//!
//! The crate implements the GR-SAF family of subband adaptive filters, which
//! gate each subband update with a robust scaling factor `q(e) ∈ [0, 1]` and
//! pick the gain that minimizes the mean-square deviation under a random-walk
//! model of the unknown system. Around the filters sit the pieces needed to
//! run realistic experiments:
//!
//! - [`filterbank`]: cosine-modulated analysis banks and critically sampled
//!   subband decomposition.
//! - [`signals`]: AR(1)/white/speech-like inputs, contaminated-Gaussian and
//!   symmetric α-stable noise, PCM and text readers.
//! - [`robustness`]: modified-Huber and correntropy scaling rules with the
//!   median-window threshold tracker.
//! - [`adaptive`]: NSAF / M-NSAF and GR-SAF engines, plus the scalar
//!   variable-regularization form of GR-SAF.
//! - [`echo`]: the delayless echo-cancellation loop, Geigel double-talk
//!   detector and ERLE tracker.
//! - [`bench`]: experiment configuration, Monte-Carlo runner and CSV output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod bench;
pub mod echo;
pub mod error;
pub mod filterbank;
pub mod robustness;
pub mod signals;

pub use error::{Error, Result};
