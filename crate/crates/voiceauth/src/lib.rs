//! Continuous voice authentication engine.
//!
//! Trains ergodic HMM/GMM speaker models on short sliding-window tokens so
//! that the training statistics match the very short test windows used at
//! runtime, then emits a real-time stream of per-window accept/reject
//! log-likelihood-ratio scores. The crate covers the whole workflow:
//!
//! - [`frontend`]: WAV decoding, 39-dim MFCC extraction, window CMS, energy VAD
//! - [`hmm`]: ergodic HMM/GMM, K-means init, forward-backward, short-time
//!   Baum-Welch, growing-trellis sliding Viterbi
//! - [`adapt`]: MAP adaptation of the speaker-independent model
//! - [`mve`]: cohort selection and minimum-verification-error (GPD) training
//! - [`stream`]: sequential testing with VAD-modulated decisions
//! - [`eval`]: window-based error metrics (WMDE/WFAE/WEER), majority vote,
//!   K-fold splits, synthetic corpus generation
//! - [`cli`]: manifests, run configuration, and the command-line workflows

pub mod adapt;
pub mod cli;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod hmm;
pub mod mve;
pub mod pipeline;
pub mod stream;

pub use error::{Error, Result};
