//! AoI-aware scheduling of multi-camera image streams for real-time scene
//! reconstruction.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] – Markov-modulated bufferless channel and CTMC transition math.
//! * [`streaming`] – slot-driven camera/channel simulation and AoI bookkeeping.
//! * [`scene`] – synthetic dynamic scene and the reconstruction backends.
//! * [`metrics`] – PSNR, SSIM, perceptual distance and the weighted objective.
//! * [`policies`] – ω-threshold, ω-wait and embedding-score selection.
//! * [`rl`] – contextual-bandit PPO over the choice of ω.
//! * [`harness`] – configuration, sweeps, training and result emission.

pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod policies;
pub mod rl;
pub mod scene;
pub mod seed;
pub mod streaming;

pub use error::{Error, Result};
