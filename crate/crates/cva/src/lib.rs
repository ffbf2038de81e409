//! Confidence estimation for dense stereo matching.
//!
//! The crate implements a full pipeline around 3D cost volumes:
//!
//! * [`matching`] — census transform, Hamming block matching, semi-global
//!   aggregation, winner-take-all disparities;
//! * [`volume`] — cost-volume normalization, patch extraction and the
//!   `CVAV` binary format;
//! * [`net`] — a from-scratch 3D convolutional network over cost-volume
//!   patches, with backpropagation and fully-convolutional whole-image
//!   inference;
//! * [`train`] — ground-truth labeling and the Adam training loop;
//! * [`eval`] — ROC curves over confidence-ordered pixels with
//!   interval-extended tied blocks, AUC, and the closed-form optimal AUC;
//! * [`synth`] — deterministic synthetic stereo scenes and cost-curve
//!   fixtures;
//! * [`cli`] — the `cva` command-line tool built from the above.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability.

pub mod cli;
pub mod error;
pub mod eval;
pub mod image;
pub mod matching;
pub mod net;
pub mod synth;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
