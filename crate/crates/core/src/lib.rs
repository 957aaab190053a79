//! Residual temporal convolutional networks for skeleton-based action
//! recognition, built on a small from-scratch numeric core with exact
//! hand-derived gradients.
//!
//! The crate covers the full train / diagnose / refine workflow:
//!
//! - [`restcn`]: the Res-TCN classifier with per-layer activation recording;
//! - [`fmd`]: the feature-map decoder that maps any recorded hidden
//!   representation back to a moving-skeleton sequence;
//! - [`msnet`]: the two-stream MS-Res-TCN with a masked targeted-attention
//!   stream and pipe fusion at every merge layer;
//! - [`dataio`]: NTU RGB+D skeleton parsing, split protocols, preprocessing
//!   and a synthetic fine-motion dataset generator;
//! - [`runner`]: reproducible run directories behind the `restcn` CLI.

pub mod checkpoint;
pub mod dataio;
pub mod error;
pub mod export;
pub mod fmd;
pub mod gradcheck;
pub mod init;
pub mod msnet;
pub mod ops;
pub mod optim;
pub mod render;
pub mod restcn;
pub mod runner;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
