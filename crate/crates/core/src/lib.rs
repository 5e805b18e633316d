//! Numerical core for self-supervised signature representation learning.
//!
//! Everything in this crate is a pure function of its inputs and explicit
//! seeds: image preprocessing, the overlapping patch grid, the patch encoder
//! with hand-written backpropagation, the decorrelation objective, LARS and
//! the learning-rate schedule, and the downstream SVM / metrics / t-SNE
//! machinery. File formats, the CLI and dataset discovery live in the `swis`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;

pub mod encoder;
pub mod image;
pub mod matrix;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod schedule;
pub mod svm;
pub mod synth;
pub mod train;
pub mod tsne;
pub mod verify;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use matrix::Matrix;
pub use rng::Lcg64;
