//! Experiments on when locality matters: hierarchical image scrambling,
//! parameter-matched convolutional and fully connected networks trained with
//! a small reverse-mode engine, and a masked Toeplitz network that tracks
//! whether SGD prunes nonlocal connections.

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod models;
pub mod nonlocal;
pub mod runner;
pub mod scramble;

pub use error::{Error, Result};
