//! Unsupervised domain adaptation for binary image classification.
//!
//! A cycle-consistent GAN learns to translate unlabeled images between two
//! domains; labeled source images translated into the target style are mixed
//! with the originals to train a classifier that transfers to the target
//! domain. The crate also ships the synthetic two-domain benchmark, auROC
//! metrics with confidence intervals and the experiment runner that compares
//! the adapted classifiers against a no-adaptation baseline.

pub mod autodiff;
pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod networks;
pub mod params;
pub mod seed;
pub mod store;
pub mod tensor;
pub mod translator;

pub use error::{Error, Result};
