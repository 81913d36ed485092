//! Deep-learning toolkit for botnet and intrusion detection on network
//! flow records.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`tensor`]), neural layers ([`layers`]), first-order optimizers
//! ([`optim`]), a tabular data pipeline ([`data`]), classification
//! metrics ([`metrics`]) and model assembly plus a stacked ensemble
//! ([`models`]). All computation is `f64` and every stochastic choice
//! draws from one seeded generator ([`rng::RunRng`]), so runs are
//! reproducible bit for bit.

pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
