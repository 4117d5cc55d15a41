//! Toolkit for single-channel separation of co-channel OFDM mixtures.
//!
//! The crate synthesizes real-valued periodic OFDM sources and their
//! mixtures ([`mixture`]), separates them with a model-based
//! FFT/superconstellation oracle ([`oracle`]), persists reproducible datasets
//! in a fixed-stride binary format ([`dataset`]) and measures the marginal
//! kurtosis of windowed DFT coefficients ([`kurtosis`]).
//!
//! All arithmetic is `f64`. Randomness comes from per-record ChaCha20 streams
//! ([`rng`]), so every record is a pure function of `(case, seed, index)`.

pub mod dataset;
mod error;
pub mod kurtosis;
pub mod mixture;
pub mod ofdm;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
