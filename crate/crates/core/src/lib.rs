//! Weighted DFT codebook scheme for RIS-assisted point-to-point MIMO.
//!
//! The crate simulates the whole link: Rician channel synthesis from array
//! geometry ([`geometry`]), codebooks and codeword ordering ([`codebook`]),
//! uplink training and stacked-channel estimation ([`training`]), codeword
//! weight optimization ([`weights`]), SVD precoding with water-filling
//! ([`precoding`]), the end-to-end schemes ([`schemes`]) and a seeded
//! Monte Carlo sweep runner ([`experiment`]).

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codebook;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod precoding;
pub mod rng;
pub mod schemes;
pub mod selftest;
pub mod training;
pub mod weights;

pub use error::{Error, Result};
