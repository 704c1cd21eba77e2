//! Channel estimation and tracking for RIS-assisted multi-user MIMO uplinks.
//!
//! The received pilots of one slot form an `N_r x S x L` tensor with a
//! PARAFAC structure whose third factor (the RIS phase profiles) is known.
//! This crate synthesizes such tensors from geometric channels, estimates
//! the factors by bilinear ALS, tracks the user-side factor slot by slot
//! with an exponentially weighted RLS recursion, and recovers the sparse
//! user channels with GAMP in the angular domain.

pub mod bals;
pub mod channel;
pub mod error;
pub mod gamp;
pub mod harness;
pub mod linalg;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector};
pub use tensor::SlotTensor;
