//! QKD classical post-processing that survives corrupted modules and
//! post-processing units, built on replicated verifiable secret sharing.
//!
//! The crate is layered bottom-up:
//!
//! - [`gf2`]: bit strings, GF(2) matrices, Toeplitz hashing.
//! - [`adversary`]: threshold and general (Σ, Ω) adversary structures.
//! - [`simnet`]: deterministic round-based network with a corruption controller.
//! - [`vss`]: XOR sharing, verifiable sharing, common random strings.
//! - [`qkdsim`]: correlated raw-key source and malicious module behaviors.
//! - [`distproc`]: sifting, estimation, Cascade, verification, amplification.
//! - [`protocols`]: end-to-end drivers.
//! - [`audit`]: transcript checks.

pub mod adversary;
pub mod audit;
pub mod distproc;
pub mod error;
pub mod gf2;
pub mod protocols;
pub mod qkdsim;
pub mod simnet;
pub mod vss;

pub use error::{Error, Result};
