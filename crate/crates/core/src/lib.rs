//! Clustered federated learning with a blockchain-backed incentive economy.
//!
//! The pipeline trains small per-client models, groups them by the Pearson
//! similarity of their probe prototypes, averages models within each cluster,
//! and settles rewards on a simulated hash chain where cluster representatives
//! take turns producing blocks.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all IO, file formats,
//! and the experiment CLI live in the companion `bfln-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ccca;
pub mod data;
pub mod domain;
pub mod error;
pub mod ledger;
pub mod linalg;
pub mod paa;
pub mod rng;
pub mod sim;
pub mod trainer;

pub use error::Error;
