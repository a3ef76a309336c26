//! Sampling networks that encode few-qubit quantum states.
//!
//! A quantum state is mapped to the outcome distribution of a tetrahedral
//! POVM ([`quantum`]), each qubit's four outcomes are carried by a pair of
//! binary visible units ([`topology`]), and a Boltzmann-type network is
//! trained ([`trainer`]) so that one of the sampling backends in
//! [`samplers`] reproduces that distribution. [`benchmark`] compares
//! software Gibbs throughput against a fixed-rate neuromorphic sampler.

pub mod benchmark;
pub mod error;
pub mod quantum;
pub mod rng;
pub mod samplers;
pub mod topology;
pub mod trainer;

pub use error::{Error, Result};
