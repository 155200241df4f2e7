//! Allocation-only core of the OTDR reflective event toolkit.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm:
//! trace synthesis and SNR estimation ([`trace_sim`]), window extraction and
//! target encoding ([`dataset`]), a from-scratch multi-task LSTM with
//! backpropagation through time ([`nn`]), the classical detectors
//! ([`baselines`]) and metrics plus study runners ([`eval`]).
//!
//! File formats, configuration and the command line live in the `otdr` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod math;
pub mod nn;
pub mod rng;
pub mod trace_sim;

pub use error::{Error, Result};
