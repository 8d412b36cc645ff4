//! Core of a variational stance detector that disentangles valence, arousal
//! and dominance from topic content in a latent space.
//!
//! Everything here is `no_std` + `alloc`: data types, a reverse-mode autodiff
//! tape, the network, losses, the training loop and metrics. File formats,
//! network IO and the command line live in the `polistance` crate.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod latent;
pub mod lexicon;
pub mod model;
pub mod network;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
