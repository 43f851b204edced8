//! Adversarial network-condition search for congestion control algorithms.
//!
//! The crate is organised bottom-up:
//!
//! * [`tracegen`]: packet traces (link service curves and cross-traffic
//!   schedules), the recursive packet distribution generator, and the
//!   mutation, crossover and annealing operators.
//! * [`sim`]: a deterministic discrete-event dumbbell with a sender, cross
//!   traffic, a drop-tail gateway, a trace-driven or fixed-rate bottleneck
//!   and a sink.
//! * [`tcp`]: sender and receiver machinery (SACK scoreboard, delayed ACKs,
//!   RTO backoff, delivery-rate sampling).
//! * [`cca`]: Reno, CUBIC and BBR behind one hook interface.
//! * [`fuzzer`]: scoring, rank selection, islands and checkpoints.
//! * [`scenarios`]: hand-built traces for known failure modes.

pub mod cca;
pub mod fuzzer;
pub mod rng;
pub mod scenarios;
pub mod sim;
pub mod tcp;
pub mod tracegen;

mod error;

pub use error::{Error, Result};
