//! Replay-buffer sampling processes on finite Markov models.
//!
//! This crate studies what happens to a stationary stochastic process when it
//! is routed through a fixed-capacity FIFO replay buffer and read back out
//! through uniform mini-batch averages, and what that machinery does to
//! running-mean estimation and to a linear average-reward actor-critic.
//!
//! * [`markov`] — finite Markov chains and decision processes (including the
//!   block-structured reward chain used throughout the experiment suite),
//!   stationary analysis, spectral gap, and seeded path sampling.
//! * [`replay`] — the FIFO buffer with newest-first positions, uniform
//!   without-replacement batch sampling, and batch averaging.
//! * [`moments`] — the triangular time-difference kernel of buffer batch
//!   sampling, an exact enumeration oracle for it, second-moment transfer
//!   predictions, and empirical autocovariance estimators.
//! * [`estimators`] — online and replay-buffer running-mean estimators with
//!   across-seed variance curves and smoothness diagnostics.
//! * [`actor_critic`] — a linear average-reward actor-critic driven from
//!   replay-buffer batches, with closed-form expected updates, the critic
//!   fixed point, and Monte-Carlo / finite-difference identity checks.
//!
//! Every randomized operation takes an explicit seed and is reproducible
//! bit-for-bit across runs and thread counts; see [`seed`] for how
//! independent streams are derived.

pub mod actor_critic;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod linalg;
pub mod markov;
pub mod moments;
pub mod replay;
pub mod seed;

pub use error::{Error, Result};
