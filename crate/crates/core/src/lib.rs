//! Learning stabilizable Koopman bilinear models from trajectory data.
//!
//! The pipeline lifts plant states with a neural encoder, identifies a
//! discrete bilinear model of the lifted dynamics by least squares, trains a
//! control Lyapunov function (CLF) for that model, and uses an interval
//! branch-and-bound falsifier to either certify the CLF conditions over the
//! state domain or produce counterexamples that are fed back into training.
//! The certified CLF yields a feedback law through Sontag's universal formula.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::suspicious_arithmetic_impl)]

pub mod cli;
pub mod controller;
pub mod edmd;
pub mod error;
pub mod falsifier;
pub mod formats;
pub mod losses;
pub mod nets;
pub mod numerics;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
