//! Lyapunov-based online learning for distributed target tracking.
//!
//! The crate is split along the data flow of a simulation run:
//!
//! - [`graph`]: communication topologies, Laplacian / interaction matrices and
//!   their spectral bounds.
//! - [`nets`]: message-passing GNN, attention GAT and feedforward DNN forward
//!   passes with analytic weight Jacobians (and a finite-difference oracle).
//! - [`control`]: tracking errors, distributed observer and controller,
//!   projection-based weight update laws, sufficient-gain certification.
//! - [`sim`]: target/agent dynamics and the RK4 closed-loop integrator.
//! - [`harness`]: RMS metrics, the topology × architecture experiment matrix
//!   and the command-line front end.

pub mod control;
pub mod error;
pub mod graph;
pub mod harness;
pub mod nets;
pub mod sim;

pub use error::{Error, Result};
