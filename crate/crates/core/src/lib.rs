//! Non-equilibrium quantum Monte Carlo for Renyi entropies of
//! transverse-field Ising systems.
//!
//! The engine samples 2n (or n) replicas of the model with stochastic series
//! expansion, couples them through single-site connection tensors, and drives
//! the coupling fraction lambda from 0 to 1 while recording non-equilibrium
//! work. Jarzynski's equality turns the work ensemble into the free-energy
//! difference between the uncoupled and fully coupled replica partition
//! functions, which is (up to a 1/(1-n) factor) the stabilizer Renyi entropy
//! M_n, the entanglement Renyi entropy S_n, or the participation Renyi
//! entropy H_n depending on the tensor in use.
//!
//! Everything is verified against a dense small-system oracle in
//! [`oracle`], and the command-line tool (`sreqmc`) exposes runs, oracle
//! evaluations and work-statistics reports.

pub mod config;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod noneq;
pub mod oracle;
pub mod runner;
pub mod seeding;
pub mod sse;
pub mod tensors;

pub use error::{Error, Result};
pub use lattice::{build_lattice, Boundary, LatticeGeometry, ModelParams, RunMode};
pub use tensors::{ConnectionSet, ConnectionTensorKind, LogWeight, SlicePattern};
