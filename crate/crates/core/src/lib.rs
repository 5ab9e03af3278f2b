//! Multi-block variance-reduced estimators and solvers for finite-sum
//! coupled compositional optimization,
//!
//! ```text
//! min_w F(w) = (1/m) sum_i f_i(g_i(w)),
//! ```
//!
//! where each inner map `g_i` is only reachable through a stochastic oracle
//! and a step may probe just a few blocks.
//!
//! The crate is `no_std` and needs only `alloc`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod grad;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod solver;
pub mod tracker;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{frob_sq, vec_axpy, BlockMatrix, InnerTracker, Jacobian, ParamVector};
pub use problem::{make_problem, FccoProblem, ProblemConfig, ProblemConstants, Support};
pub use rng::RngStream;
pub use sampling::{sample_blocks, BlockSample, InnerBatch};
pub use solver::{Method, RunOutput, Solver, SolverConfig, TraceRecord};
