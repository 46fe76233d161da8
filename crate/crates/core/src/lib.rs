//! Constrained dual unrolling: primal and dual unrolled graph networks
//! trained to track the saddle point of a Lagrangian, with the problem
//! families, training loops, classical baselines, and evaluation they use.
//!
//! Everything here is `no_std` + `alloc`; files, CLI and plots live in the
//! `cdu` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod eval;
pub mod linalg;
pub mod miqp;
pub mod nets;
pub mod optim;
pub mod power;
pub mod problem;
pub mod rng;
pub mod tape;
pub mod training;
pub mod trajectory;

pub use problem::{
    ConstrainedProblem, Family, Multipliers, PrimalPoint, ProblemError, ProblemInstance, Violation,
};
