//! Stochastic AC security-constrained transmission expansion planning with a
//! cooperative-game valuation of investment options.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod formulation;
pub mod game;
pub mod linalg;
pub mod solver;
pub mod network;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
