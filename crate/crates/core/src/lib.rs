//! Two-colony branching particle system with one-way migration, the
//! distribution-function SPDE system it converges to, and Monte Carlo
//! diagnostics for the associated martingale problem.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod io;
pub mod measures;
pub mod migration;
pub mod orchestrate;
pub mod particle;
pub mod record;
pub mod rng;
pub mod spde;
