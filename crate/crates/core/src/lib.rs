//! Regime-switching dividend solver.
//!
//! An insurer's surplus diffuses with a drift chosen by a hidden Markov
//! chain; management pays dividends at a bounded rate and wants to maximize
//! the expected discounted payout until ruin. Because the chain is hidden,
//! the usable state is the pair (surplus, conditional drift estimate), and
//! the optimal strategy turns out to be a threshold rule in that plane.
//!
//! The crate provides the four layers needed to compute and check such
//! strategies:
//!
//! - [`model`]: parameter sets, validation, and the simplex/drift-estimate
//!   state algebra.
//! - [`filter`]: exact hidden-chain simulation, observation synthesis, and
//!   the stochastic filter recursion for the conditional probabilities.
//! - [`hjb`]: monotone finite-difference discretization of the dynamic
//!   programming equation in the (surplus, drift-estimate) plane, solved by
//!   policy iteration, with threshold extraction and a vanishing-viscosity
//!   refinement study.
//! - [`benchmark`]: closed-form single-regime solutions, the observable
//!   (zero-generator) reduction, and payout-cap sweeps, used to seed and
//!   cross-check the PDE solver.
//! - [`montecarlo`]: forward simulation of controlled surplus paths under a
//!   threshold strategy, with discounted-payout and ruin statistics.
//! - [`io`]: deterministic CSV/JSON artifact writers shared by the CLI.

pub mod benchmark;
pub mod filter;
pub mod hjb;
pub mod io;
pub mod model;
pub mod montecarlo;
