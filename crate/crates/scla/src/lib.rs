//! Congestion-aware planning of EV charging infrastructure for last-mile
//! delivery fleets: which stations to open, how many chargers of each type
//! to install, and how household charging demand is allocated.
//!
//! The problem is a stochastic charger location-and-allocation (SCLA) model:
//! every station–charger pair runs an M/M/s queue, waiting time enters the
//! objective alongside opening, installation, and detour costs, and budgets
//! cap the build-out. The solver relaxes the coupling constraints with
//! Lagrange multipliers so the model splits into independent station-level
//! subproblems, solves those exactly by configuration enumeration plus
//! cutting planes on the convex waiting-time transform, updates multipliers
//! by an adaptive subgradient rule, and rounds fractional allocations into
//! feasible plans. An exhaustive oracle provides ground truth at desk scale.
//!
//! Module map:
//! - [`queueing`]: Erlang-C waiting times, the convex transform and its
//!   supporting hyperplanes, M/G/s and GI/G/s variants.
//! - [`instance`]: the data model, synthetic scenario generation,
//!   neighborhoods, travel and detour times, JSON (de)serialization.
//! - [`lp`]: a small dense bounded-variable simplex solver.
//! - [`subproblem`]: exact station-level Lagrangian subproblem solver.
//! - [`lagrangian`]: the dual controller (multipliers, subgradients, loop).
//! - [`rounding`]: the primal feasibility heuristic and solution evaluation.
//! - [`parallel`]: multipartition master–worker scheduling of subproblems.
//! - [`oracle`]: exhaustive exact solver for tiny instances.
//! - [`cli`]: the `scla` command-line front end.

pub mod cli;
pub mod instance;
pub mod lagrangian;
pub mod lp;
pub mod oracle;
pub mod parallel;
pub mod queueing;
pub mod rounding;
pub mod subproblem;

#[cfg(doctest)]
mod book;
