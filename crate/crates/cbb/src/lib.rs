//! Contextual restless bandits with per-context budget allocation.
//!
//! The crate builds and solves the occupancy-measure LP for a contextual
//! bandit instance, runs index policies and Monte Carlo simulations,
//! searches for optimal integer budget allocations (branch-and-bound and a
//! UCB-style tree search), enforces proportional-fairness constraints, and
//! analyzes scaled-population limits via deterministic mean-field dynamics.

pub mod asymptotic;
pub mod experiments;
pub mod generators;
pub mod model;

pub mod lp;
pub mod policies;
pub mod search;
pub mod sim;
pub mod svg;
pub mod whittle;
