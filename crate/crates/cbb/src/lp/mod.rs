//! Linear programming: a dense two-phase simplex plus construction of the
//! occupancy-measure LP and its fixed-budget, region-bounded, and
//! fairness-constrained variants.

pub mod occupancy;
pub mod simplex;

pub use occupancy::*;
pub use simplex::*;
