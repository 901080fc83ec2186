//! Scalar-bid divisible-good auctions with worst-case-optimal linear rebates.
//!
//! One divisible good is split among n agents who each submit a single
//! scalar bid. Bids scale an announced concave utility curve, the good is
//! allocated by maximizing the resulting surrogate welfare, and pivotal
//! payments are charged. The collected surplus is then partially returned
//! through linear rebates whose coefficients come from a sampled linear
//! program minimizing the worst-case retained-surplus-to-welfare ratio,
//! subject to no-subsidy and voluntary-participation constraints.
//!
//! Module map:
//! - [`surrogate`]: the announced utility curve and its marginal.
//! - [`allocation`]: bid profiles and welfare-optimal allocations.
//! - [`mechanism`]: welfare, pivotal surplus, payments, rebates, worst case.
//! - [`rebate_design`]: the sampled program and its simplex solver.
//! - [`sampling`]: sample generators, sample-count and closeness constants.
//! - [`equilibrium`]: Nash bids from true valuations, best-response checks.
//! - [`oracles`]: closed-form verification layer.
//! - [`checks`]: the invariant suite behind `ssvcg check`.

pub mod allocation;
pub mod checks;
pub mod equilibrium;
mod error;
pub mod mechanism;
pub mod oracles;
pub mod par;
pub mod rebate_design;
pub mod sampling;
pub mod surrogate;

pub use error::{Error, Result};
