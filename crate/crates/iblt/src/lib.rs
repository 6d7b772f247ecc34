//! Irregular invertible Bloom lookup tables.
//!
//! An IBLT stores key-value pairs in `m` cells, each holding a signed count
//! and XOR accumulators for keys and values. Every pair is written to `d`
//! cells, where `d` is drawn from a configurable degree distribution; regular
//! tables use a constant `d`, irregular ones do not. As long as the load
//! `eta = n/m` stays below a distribution-dependent threshold, the full
//! contents can be listed back out by peeling degree-1 cells.
//!
//! The crate provides:
//!
//! - [`degree`]: degree distributions and the cell-side distributions they
//!   induce,
//! - [`density`]: the density-evolution recursion and load-threshold search,
//! - [`table`]: the data structure itself (insert, delete, peeling recovery,
//!   binary serialization),
//! - [`reconcile`]: table subtraction and symmetric-difference recovery,
//! - [`sim`]: Monte Carlo estimation of finite-length failure probability,
//! - [`anneal`]: simulated-annealing search for high-threshold distributions.

pub mod anneal;
pub mod degree;
pub mod density;
pub mod hashing;
pub mod reconcile;
pub mod sim;
pub mod table;

pub use degree::{CellDistribution, DegreeDistribution, DistError, EdgeDistribution};
pub use density::{
    check_success, de_converge, de_step, find_threshold, DEParams, DETrace, DensityError,
    ThresholdReport,
};
pub use table::{Iblt, KeyValuePair, RecoveryOutcome, TableError};
