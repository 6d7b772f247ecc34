//! Density evolution and load-threshold search.
//!
//! The recovery process is peeling decoding on a bipartite graph, so its
//! asymptotic behaviour is tracked by the erasure recursion
//!
//! ```text
//! p_l = 1 - rho(1 - q_l),    q_l = lambda(p_{l-1}),    q_0 = p_0 = 1
//! ```
//!
//! Recovery succeeds (q_l -> 0) exactly when
//! `q > lambda(1 - exp(-eta * Lambda'(1) * q))` for all `q` in `(0, 1]`;
//! the load threshold is the largest `eta` for which that holds. The
//! condition is checked on a uniform grid plus an exact stability check
//! `lambda_2 * eta * Lambda'(1) < 1` covering the `q -> 0` limit, and the
//! threshold is found by bisection.

use serde::Serialize;
use thiserror::Error;

use crate::degree::{CellDistribution, DegreeDistribution, EdgeDistribution};

/// Grid resolution used when none is given.
pub const DEFAULT_GRID_POINTS: u32 = 10_000;
/// Convergence tolerance used when none is given.
pub const DEFAULT_CONVERGENCE_EPS: f64 = 1e-12;
/// Iteration cap used when none is given.
pub const DEFAULT_MAX_ITERS: u32 = 100_000;
/// Bisection tolerance used when none is given.
pub const DEFAULT_BISECTION_TOL: f64 = 1e-4;

/// Initial upper end of the bisection bracket; `eta* <= 1` for every
/// distribution in scope, so this is already generous.
const BRACKET_HI: f64 = 1.2;
/// The bracket is doubled on demand up to here before giving up.
const BRACKET_LIMIT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("check_success holds at eta = {eta}, beyond the search window of {BRACKET_LIMIT}")]
    BracketFailure { eta: f64 },
    #[error("distribution has degree-1 mass; the load threshold is undefined")]
    DegreeOneUnsupported,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Inputs to [`de_converge`] and [`check_success`].
#[derive(Debug, Clone)]
pub struct DEParams {
    pub dist: DegreeDistribution,
    pub eta: f64,
    pub max_iters: u32,
    pub convergence_eps: f64,
    pub grid_points: u32,
}

impl DEParams {
    pub fn new(dist: DegreeDistribution, eta: f64) -> Result<Self, DensityError> {
        Self::with_options(
            dist,
            eta,
            DEFAULT_MAX_ITERS,
            DEFAULT_CONVERGENCE_EPS,
            DEFAULT_GRID_POINTS,
        )
    }

    pub fn with_options(
        dist: DegreeDistribution,
        eta: f64,
        max_iters: u32,
        convergence_eps: f64,
        grid_points: u32,
    ) -> Result<Self, DensityError> {
        if eta.is_nan() || eta <= 0.0 {
            return Err(DensityError::InvalidParams(format!(
                "load must be positive, got {eta}"
            )));
        }
        if max_iters < 1 {
            return Err(DensityError::InvalidParams(
                "max_iters must be at least 1".into(),
            ));
        }
        if convergence_eps.is_nan() || convergence_eps <= 0.0 {
            return Err(DensityError::InvalidParams(
                "convergence_eps must be positive".into(),
            ));
        }
        if grid_points < 2 {
            return Err(DensityError::InvalidParams(
                "grid_points must be at least 2".into(),
            ));
        }
        Ok(Self {
            dist,
            eta,
            max_iters,
            convergence_eps,
            grid_points,
        })
    }
}

/// Erasure-probability trajectory of one density-evolution run.
#[derive(Debug, Clone, Serialize)]
pub struct DETrace {
    /// Data-to-cell erasure probabilities, starting at `q_0 = 1`.
    pub q_sequence: Vec<f64>,
    /// Cell-to-data erasure probabilities, starting at `p_0 = 1`.
    pub p_sequence: Vec<f64>,
    pub converged_to_zero: bool,
    pub iterations_used: u32,
}

/// Result of the bisection search for the load threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub eta_star: f64,
    /// `(largest load known to succeed, smallest load known to fail)`.
    pub bracket: (f64, f64),
    pub bisection_steps: u32,
    pub tolerance: f64,
}

/// One round of the recursion: `p = 1 - rho(1 - q_prev)`, then `q = lambda(p)`.
pub fn de_step(edist: &EdgeDistribution, rho: &CellDistribution, q_prev: f64) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&q_prev));
    let p = 1.0 - rho.rho(1.0 - q_prev);
    let q = edist.eval_unchecked(p.clamp(0.0, 1.0));
    (p, q)
}

/// Iterates [`de_step`] from `q_0 = 1` until the update falls below
/// `convergence_eps` or the iteration cap is reached.
pub fn de_converge(params: &DEParams) -> DETrace {
    let edist = params.dist.to_edge_perspective();
    let rho = params
        .dist
        .asymptotic_rho(params.eta)
        .expect("DEParams guarantees a positive load");

    let mut q_sequence = vec![1.0];
    let mut p_sequence = vec![1.0];
    let mut q_prev = 1.0;
    let mut iterations_used = 0;
    for _ in 0..params.max_iters {
        let (p, q) = de_step(&edist, &rho, q_prev);
        p_sequence.push(p);
        q_sequence.push(q);
        iterations_used += 1;
        let done = (q - q_prev).abs() < params.convergence_eps;
        q_prev = q;
        if done {
            break;
        }
    }
    DETrace {
        converged_to_zero: q_prev < params.convergence_eps,
        iterations_used,
        q_sequence,
        p_sequence,
    }
}

/// Checks the threshold condition `q > lambda(1 - exp(-eta Lambda'(1) q))`
/// at every grid point `q = k / grid_points`, `k = 1..=grid_points`, plus
/// the exact `q -> 0` limits: `lambda(0) = 0` (no degree-1 data nodes) and
/// the stability condition `lambda_2 * eta * Lambda'(1) < 1`.
pub fn check_success(dist: &DegreeDistribution, eta: f64, grid_points: u32) -> bool {
    assert!(eta > 0.0, "load must be positive");
    assert!(grid_points >= 2, "grid must have at least two points");
    let edist = dist.to_edge_perspective();
    let a = eta * dist.avg_degree();
    if edist.coeff(1) > 0.0 {
        return false;
    }
    if edist.coeff(2) * a >= 1.0 {
        return false;
    }
    let grid = grid_points as f64;
    for k in 1..=grid_points {
        let q = k as f64 / grid;
        let arg = -(-a * q).exp_m1();
        if q <= edist.eval_unchecked(arg) {
            return false;
        }
    }
    true
}

/// Bisection search for the largest load satisfying [`check_success`],
/// at the default grid resolution.
///
/// # Examples
/// ```
/// use iblt::degree::DegreeDistribution;
/// use iblt::density::find_threshold;
///
/// let x3 = DegreeDistribution::regular(3).unwrap();
/// let report = find_threshold(&x3, 1e-4).unwrap();
/// assert!((report.eta_star - 0.8185).abs() < 1e-3);
/// ```
pub fn find_threshold(
    dist: &DegreeDistribution,
    tolerance: f64,
) -> Result<ThresholdReport, DensityError> {
    find_threshold_with_grid(dist, tolerance, DEFAULT_GRID_POINTS)
}

/// Bisection search with an explicit grid resolution.
pub fn find_threshold_with_grid(
    dist: &DegreeDistribution,
    tolerance: f64,
    grid_points: u32,
) -> Result<ThresholdReport, DensityError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(DensityError::InvalidParams(
            "tolerance must be positive".into(),
        ));
    }
    if dist.min_degree() < 2 {
        return Err(DensityError::DegreeOneUnsupported);
    }

    let mut lo = 0.0; // an empty table always recovers
    let mut hi = BRACKET_HI;
    while check_success(dist, hi, grid_points) {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(DensityError::BracketFailure { eta: lo });
        }
    }

    let mut bisection_steps = 0;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if check_success(dist, mid, grid_points) {
            lo = mid;
        } else {
            hi = mid;
        }
        bisection_steps += 1;
    }
    Ok(ThresholdReport {
        eta_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        bisection_steps,
        tolerance,
    })
}
