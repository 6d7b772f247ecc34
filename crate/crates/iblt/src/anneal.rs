//! Simulated-annealing search for degree distributions that maximize the
//! load threshold.
//!
//! The state is a distribution over a fixed set of allowed degrees (all at
//! least 2), with an upper bound on the degree-2 mass since that mass
//! drives finite-length error floors. Moves transfer probability between
//! support degrees, or occasionally add or drop a degree; the objective is
//! the density-evolution threshold, and acceptance follows the Metropolis
//! rule under a geometric cooling schedule.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::degree::{DegreeDistribution, DistError};
use crate::density::{find_threshold, DensityError};

/// Bisection tolerance for the final re-evaluation of the best candidate.
pub const FINAL_THRESHOLD_TOL: f64 = 1e-4;

/// Retry budget for constraint-violating moves.
const MOVE_RETRIES: usize = 100;

/// Probability split of the move kinds: transfer / add-degree / remove-degree.
const P_TRANSFER: f64 = 0.8;
const P_ADD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnealError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no constraint-satisfying move found in {MOVE_RETRIES} attempts")]
    MoveFailure,
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Search configuration. Defaults follow the temperature scale of the
/// objective: threshold differences between neighboring distributions are
/// of order 1e-2.
#[derive(Debug, Clone)]
pub struct AnnealConfig {
    /// Degrees the search may use; all must be at least 2.
    pub allowed_degrees: BTreeSet<u32>,
    /// Upper bound on the node-perspective degree-2 mass.
    pub max_lambda2: f64,
    pub init: DegreeDistribution,
    pub steps: u32,
    pub temp_initial: f64,
    pub temp_final: f64,
    pub move_scale: f64,
    pub rng_seed: u64,
    /// Bisection tolerance used for threshold evaluation during the search.
    pub threshold_tol: f64,
}

/// A visited distribution together with its evaluated threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub dist: DegreeDistribution,
    pub threshold: f64,
}

impl AnnealConfig {
    /// Builds a configuration with the default schedule and a feasible
    /// initial distribution: the degree-2 mass is capped, the remainder is
    /// split evenly across the other allowed degrees.
    pub fn new(
        allowed_degrees: BTreeSet<u32>,
        max_lambda2: f64,
        rng_seed: u64,
    ) -> Result<Self, AnnealError> {
        let init = Self::default_init(&allowed_degrees, max_lambda2)?;
        let config = Self {
            allowed_degrees,
            max_lambda2,
            init,
            steps: 5000,
            temp_initial: 0.02,
            temp_final: 1e-4,
            move_scale: 0.1,
            rng_seed,
            threshold_tol: 1e-3,
        };
        config.validate()?;
        Ok(config)
    }

    fn default_init(
        allowed: &BTreeSet<u32>,
        max_lambda2: f64,
    ) -> Result<DegreeDistribution, AnnealError> {
        if allowed.is_empty() {
            return Err(AnnealError::InvalidConfig("no allowed degrees".into()));
        }
        let others: Vec<u32> = allowed.iter().copied().filter(|&d| d != 2).collect();
        let mut entries = Vec::new();
        if allowed.contains(&2) {
            let p2 = if others.is_empty() {
                1.0
            } else {
                max_lambda2.min(1.0 / allowed.len() as f64)
            };
            if p2 > 0.0 {
                entries.push((2, p2));
            }
        }
        let used: f64 = entries.iter().map(|&(_, p)| p).sum();
        if !others.is_empty() {
            let share = (1.0 - used) / others.len() as f64;
            for d in others {
                entries.push((d, share));
            }
        } else if (used - 1.0).abs() > 1e-12 {
            return Err(AnnealError::InvalidConfig(
                "degree set {2} requires max_lambda2 >= 1".into(),
            ));
        }
        Ok(DegreeDistribution::validate(&entries)?)
    }

    pub fn validate(&self) -> Result<(), AnnealError> {
        if self.allowed_degrees.iter().any(|&d| d < 2) {
            return Err(AnnealError::InvalidConfig(
                "allowed degrees must be >= 2".into(),
            ));
        }
        if self.allowed_degrees.is_empty() {
            return Err(AnnealError::InvalidConfig("no allowed degrees".into()));
        }
        if !(0.0..=1.0).contains(&self.max_lambda2) {
            return Err(AnnealError::InvalidConfig(
                "max_lambda2 must be in [0, 1]".into(),
            ));
        }
        if !(self.temp_initial > self.temp_final && self.temp_final > 0.0) {
            return Err(AnnealError::InvalidConfig(
                "temperatures must satisfy temp_initial > temp_final > 0".into(),
            ));
        }
        if self.move_scale < 0.0 {
            return Err(AnnealError::InvalidConfig(
                "move_scale must be non-negative".into(),
            ));
        }
        if self.threshold_tol.is_nan() || self.threshold_tol <= 0.0 {
            return Err(AnnealError::InvalidConfig(
                "threshold_tol must be positive".into(),
            ));
        }
        if !self.satisfies(&self.init) {
            return Err(AnnealError::InvalidConfig(
                "initial distribution violates the constraints".into(),
            ));
        }
        Ok(())
    }

    /// Constraint check: support inside the allowed set, degree-2 mass
    /// within the cap.
    pub fn satisfies(&self, dist: &DegreeDistribution) -> bool {
        dist.entries()
            .iter()
            .all(|&(d, _)| self.allowed_degrees.contains(&d))
            && dist.prob(2) <= self.max_lambda2 + 1e-12
    }

    /// Proposes a neighboring distribution: move a mass of
    /// `Uniform(0, move_scale * T / T0)` between two support degrees, or
    /// with small probability add or remove a support degree. Retries until
    /// the constraints hold; if no structural move is available the input
    /// is returned unchanged.
    pub fn perturb(
        &self,
        c: &Candidate,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<DegreeDistribution, AnnealError> {
        if self.move_scale == 0.0 {
            return Ok(c.dist.clone());
        }
        let delta_max = self.move_scale * temperature / self.temp_initial;
        for _ in 0..MOVE_RETRIES {
            let entries = c.dist.entries().to_vec();
            let support: Vec<u32> = entries.iter().map(|&(d, _)| d).collect();
            let absent: Vec<u32> = self
                .allowed_degrees
                .iter()
                .copied()
                .filter(|d| !support.contains(d))
                .collect();
            let delta = rng.gen::<f64>() * delta_max;
            let roll = rng.gen::<f64>();

            let mut next = entries.clone();
            if roll < P_TRANSFER || (absent.is_empty() && support.len() < 2) {
                if support.len() < 2 {
                    return Ok(c.dist.clone()); // nothing to move, identity
                }
                let from = rng.gen_range(0..next.len());
                let mut to = rng.gen_range(0..next.len() - 1);
                if to >= from {
                    to += 1;
                }
                let amount = delta.min(next[from].1);
                next[from].1 -= amount;
                next[to].1 += amount;
            } else if (roll < P_TRANSFER + P_ADD && !absent.is_empty()) || support.len() < 2 {
                let degree = absent[rng.gen_range(0..absent.len())];
                let from = rng.gen_range(0..next.len());
                let amount = delta.min(next[from].1);
                next[from].1 -= amount;
                next.push((degree, amount));
            } else {
                let victim = rng.gen_range(0..next.len());
                let mass = next[victim].1;
                next.remove(victim);
                let to = rng.gen_range(0..next.len());
                next[to].1 += mass;
            }

            match DegreeDistribution::validate(&next) {
                Ok(dist) if self.satisfies(&dist) => return Ok(dist),
                _ => continue,
            }
        }
        Err(AnnealError::MoveFailure)
    }
}

/// Metropolis rule: accept any improvement, and a degradation `delta < 0`
/// with probability `exp(delta / temperature)`.
pub fn accept(delta_threshold: f64, temperature: f64, rng: &mut impl Rng) -> bool {
    assert!(temperature > 0.0, "temperature must be positive");
    delta_threshold >= 0.0 || rng.gen::<f64>() < (delta_threshold / temperature).exp()
}

fn evaluate(dist: &DegreeDistribution, tol: f64) -> Result<f64, AnnealError> {
    Ok(find_threshold(dist, tol)?.eta_star)
}

/// Runs one annealing chain and returns the best candidate seen, with its
/// threshold re-evaluated at [`FINAL_THRESHOLD_TOL`]. Deterministic in
/// `config.rng_seed`.
pub fn optimize(config: &AnnealConfig) -> Result<Candidate, AnnealError> {
    Ok(optimize_traced(config)?.0)
}

/// [`optimize`] plus the best-seen threshold after every step, for
/// monitoring and tests.
pub fn optimize_traced(config: &AnnealConfig) -> Result<(Candidate, Vec<f64>), AnnealError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut current = Candidate {
        threshold: evaluate(&config.init, config.threshold_tol)?,
        dist: config.init.clone(),
    };
    let mut best = current.clone();
    let mut trace = Vec::with_capacity(config.steps as usize);
    let cooling = config.temp_final / config.temp_initial;
    for step in 0..config.steps {
        let temperature = config.temp_initial * cooling.powf(step as f64 / config.steps as f64);
        let proposal = config.perturb(&current, temperature, &mut rng)?;
        debug_assert!(config.satisfies(&proposal));
        let threshold = if proposal == current.dist {
            current.threshold
        } else {
            evaluate(&proposal, config.threshold_tol)?
        };
        if accept(threshold - current.threshold, temperature, &mut rng) {
            current = Candidate {
                dist: proposal,
                threshold,
            };
        }
        if current.threshold > best.threshold {
            best = current.clone();
        }
        trace.push(best.threshold);
    }
    best.threshold = evaluate(&best.dist, FINAL_THRESHOLD_TOL.min(config.threshold_tol))?;
    Ok((best, trace))
}

/// Independent chains over the given seeds, reduced to the best result.
/// Chains run in parallel; the reduction is a pure maximum, so the outcome
/// is deterministic.
pub fn optimize_chains(config: &AnnealConfig, seeds: &[u64]) -> Result<Candidate, AnnealError> {
    if seeds.is_empty() {
        return Err(AnnealError::InvalidConfig(
            "need at least one chain seed".into(),
        ));
    }
    let results: Vec<Candidate> = seeds
        .par_iter()
        .map(|&seed| {
            let chain = AnnealConfig {
                rng_seed: seed,
                ..config.clone()
            };
            optimize(&chain)
        })
        .collect::<Result<_, _>>()?;
    Ok(results
        .into_iter()
        .reduce(|best, c| {
            if c.threshold > best.threshold {
                c
            } else {
                best
            }
        })
        .expect("at least one chain ran"))
}
