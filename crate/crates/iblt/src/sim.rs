//! Monte Carlo estimation of the finite-length failure probability.
//!
//! A trial builds a fresh table, inserts `n = round(eta * m)` random pairs,
//! peels it, and counts the pairs that did not come back. Aggregating over
//! seeded trials gives the per-pair failure probability `P_e` at each load,
//! with Wilson 95% intervals (the deep-floor points see very few failures,
//! where the normal approximation misbehaves).
//!
//! Determinism: every trial derives its own seed from
//! `(master_seed, point index, trial index)`, so results do not depend on
//! execution order and identical configs reproduce identical results.

use std::io::{self, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::degree::DegreeDistribution;
use crate::hashing::{cells_of_key, degree_of_key, key_of_value};
use crate::table::{Iblt, KeyValuePair};

/// Key width used by simulations.
pub const SIM_KEY_BITS: u16 = 64;
/// Value width used by simulations.
pub const SIM_VALUE_BITS: u32 = 128;

const WILSON_Z95: f64 = 1.959963984540054;

/// Parameters for [`estimate_pe`].
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dist: DegreeDistribution,
    pub m: usize,
    pub eta_values: Vec<f64>,
    pub trials_per_point: u64,
    pub master_seed: u64,
    /// Stop a point early once this many failed pairs have accumulated
    /// (scanning trials in index order, so the cut is deterministic).
    pub stop_at_errors: Option<u64>,
    /// Skip the XOR bookkeeping and peel the bipartite graph directly.
    /// The failure count per trial is identical; only faster.
    pub graph_only: bool,
}

impl SimConfig {
    pub fn new(dist: DegreeDistribution, m: usize) -> Self {
        Self {
            dist,
            m,
            eta_values: Vec::new(),
            trials_per_point: 1000,
            master_seed: 7,
            stop_at_errors: None,
            graph_only: false,
        }
    }
}

/// One load point of a [`SimResult`].
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub eta: f64,
    pub n: u64,
    pub trials: u64,
    pub failed_pairs: u64,
    pub total_pairs: u64,
    pub pe_estimate: f64,
    pub wilson_ci_95: (f64, f64),
    /// Trials that failed to recover everything, and their rate: the
    /// per-table failure view alongside the per-pair one.
    pub failed_tables: u64,
    pub table_failure_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub points: Vec<PointRecord>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Trial seed from `(master_seed, point index, trial index)`.
pub fn derive_seed(master: u64, point: u64, trial: u64) -> u64 {
    let mut s = splitmix64(master);
    s = splitmix64(s.wrapping_add(point.wrapping_mul(0xA24BAED4963EE407)));
    s = splitmix64(s.wrapping_add(trial.wrapping_mul(0x9FB21C651E98DF25)));
    s
}

/// Wilson 95% score interval for `k` successes out of `n`.
pub fn wilson_ci_95(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = WILSON_Z95;
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn trial_values(n: u64, trial_seed: u64) -> impl Iterator<Item = Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    (0..n).map(move |_| {
        let mut value = vec![0u8; (SIM_VALUE_BITS as usize) / 8];
        rng.fill_bytes(&mut value);
        value
    })
}

/// Runs one trial at full fidelity: build, insert, peel. Returns the
/// number of pairs missing from the recovery output.
pub fn run_trial(dist: &DegreeDistribution, m: usize, n: u64, trial_seed: u64) -> u64 {
    assert!(n >= 1, "a trial needs at least one pair");
    let mut table = Iblt::new(m, dist.clone(), trial_seed, SIM_KEY_BITS, SIM_VALUE_BITS)
        .expect("simulation geometry is valid");
    for value in trial_values(n, trial_seed) {
        let z = KeyValuePair::from_value(value, SIM_KEY_BITS);
        table
            .insert(&z)
            .expect("simulated pairs match the table geometry");
    }
    let out = table
        .recover()
        .expect("insert-only tables always peel cleanly");
    n - out.recovered.len() as u64
}

/// Same trial on the bipartite graph only: counts plus an XOR of pair ids
/// stand in for the cell accumulators. Failure counts are identical to
/// [`run_trial`] because peeling outcomes depend only on the graph.
pub fn run_trial_graph_only(dist: &DegreeDistribution, m: usize, n: u64, trial_seed: u64) -> u64 {
    assert!(n >= 1, "a trial needs at least one pair");
    let mut adjacency: Vec<Vec<usize>> = Vec::with_capacity(n as usize);
    let mut cell_deg = vec![0i64; m];
    let mut cell_ids = vec![0u64; m];
    for (idx, value) in trial_values(n, trial_seed).enumerate() {
        let key = key_of_value(&value, SIM_KEY_BITS);
        let d = degree_of_key(&key, dist, trial_seed);
        let cells = cells_of_key(&key, d, m, trial_seed)
            .expect("simulated degrees never exceed the cell count");
        let id = idx as u64 + 1;
        let mut cs = Vec::with_capacity(cells.len());
        for c in cells {
            let c0 = c - 1;
            cell_deg[c0] += 1;
            cell_ids[c0] ^= id;
            cs.push(c0);
        }
        adjacency.push(cs);
    }
    let mut stack: Vec<usize> = (0..m).filter(|&c| cell_deg[c] == 1).collect();
    let mut peeled = 0u64;
    let mut alive = vec![true; n as usize];
    while let Some(c) = stack.pop() {
        if cell_deg[c] != 1 {
            continue;
        }
        let idx = (cell_ids[c] - 1) as usize;
        if !alive[idx] {
            continue;
        }
        alive[idx] = false;
        peeled += 1;
        for &cc in &adjacency[idx] {
            cell_deg[cc] -= 1;
            cell_ids[cc] ^= idx as u64 + 1;
            if cell_deg[cc] == 1 {
                stack.push(cc);
            }
        }
    }
    n - peeled
}

/// Per-pair failure probability at each configured load.
pub fn estimate_pe(config: &SimConfig) -> SimResult {
    assert!(
        config.trials_per_point >= 1,
        "need at least one trial per point"
    );
    let runner = if config.graph_only {
        run_trial_graph_only
    } else {
        run_trial
    };
    let mut points = Vec::with_capacity(config.eta_values.len());
    for (pi, &eta) in config.eta_values.iter().enumerate() {
        assert!(eta > 0.0, "loads must be positive");
        let n = (eta * config.m as f64).round() as u64;
        assert!(n >= 1, "load {eta} rounds to an empty table");

        let chunk = match config.stop_at_errors {
            Some(_) => 64u64,
            None => config.trials_per_point,
        };
        let mut failures_per_trial: Vec<u64> = Vec::with_capacity(config.trials_per_point as usize);
        let mut start = 0u64;
        while start < config.trials_per_point {
            let end = (start + chunk).min(config.trials_per_point);
            let batch: Vec<u64> = (start..end)
                .into_par_iter()
                .map(|t| {
                    runner(
                        &config.dist,
                        config.m,
                        n,
                        derive_seed(config.master_seed, pi as u64, t),
                    )
                })
                .collect();
            failures_per_trial.extend(batch);
            if let Some(stop) = config.stop_at_errors {
                let seen: u64 = failures_per_trial.iter().sum();
                if seen >= stop {
                    break;
                }
            }
            start = end;
        }
        // With early stopping, cut at the first trial that crosses the
        // budget; trials computed beyond it are discarded so the record
        // is independent of chunking.
        let mut trials_used = failures_per_trial.len() as u64;
        if let Some(stop) = config.stop_at_errors {
            let mut acc = 0u64;
            for (idx, &f) in failures_per_trial.iter().enumerate() {
                acc += f;
                if acc >= stop {
                    trials_used = idx as u64 + 1;
                    break;
                }
            }
        }
        let used = &failures_per_trial[..trials_used as usize];
        let failed_pairs: u64 = used.iter().sum();
        let failed_tables = used.iter().filter(|&&f| f > 0).count() as u64;
        let total_pairs = n * trials_used;
        points.push(PointRecord {
            eta,
            n,
            trials: trials_used,
            failed_pairs,
            total_pairs,
            pe_estimate: failed_pairs as f64 / total_pairs as f64,
            wilson_ci_95: wilson_ci_95(failed_pairs, total_pairs),
            failed_tables,
            table_failure_rate: failed_tables as f64 / trials_used as f64,
        });
    }
    SimResult { points }
}

/// Sweeps every distribution over the load grid and writes CSV rows
/// `dist_id,eta,n,trials,failed_pairs,total_pairs,pe,ci_lo,ci_hi`,
/// sorted by distribution id and then load. Each distribution gets its own
/// derived master seed, so the output is reproducible row for row.
#[allow(clippy::too_many_arguments)]
pub fn sweep_load<W: Write>(
    dists: &[(String, DegreeDistribution)],
    m: usize,
    eta_values: &[f64],
    trials_per_point: u64,
    master_seed: u64,
    stop_at_errors: Option<u64>,
    graph_only: bool,
    out: &mut W,
) -> io::Result<()> {
    writeln!(
        out,
        "dist_id,eta,n,trials,failed_pairs,total_pairs,pe,ci_lo,ci_hi"
    )?;
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].0.cmp(&dists[b].0));
    let mut etas = eta_values.to_vec();
    etas.sort_by(|a, b| a.partial_cmp(b).expect("loads are comparable"));
    for (rank, &di) in order.iter().enumerate() {
        let (id, dist) = &dists[di];
        let config = SimConfig {
            dist: dist.clone(),
            m,
            eta_values: etas.clone(),
            trials_per_point,
            master_seed: derive_seed(master_seed, 0x5EED, rank as u64),
            stop_at_errors,
            graph_only,
        };
        let result = estimate_pe(&config);
        for p in &result.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                id,
                p.eta,
                p.n,
                p.trials,
                p.failed_pairs,
                p.total_pairs,
                p.pe_estimate,
                p.wilson_ci_95.0,
                p.wilson_ci_95.1
            )?;
        }
    }
    Ok(())
}
