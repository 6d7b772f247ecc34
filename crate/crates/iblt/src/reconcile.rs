//! Set reconciliation: subtract two tables built over the same parameters
//! and peel the symmetric difference out of the result.
//!
//! Elements present in both sets cancel cell by cell, so the subtracted
//! table encodes only the difference, with sign: +1 counts for elements of
//! the first table, -1 for the second. Peeling generalizes accordingly: a
//! cell is extractable when its count is +-1 and its key accumulator
//! matches the hash of its value accumulator.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::hashing::key_of_value;
use crate::table::{Iblt, KeyValuePair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconcileError {
    #[error("tables disagree on {what}")]
    ParameterMismatch { what: &'static str },
}

/// Symmetric difference read out of a subtracted table.
#[derive(Debug, Clone)]
pub struct DiffOutcome {
    /// Elements only in the first (minuend) set.
    pub only_in_a: Vec<KeyValuePair>,
    /// Elements only in the second (subtrahend) set.
    pub only_in_b: Vec<KeyValuePair>,
    /// True when the subtracted table drained to all-zero.
    pub complete: bool,
}

/// Cellwise difference `a - b`: counts subtract, accumulators XOR.
/// Both tables must share `(m, dist, hash_seed, nu, kappa)`.
pub fn subtract(a: &Iblt, b: &Iblt) -> Result<Iblt, ReconcileError> {
    if a.m != b.m {
        return Err(ReconcileError::ParameterMismatch { what: "cell count" });
    }
    if a.dist != b.dist {
        return Err(ReconcileError::ParameterMismatch {
            what: "degree distribution",
        });
    }
    if a.hash_seed != b.hash_seed {
        return Err(ReconcileError::ParameterMismatch { what: "hash seed" });
    }
    if a.nu != b.nu {
        return Err(ReconcileError::ParameterMismatch { what: "key width" });
    }
    if a.kappa != b.kappa {
        return Err(ReconcileError::ParameterMismatch {
            what: "value width",
        });
    }
    let mut out = a.clone();
    for (dst, src) in out.counts.iter_mut().zip(&b.counts) {
        *dst -= src;
    }
    for (dst, src) in out.key_acc.iter_mut().zip(&b.key_acc) {
        *dst ^= src;
    }
    for (dst, src) in out.val_acc.iter_mut().zip(&b.val_acc) {
        *dst ^= src;
    }
    Ok(out)
}

/// Generalized peeling over a subtracted table. A cell is peelable when
/// `|count| == 1` and the key accumulator equals the value hash; the sign
/// decides the side. Incomplete peeling is reported, not an error.
pub fn recover_diff(mut table: Iblt) -> DiffOutcome {
    let mut heap: BinaryHeap<Reverse<usize>> = table
        .counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c.abs() == 1)
        .map(|(i, _)| Reverse(i))
        .collect();
    let mut only_in_a = Vec::new();
    let mut only_in_b = Vec::new();
    while let Some(Reverse(i)) = heap.pop() {
        let sign = table.counts[i];
        if sign.abs() != 1 {
            continue;
        }
        let key = table.cell_key(i).to_vec();
        let value = table.cell_value(i).to_vec();
        if key_of_value(&value, table.nu()) != key {
            // Mixed cell; it re-enters the heap if a later peel purifies it.
            continue;
        }
        let z = KeyValuePair::from_raw_parts(key, value);
        // Remove z's signed contribution everywhere it was written.
        let cells = table
            .target_cells(z.key())
            .expect("pair read from a cell matches the table geometry");
        table.apply(&z, &cells, -sign);
        for c in cells {
            if table.counts[c].abs() == 1 {
                heap.push(Reverse(c));
            }
        }
        if sign > 0 {
            only_in_a.push(z);
        } else {
            only_in_b.push(z);
        }
    }
    let complete = table.counts.iter().all(|&c| c == 0)
        && table.key_acc.iter().all(|&b| b == 0)
        && table.val_acc.iter().all(|&b| b == 0);
    DiffOutcome {
        only_in_a,
        only_in_b,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::DegreeDistribution;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn x3() -> DegreeDistribution {
        DegreeDistribution::regular(3).unwrap()
    }

    fn table(m: usize, seed: u64) -> Iblt {
        Iblt::new(m, x3(), seed, 64, 128).unwrap()
    }

    fn pair(tag: u64) -> KeyValuePair {
        let mut value = vec![0u8; 16];
        value[..8].copy_from_slice(&tag.to_le_bytes());
        KeyValuePair::from_value(value, 64)
    }

    #[test]
    fn self_subtraction_is_the_zero_table() {
        let mut t = table(32, 1);
        for tag in 0..10 {
            t.insert(&pair(tag)).unwrap();
        }
        let diff = subtract(&t, &t).unwrap();
        assert_eq!(diff.to_bytes(), table(32, 1).to_bytes());
        let out = recover_diff(diff);
        assert!(out.complete);
        assert!(out.only_in_a.is_empty() && out.only_in_b.is_empty());
    }

    #[test]
    fn subtraction_matches_signed_encoding() {
        // A = {z1, z2}, B = {z2, z3}: the difference table must equal
        // "insert z1, delete z3" bitwise.
        let (z1, z2, z3) = (pair(1), pair(2), pair(3));
        let mut a = table(32, 7);
        a.insert(&z1).unwrap();
        a.insert(&z2).unwrap();
        let mut b = table(32, 7);
        b.insert(&z2).unwrap();
        b.insert(&z3).unwrap();
        let diff = subtract(&a, &b).unwrap();
        let mut expected = table(32, 7);
        expected.insert(&z1).unwrap();
        expected.delete(&z3).unwrap();
        assert_eq!(diff.to_bytes(), expected.to_bytes());

        let out = recover_diff(diff);
        assert!(out.complete);
        assert_eq!(out.only_in_a, vec![z1]);
        assert_eq!(out.only_in_b, vec![z3]);
    }

    #[test]
    fn swapping_operands_swaps_sides() {
        let mut a = table(64, 3);
        let mut b = table(64, 3);
        for tag in 0..20 {
            a.insert(&pair(tag)).unwrap();
        }
        for tag in 15..35 {
            b.insert(&pair(tag)).unwrap();
        }
        let ab = recover_diff(subtract(&a, &b).unwrap());
        let ba = recover_diff(subtract(&b, &a).unwrap());
        assert!(ab.complete && ba.complete);
        let sort = |mut v: Vec<KeyValuePair>| {
            v.sort();
            v
        };
        assert_eq!(sort(ab.only_in_a.clone()), sort(ba.only_in_b.clone()));
        assert_eq!(sort(ab.only_in_b), sort(ba.only_in_a));
    }

    #[test]
    fn parameter_mismatch_is_rejected() {
        let base = table(32, 1);
        assert!(subtract(&base, &table(33, 1)).is_err());
        assert!(subtract(&base, &table(32, 2)).is_err());
        let other_dist =
            Iblt::new(32, DegreeDistribution::regular(4).unwrap(), 1, 64, 128).unwrap();
        assert!(subtract(&base, &other_dist).is_err());
        let other_nu = Iblt::new(32, x3(), 1, 32, 128).unwrap();
        assert!(subtract(&base, &other_nu).is_err());
        let other_kappa = Iblt::new(32, x3(), 1, 64, 64).unwrap();
        assert!(subtract(&base, &other_kappa).is_err());
    }

    #[test]
    fn shared_elements_are_never_emitted() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for round in 0..50u64 {
            let mut a = table(64, round);
            let mut b = table(64, round);
            let mut shared_keys = Vec::new();
            for _ in 0..30 {
                let mut value = vec![0u8; 16];
                rng.fill_bytes(&mut value);
                let z = KeyValuePair::from_value(value, 64);
                shared_keys.push(z.key().to_vec());
                a.insert(&z).unwrap();
                b.insert(&z).unwrap();
            }
            for _ in 0..5 {
                let mut value = vec![0u8; 16];
                rng.fill_bytes(&mut value);
                a.insert(&KeyValuePair::from_value(value.clone(), 64))
                    .unwrap();
                rng.fill_bytes(&mut value);
                b.insert(&KeyValuePair::from_value(value, 64)).unwrap();
            }
            let out = recover_diff(subtract(&a, &b).unwrap());
            for z in out.only_in_a.iter().chain(&out.only_in_b) {
                assert!(!shared_keys.contains(&z.key().to_vec()));
            }
            let keys_a: std::collections::BTreeSet<_> =
                out.only_in_a.iter().map(|z| z.key().to_vec()).collect();
            for z in &out.only_in_b {
                assert!(!keys_a.contains(z.key()), "sides must be key-disjoint");
            }
        }
    }

    #[test]
    fn overloaded_difference_rarely_completes() {
        // |A delta B| / m = 2.0, far above any threshold: peeling stalls
        // for essentially every seed.
        let mut completes = 0u32;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1FF);
            let mut a = table(40, seed);
            let mut b = table(40, seed);
            let mut value = vec![0u8; 16];
            for side in 0..2 {
                for _ in 0..40 {
                    rng.fill_bytes(&mut value);
                    let z = KeyValuePair::from_value(value.clone(), 64);
                    if side == 0 {
                        a.insert(&z).unwrap();
                    } else {
                        b.insert(&z).unwrap();
                    }
                }
            }
            if recover_diff(subtract(&a, &b).unwrap()).complete {
                completes += 1;
            }
        }
        assert!(
            completes <= 5,
            "completed {completes} of 100 overloaded runs"
        );
    }

    #[test]
    fn success_depends_on_difference_size_not_set_size() {
        // Fixed |A delta B| = 40 at m = 100 (difference load 0.4); the
        // completion rate must not degrade as the intersection grows.
        let mut rates = Vec::new();
        for &intersection in &[0usize, 200, 2000] {
            let mut completes = 0u32;
            let runs = 100u64;
            for run in 0..runs {
                let seed = run * 31 + intersection as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut a = table(100, seed);
                let mut b = table(100, seed);
                let mut value = vec![0u8; 16];
                for _ in 0..intersection {
                    rng.fill_bytes(&mut value);
                    let z = KeyValuePair::from_value(value.clone(), 64);
                    a.insert(&z).unwrap();
                    b.insert(&z).unwrap();
                }
                for side in 0..2 {
                    for _ in 0..20 {
                        rng.fill_bytes(&mut value);
                        let z = KeyValuePair::from_value(value.clone(), 64);
                        if side == 0 {
                            a.insert(&z).unwrap();
                        } else {
                            b.insert(&z).unwrap();
                        }
                    }
                }
                let out = recover_diff(subtract(&a, &b).unwrap());
                if out.complete {
                    assert_eq!(out.only_in_a.len(), 20);
                    assert_eq!(out.only_in_b.len(), 20);
                    completes += 1;
                }
            }
            rates.push(completes as f64 / runs as f64);
        }
        // Two-sigma band for a Bernoulli rate at 100 runs.
        let sigma = (rates[0] * (1.0 - rates[0]) / 100.0).sqrt().max(0.02);
        for r in &rates[1..] {
            assert!(
                (r - rates[0]).abs() <= 2.0 * sigma + 0.05,
                "rates diverged: {rates:?}"
            );
        }
    }
}
