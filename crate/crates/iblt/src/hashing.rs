//! Hash functions backing the table.
//!
//! Keys are SHA-512 digests of values, truncated to the configured key
//! width. Per-key randomness (the degree draw and the cell-index draw)
//! comes from a counter-mode SHA-256 stream keyed by the table seed, with
//! separate domains so the degree and the index vector are independent
//! pure functions of `(key, seed)`.

use sha2::{Digest, Sha256, Sha512};

use crate::degree::DegreeDistribution;
use crate::table::TableError;

/// Maximum key width in bits; SHA-512 output bounds it.
pub const MAX_KEY_BITS: u16 = 512;

const DOMAIN_DEGREE: u8 = 1;
const DOMAIN_CELLS: u8 = 2;

/// Bytes needed to hold `bits` bits.
pub(crate) fn byte_len(bits: u32) -> usize {
    (bits as usize).div_ceil(8)
}

/// Zeroes any bits of the final byte beyond the configured width. Bits are
/// taken most-significant-first from the digest stream.
pub(crate) fn mask_trailing_bits(bytes: &mut [u8], bits: u32) {
    let rem = (bits % 8) as u8;
    if rem != 0 {
        if let Some(last) = bytes.last_mut() {
            *last &= 0xffu8 << (8 - rem);
        }
    }
}

/// Derives the `nu`-bit key of a value: the first `nu` bits of the value's
/// SHA-512 digest.
pub fn key_of_value(value: &[u8], nu: u16) -> Vec<u8> {
    assert!(
        (1..=MAX_KEY_BITS).contains(&nu),
        "key width must be in 1..=512 bits"
    );
    let digest = Sha512::digest(value);
    let mut key = digest[..byte_len(nu as u32)].to_vec();
    mask_trailing_bits(&mut key, nu as u32);
    key
}

/// Counter-mode stream of 64-bit words derived from `(seed, domain, key)`.
struct WordStream<'a> {
    seed: u64,
    domain: u8,
    key: &'a [u8],
    block: u32,
    buf: [u8; 32],
    used: usize,
}

impl<'a> WordStream<'a> {
    fn new(seed: u64, domain: u8, key: &'a [u8]) -> Self {
        Self {
            seed,
            domain,
            key,
            block: 0,
            buf: [0; 32],
            used: 32,
        }
    }

    fn next_u64(&mut self) -> u64 {
        if self.used == 32 {
            let mut h = Sha256::new();
            h.update(b"iblt-hash-v1");
            h.update(self.seed.to_le_bytes());
            h.update([self.domain]);
            h.update(self.block.to_le_bytes());
            h.update(self.key);
            self.buf = h.finalize().into();
            self.block += 1;
            self.used = 0;
        }
        let w = u64::from_le_bytes(self.buf[self.used..self.used + 8].try_into().unwrap());
        self.used += 8;
        w
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
fn to_unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unbiased-enough range reduction: maps a 64-bit word onto `[0, span)`.
fn reduce(word: u64, span: u64) -> u64 {
    ((word as u128 * span as u128) >> 64) as u64
}

/// Degree assigned to `key`: inverse-CDF lookup of the distribution on the
/// first word of the degree stream. Over uniform keys the output follows
/// the distribution.
pub fn degree_of_key(key: &[u8], dist: &DegreeDistribution, hash_seed: u64) -> u32 {
    let u = to_unit(WordStream::new(hash_seed, DOMAIN_DEGREE, key).next_u64());
    let mut acc = 0.0;
    for &(d, p) in dist.entries() {
        acc += p;
        if u < acc {
            return d;
        }
    }
    dist.max_degree()
}

/// The `d` distinct cell indices (1-based, in `1..=m`) assigned to `key`:
/// a partial Fisher-Yates draw without replacement fed by the index stream.
pub fn cells_of_key(
    key: &[u8],
    d: u32,
    m: usize,
    hash_seed: u64,
) -> Result<Vec<usize>, TableError> {
    let d = d as usize;
    if d > m {
        return Err(TableError::DegreeExceedsCells {
            degree: d,
            cells: m,
        });
    }
    assert!(d >= 1, "degree must be at least 1");
    let mut stream = WordStream::new(hash_seed, DOMAIN_CELLS, key);
    // Sparse view of the virtual array 0..m: only displaced slots are stored.
    let mut displaced: Vec<(usize, usize)> = Vec::with_capacity(d);
    let lookup = |displaced: &[(usize, usize)], i: usize| {
        displaced
            .iter()
            .rev()
            .find(|&&(k, _)| k == i)
            .map_or(i, |&(_, v)| v)
    };
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let r = i + reduce(stream.next_u64(), (m - i) as u64) as usize;
        let picked = lookup(&displaced, r);
        let displaced_in = lookup(&displaced, i);
        displaced.push((r, displaced_in));
        out.push(picked + 1);
    }
    Ok(out)
}
