//! The invertible Bloom lookup table: cells, the four core operations, and
//! the binary serialization format.
//!
//! A table is `m` cells, each holding a signed count and XOR accumulators
//! for the key and value fields. Inserting a pair adds it to the `d` cells
//! its key hashes to; deleting subtracts it the same way. Recovery peels
//! count-1 cells: such a cell holds exactly one pair in the clear, which is
//! emitted and then deleted, possibly exposing further count-1 cells.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::degree::{DegreeDistribution, DistError};
use crate::hashing::{byte_len, cells_of_key, degree_of_key, key_of_value, MAX_KEY_BITS};

const MAGIC: &[u8; 4] = b"IBLT";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("table must have at least one cell")]
    ZeroCells,
    #[error("key width {nu} is outside 1..={MAX_KEY_BITS} bits")]
    InvalidKeyWidth { nu: u16 },
    #[error("value width must be at least 1 bit")]
    InvalidValueWidth,
    #[error("key is {got} bytes, table stores {expected}-byte keys")]
    KeyLengthMismatch { expected: usize, got: usize },
    #[error("value is {got} bytes, table stores {expected}-byte values")]
    ValueLengthMismatch { expected: usize, got: usize },
    #[error("degree {degree} exceeds the {cells} available cells")]
    DegreeExceedsCells { degree: usize, cells: usize },
    #[error("cell {cell} has a negative count; recover requires insert-only usage")]
    NegativeCount { cell: usize },
    #[error("cell {cell} holds data whose key does not match its value hash")]
    CorruptCell { cell: usize },
    #[error("bad magic bytes; not a serialized table")]
    BadMagic,
    #[error("unsupported format version {version}")]
    UnsupportedVersion { version: u16 },
    #[error("serialized table is truncated or has trailing bytes")]
    Truncated,
    #[error("serialized distribution is invalid: {0}")]
    InvalidDistribution(#[from] DistError),
}

/// An element `z = (x, y)`: a `nu`-bit key derived by hashing the
/// `kappa`-bit value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyValuePair {
    key: Vec<u8>,
    value: Vec<u8>,
}

impl KeyValuePair {
    /// Canonical constructor: derives the key from the value.
    pub fn from_value(value: Vec<u8>, nu: u16) -> Self {
        let key = key_of_value(&value, nu);
        Self { key, value }
    }

    /// Assembles a pair from already-separated fields, without checking
    /// that the key matches the value hash. Recovery uses this for cell
    /// contents; tests use it to craft corrupt data.
    pub fn from_raw_parts(key: Vec<u8>, value: Vec<u8>) -> Self {
        Self { key, value }
    }

    pub fn key(&self) -> &[u8] {
        &self.key
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }
}

/// Result of peeling a table.
#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    /// Pairs read out, in peeling order.
    pub recovered: Vec<KeyValuePair>,
    /// True when every cell count reached zero.
    pub complete: bool,
    /// Cells left with a nonzero count.
    pub residual_cells_nonzero: usize,
    /// Edges touched while peeling; recovery work is proportional to this.
    pub edge_visits: u64,
}

/// The table itself. Cell storage is flat: `counts[i]` plus the `i`-th
/// slices of the key and value accumulator arrays.
///
/// # Examples
/// ```
/// use iblt::degree::DegreeDistribution;
/// use iblt::table::{Iblt, KeyValuePair};
///
/// let dist = DegreeDistribution::regular(3).unwrap();
/// let mut table = Iblt::new(64, dist, 7, 64, 128).unwrap();
/// for tag in 0u8..20 {
///     table.insert(&KeyValuePair::from_value(vec![tag; 16], 64)).unwrap();
/// }
/// let out = table.recover().unwrap();
/// assert!(out.complete);
/// assert_eq!(out.recovered.len(), 20);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Iblt {
    pub(crate) m: usize,
    pub(crate) dist: DegreeDistribution,
    pub(crate) hash_seed: u64,
    pub(crate) nu: u16,
    pub(crate) kappa: u32,
    pub(crate) counts: Vec<i64>,
    pub(crate) key_acc: Vec<u8>,
    pub(crate) val_acc: Vec<u8>,
}

impl Iblt {
    /// Initializes a table of `m` zeroed cells.
    pub fn new(
        m: usize,
        dist: DegreeDistribution,
        hash_seed: u64,
        nu: u16,
        kappa: u32,
    ) -> Result<Self, TableError> {
        if m == 0 {
            return Err(TableError::ZeroCells);
        }
        if !(1..=MAX_KEY_BITS).contains(&nu) {
            return Err(TableError::InvalidKeyWidth { nu });
        }
        if kappa < 1 {
            return Err(TableError::InvalidValueWidth);
        }
        let key_len = byte_len(nu as u32);
        let val_len = byte_len(kappa);
        Ok(Self {
            m,
            dist,
            hash_seed,
            nu,
            kappa,
            counts: vec![0; m],
            key_acc: vec![0; m * key_len],
            val_acc: vec![0; m * val_len],
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dist(&self) -> &DegreeDistribution {
        &self.dist
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn nu(&self) -> u16 {
        self.nu
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn key_len(&self) -> usize {
        byte_len(self.nu as u32)
    }

    pub fn value_len(&self) -> usize {
        byte_len(self.kappa)
    }

    /// Signed counts of all cells, in index order.
    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    /// Key accumulator of cell `i` (0-based).
    pub fn cell_key(&self, i: usize) -> &[u8] {
        let w = self.key_len();
        &self.key_acc[i * w..(i + 1) * w]
    }

    /// Value accumulator of cell `i` (0-based).
    pub fn cell_value(&self, i: usize) -> &[u8] {
        let w = self.value_len();
        &self.val_acc[i * w..(i + 1) * w]
    }

    fn check_pair(&self, z: &KeyValuePair) -> Result<(), TableError> {
        if z.key.len() != self.key_len() {
            return Err(TableError::KeyLengthMismatch {
                expected: self.key_len(),
                got: z.key.len(),
            });
        }
        if z.value.len() != self.value_len() {
            return Err(TableError::ValueLengthMismatch {
                expected: self.value_len(),
                got: z.value.len(),
            });
        }
        Ok(())
    }

    /// Cell indices (0-based) the pair maps to.
    pub(crate) fn target_cells(&self, key: &[u8]) -> Result<Vec<usize>, TableError> {
        let d = degree_of_key(key, &self.dist, self.hash_seed);
        let cells = cells_of_key(key, d, self.m, self.hash_seed)?;
        Ok(cells.into_iter().map(|c| c - 1).collect())
    }

    pub(crate) fn apply(&mut self, z: &KeyValuePair, cells: &[usize], sign: i64) {
        let kw = self.key_len();
        let vw = self.value_len();
        for &c in cells {
            self.counts[c] += sign;
            for (dst, src) in self.key_acc[c * kw..(c + 1) * kw].iter_mut().zip(&z.key) {
                *dst ^= src;
            }
            for (dst, src) in self.val_acc[c * vw..(c + 1) * vw].iter_mut().zip(&z.value) {
                *dst ^= src;
            }
        }
    }

    /// Adds the pair to its `d` cells: count +1, accumulators XOR-ed.
    pub fn insert(&mut self, z: &KeyValuePair) -> Result<(), TableError> {
        self.check_pair(z)?;
        let cells = self.target_cells(&z.key)?;
        self.apply(z, &cells, 1);
        Ok(())
    }

    /// Removes the pair from its `d` cells: count -1, accumulators XOR-ed.
    /// Counts may go negative; that is how subtracted tables represent
    /// one-sided elements.
    pub fn delete(&mut self, z: &KeyValuePair) -> Result<(), TableError> {
        self.check_pair(z)?;
        let cells = self.target_cells(&z.key)?;
        self.apply(z, &cells, -1);
        Ok(())
    }

    /// Reads the pair sitting alone in cell `i`, verifies its key against
    /// the value hash, deletes it from the table, and reports the touched
    /// cells so callers can maintain their peel queues.
    fn peel_at(&mut self, i: usize) -> Result<(KeyValuePair, Vec<usize>), TableError> {
        debug_assert_eq!(self.counts[i], 1);
        let key = self.cell_key(i).to_vec();
        let value = self.cell_value(i).to_vec();
        if key_of_value(&value, self.nu) != key {
            return Err(TableError::CorruptCell { cell: i });
        }
        let z = KeyValuePair::from_raw_parts(key, value);
        let cells = self.target_cells(&z.key)?;
        self.apply(&z, &cells, -1);
        Ok((z, cells))
    }

    fn outcome(&self, recovered: Vec<KeyValuePair>, edge_visits: u64) -> RecoveryOutcome {
        let residual = self.counts.iter().filter(|&&c| c != 0).count();
        RecoveryOutcome {
            recovered,
            complete: residual == 0,
            residual_cells_nonzero: residual,
            edge_visits,
        }
    }

    /// Peeling recovery, in place: repeatedly extract from the lowest-index
    /// count-1 cell until none remains. Requires insert-only usage (no
    /// negative counts). The table is mutated; on success it is all zeros,
    /// and on a [`TableError::CorruptCell`] error it is left partially
    /// peeled.
    pub fn recover(&mut self) -> Result<RecoveryOutcome, TableError> {
        if let Some(cell) = self.counts.iter().position(|&c| c < 0) {
            return Err(TableError::NegativeCount { cell });
        }
        let mut heap: BinaryHeap<Reverse<usize>> = self
            .counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == 1)
            .map(|(i, _)| Reverse(i))
            .collect();
        let mut recovered = Vec::new();
        let mut edge_visits = 0u64;
        while let Some(Reverse(i)) = heap.pop() {
            if self.counts[i] != 1 {
                continue;
            }
            let (z, cells) = self.peel_at(i)?;
            edge_visits += cells.len() as u64;
            for c in cells {
                if self.counts[c] == 1 {
                    heap.push(Reverse(c));
                }
            }
            recovered.push(z);
        }
        Ok(self.outcome(recovered, edge_visits))
    }

    /// Non-destructive recovery: peels a working copy and leaves `self`
    /// untouched.
    pub fn recover_copy(&self) -> Result<RecoveryOutcome, TableError> {
        self.clone().recover()
    }

    /// Recovery that picks uniformly among the current count-1 cells
    /// instead of the lowest index. Outcomes are selection-independent;
    /// this variant exists so tests can verify that.
    pub fn recover_randomized(
        &mut self,
        selection_seed: u64,
    ) -> Result<RecoveryOutcome, TableError> {
        if let Some(cell) = self.counts.iter().position(|&c| c < 0) {
            return Err(TableError::NegativeCount { cell });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(selection_seed);
        let mut recovered = Vec::new();
        let mut edge_visits = 0u64;
        loop {
            let candidates: Vec<usize> = self
                .counts
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c == 1)
                .map(|(i, _)| i)
                .collect();
            if candidates.is_empty() {
                break;
            }
            let i = candidates[rng.gen_range(0..candidates.len())];
            let (z, cells) = self.peel_at(i)?;
            edge_visits += cells.len() as u64;
            recovered.push(z);
        }
        Ok(self.outcome(recovered, edge_visits))
    }

    /// Bipartite edge list `(pair position, cell index)` for the given
    /// pairs; pair positions are 0-based, cell indices 1-based as in
    /// [`cells_of_key`].
    pub fn export_graph(&self, pairs: &[KeyValuePair]) -> Result<Vec<(usize, usize)>, TableError> {
        let mut edges = Vec::new();
        for (idx, z) in pairs.iter().enumerate() {
            self.check_pair(z)?;
            let d = degree_of_key(&z.key, &self.dist, self.hash_seed);
            for c in cells_of_key(&z.key, d, self.m, self.hash_seed)? {
                edges.push((idx, c));
            }
        }
        Ok(edges)
    }

    /// Serializes the table: header (magic, version, geometry, seed,
    /// distribution terms) followed by one record per cell. All integers
    /// little-endian; bit-exact across runs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.m as u64).to_le_bytes());
        out.extend_from_slice(&self.nu.to_le_bytes());
        out.extend_from_slice(&self.kappa.to_le_bytes());
        out.extend_from_slice(&self.hash_seed.to_le_bytes());
        let entries = self.dist.entries();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for &(d, p) in entries {
            out.extend_from_slice(&d.to_le_bytes());
            out.extend_from_slice(&p.to_bits().to_le_bytes());
        }
        let kw = self.key_len();
        let vw = self.value_len();
        for i in 0..self.m {
            out.extend_from_slice(&self.counts[i].to_le_bytes());
            out.extend_from_slice(&self.key_acc[i * kw..(i + 1) * kw]);
            out.extend_from_slice(&self.val_acc[i * vw..(i + 1) * vw]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(TableError::BadMagic);
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(TableError::UnsupportedVersion { version });
        }
        let m = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let nu = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        let kappa = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let hash_seed = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let term_count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let mut entries = Vec::with_capacity(term_count as usize);
        for _ in 0..term_count {
            let d = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
            let p = f64::from_bits(u64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
            entries.push((d, p));
        }
        let dist = DegreeDistribution::from_normalized_entries(entries)?;
        let mut table = Iblt::new(m, dist, hash_seed, nu, kappa)?;
        let kw = table.key_len();
        let vw = table.value_len();
        for i in 0..m {
            table.counts[i] = i64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            table.key_acc[i * kw..(i + 1) * kw].copy_from_slice(cur.take(kw)?);
            table.val_acc[i * vw..(i + 1) * vw].copy_from_slice(cur.take(vw)?);
        }
        if cur.pos != bytes.len() {
            return Err(TableError::Truncated);
        }
        Ok(table)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, io::Error> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TableError> {
        if self.pos + n > self.bytes.len() {
            return Err(TableError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
