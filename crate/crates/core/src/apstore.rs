//! The `.apdb` on-disk format and random-access -a_p lookups.
//!
//! Layout (all little-endian, bit-exact):
//!
//! ```text
//! header  magic "APDB" | version u16 = 1 | flags u16 = 0 | p_max u64 | prime_count u64
//! index   prime_count x (p: u64, byte offset: u64), sorted by p
//! block   rep_count u16
//!         rep_count x (rep: u64)
//!         rep_count x p values of i16   (-a_p, row-major, b ascending)
//!         sextic_count u16 in {0, 6}
//!         sextic_count x (b_rep: u64, value: i16)
//! ```
//!
//! Blocks appear in ascending prime order and cover exactly the odd primes
//! 3 <= p <= p_max. Block sizes are a pure function of p, so the whole
//! layout is reproducible: the same p_max always yields the same bytes
//! regardless of kernel choice or thread count.

use crate::apkernel::{
    build_prime_table, Kernel, KernelError, PrimeTable, MAX_TABLE_PRIME,
};
use crate::modarith::{self, PrimeModulus, ResidueClassReps};
use rayon::prelude::*;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;
use std::sync::{Arc, RwLock};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"APDB";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: u64 = 24;
/// Primes per parallel build batch; bounds peak memory during db_create.
const BUILD_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an apdb file (bad magic)")]
    BadMagic,
    #[error("unsupported apdb format version {0}")]
    UnknownVersion(u16),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("block for prime {prime} is truncated")]
    TruncatedBlock { prime: u64 },
    #[error("corrupt block for prime {prime}: {reason}")]
    CorruptBlock { prime: u64, reason: String },
    #[error("prime {0} is not in the database")]
    PrimeNotInDb(u64),
    #[error("p_max must be at least 3, got {0}")]
    PmaxTooSmall(u64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Stored-value count for a prime: (4p if p ≡ 1 mod 4 else 2p) plus
/// (6 if p ≡ 1 mod 3 else 0). Callers pass odd primes.
pub fn expected_count(p: u64) -> u64 {
    (if p % 4 == 1 { 4 * p } else { 2 * p }) + if p % 3 == 1 { 6 } else { 0 }
}

fn rep_count(p: u64) -> u64 {
    if p % 4 == 1 {
        4
    } else {
        2
    }
}

fn sextic_count(p: u64) -> u64 {
    if p % 3 == 1 {
        6
    } else {
        0
    }
}

fn block_len(p: u64) -> u64 {
    let rc = rep_count(p);
    2 + 8 * rc + 2 * rc * p + 2 + 10 * sextic_count(p)
}

/// Deterministic sieve of the odd primes 3 <= p <= p_max.
pub fn odd_primes_to(p_max: u64) -> Vec<u64> {
    let n = p_max as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for p in (3..=n).step_by(2) {
        if composite[p] {
            continue;
        }
        out.push(p as u64);
        let mut q = p * p;
        while q <= n {
            composite[q] = true;
            q += 2 * p;
        }
    }
    out
}

/// Where a lookup lands after the isomorphism-class reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupReduction {
    /// Row of the stored quartic representative `rep`, at column `reduced_b`.
    QuarticRow { rep: u64, reduced_b: u64 },
    /// Entry `index` of the sextic section (a = 0, p ≡ 1 mod 3, b != 0).
    SexticClass { index: usize },
    /// a_p = 0 forced by x -> x³ being a bijection (a = 0, p ≢ 1 mod 3)
    /// or by a ≡ b ≡ 0.
    ForcedZero,
}

impl LookupReduction {
    /// Reads the reduced entry out of an in-memory table.
    pub fn read(&self, table: &PrimeTable) -> Option<i16> {
        match *self {
            LookupReduction::ForcedZero => Some(0),
            LookupReduction::SexticClass { index } => table.sextic_values().get(index).copied(),
            LookupReduction::QuarticRow { rep, reduced_b } => table.row_value(rep, reduced_b),
        }
    }
}

/// Candidate-scan budget before a lookup declares the rep list corrupt;
/// 2 x (number of quartic classes, counting a = 0) squared.
fn scan_cap(p: PrimeModulus) -> usize {
    let classes = if p.mod4() == 1 { 5 } else { 3 };
    2 * classes * classes
}

/// The paper's lookup reduction against a stored representative list:
/// scan the reps for the one whose coset contains A, extract the fourth
/// root, and rescale B by its inverse sixth power.
pub fn reduce_with_reps(
    reps: &ResidueClassReps,
    a: u64,
    b: u64,
) -> Result<LookupReduction, DbError> {
    let pm = reps.p;
    let p = pm.value();
    debug_assert!(a < p && b < p);
    if a == 0 {
        if pm.mod3() != 1 || b == 0 {
            return Ok(LookupReduction::ForcedZero);
        }
        for (index, &brep) in reps.sextic.iter().enumerate() {
            let binv = modarith::mod_inv(brep, pm).expect("sextic rep is nonzero");
            if modarith::is_kth_power(modarith::mul_mod(b, binv, pm), 6, pm) {
                return Ok(LookupReduction::SexticClass { index });
            }
        }
        return Err(DbError::CorruptBlock {
            prime: p,
            reason: format!("no stored sextic class contains b = {b}"),
        });
    }

    let cap = scan_cap(pm);
    for (trials, &rep) in reps.quartic_nonzero().iter().enumerate() {
        if trials >= cap {
            break;
        }
        let rinv = modarith::mod_inv(rep, pm).expect("quartic rep is nonzero");
        let cls = modarith::mul_mod(a, rinv, pm);
        if modarith::is_kth_power(cls, 4, pm) {
            let l = modarith::kth_root(cls, 4, pm).expect("fourth power has a root");
            let linv = modarith::mod_inv(l, pm).expect("root is nonzero");
            let linv6 = modarith::mod_pow(linv, 6, pm);
            return Ok(LookupReduction::QuarticRow {
                rep,
                reduced_b: modarith::mul_mod(b, linv6, pm),
            });
        }
    }
    Err(DbError::CorruptBlock {
        prime: p,
        reason: format!("no stored quartic class contains a = {a}"),
    })
}

/// Per-prime reduction table: O(p) to build, O(1) per lookup. Used by the
/// moment and search pipelines where every t in 0..p gets reduced.
pub struct Reducer {
    p: u64,
    mod3_is1: bool,
    quartic_nonzero: Vec<u64>,
    rep_index: Vec<u8>,
    linv6: Vec<u32>,
    sextic_index: Vec<u8>,
}

impl Reducer {
    pub fn new(reps: &ResidueClassReps) -> Self {
        let p = reps.p.value();
        let n = p as usize;
        let quartic_nonzero = reps.quartic_nonzero().to_vec();

        // inv[i] = i^{-1} mod p by the standard O(p) recurrence.
        let mut inv = vec![0u64; n];
        if n > 1 {
            inv[1] = 1;
            for i in 2..n {
                let q = p / i as u64;
                let r = (p % i as u64) as usize;
                inv[i] = (p - q * inv[r] % p) % p;
            }
        }

        let mut rep_index = vec![u8::MAX; n];
        let mut linv6 = vec![0u32; n];
        let mut sextic_index = vec![u8::MAX; if reps.p.mod3() == 1 { n } else { 0 }];
        for l in 1..p {
            let l2 = l * l % p;
            let l4 = l2 * l2 % p;
            let i = inv[l as usize];
            let i2 = i * i % p;
            let i6 = i2 * i2 % p * i2 % p;
            for (idx, &rep) in quartic_nonzero.iter().enumerate() {
                let v = (rep * l4 % p) as usize;
                if rep_index[v] == u8::MAX {
                    rep_index[v] = idx as u8;
                    linv6[v] = i6 as u32;
                }
            }
            if !sextic_index.is_empty() {
                let l6 = l4 * l2 % p;
                for (j, &brep) in reps.sextic.iter().enumerate() {
                    let v = (brep * l6 % p) as usize;
                    if sextic_index[v] == u8::MAX {
                        sextic_index[v] = j as u8;
                    }
                }
            }
        }

        Reducer {
            p,
            mod3_is1: reps.p.mod3() == 1,
            quartic_nonzero,
            rep_index,
            linv6,
            sextic_index,
        }
    }

    #[inline]
    pub fn reduce(&self, a: u64, b: u64) -> LookupReduction {
        if a == 0 {
            if !self.mod3_is1 || b == 0 {
                return LookupReduction::ForcedZero;
            }
            return LookupReduction::SexticClass {
                index: self.sextic_index[b as usize] as usize,
            };
        }
        let idx = self.rep_index[a as usize] as usize;
        LookupReduction::QuarticRow {
            rep: self.quartic_nonzero[idx],
            reduced_b: b * self.linv6[a as usize] as u64 % self.p,
        }
    }

    /// Row index into `PrimeTable::rows()` for a nonzero a, with the
    /// reduced column; fast path used by the moment accumulators.
    #[inline]
    pub fn row_slot(&self, a: u64, b: u64) -> (usize, usize) {
        debug_assert!(a != 0);
        (
            self.rep_index[a as usize] as usize,
            (b * self.linv6[a as usize] as u64 % self.p) as usize,
        )
    }

    #[inline]
    pub fn sextic_slot(&self, b: u64) -> Option<usize> {
        if !self.mod3_is1 || b == 0 {
            return None;
        }
        Some(self.sextic_index[b as usize] as usize)
    }
}

struct BlockMeta {
    reps: ResidueClassReps,
    sextic_values: Vec<i16>,
    values_offset: u64,
}

/// Options for [`db_create`]. `threads = 0` uses all available cores.
#[derive(Debug, Clone)]
pub struct CreateOptions {
    pub p_max: u64,
    pub kernel: Kernel,
    pub threads: usize,
}

impl CreateOptions {
    pub fn new(p_max: u64) -> Self {
        CreateOptions { p_max, kernel: Kernel::Naive, threads: 0 }
    }
}

/// An open database: header and index in memory, blocks read on demand.
/// Lookups take `&self` and are safe from any number of threads.
pub struct ApDatabase {
    file: File,
    p_max: u64,
    primes: Vec<u64>,
    offsets: Vec<u64>,
    meta: RwLock<HashMap<u64, Arc<BlockMeta>>>,
}

fn serialize_table(table: &PrimeTable) -> Vec<u8> {
    let p = table.prime().value();
    let mut out = Vec::with_capacity(block_len(p) as usize);
    let reps = table.reps().quartic_nonzero();
    out.extend_from_slice(&(reps.len() as u16).to_le_bytes());
    for &rep in reps {
        out.extend_from_slice(&rep.to_le_bytes());
    }
    for row in table.rows() {
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(table.sextic_values().len() as u16).to_le_bytes());
    for (&brep, &v) in table.reps().sextic.iter().zip(table.sextic_values()) {
        out.extend_from_slice(&brep.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(out.len() as u64, block_len(p));
    out
}

/// Builds every PrimeTable for the odd primes <= p_max and writes the
/// database. The file is byte-identical for any thread count and either
/// kernel. Progress (`done`, `total`) is reported per build batch.
pub fn db_create_with_progress(
    path: &Path,
    opts: &CreateOptions,
    mut progress: impl FnMut(u64, u64),
) -> Result<ApDatabase, DbError> {
    if opts.p_max < 3 {
        return Err(DbError::PmaxTooSmall(opts.p_max));
    }
    if opts.p_max > MAX_TABLE_PRIME {
        return Err(DbError::Kernel(KernelError::ValueBound(opts.p_max)));
    }
    let primes = odd_primes_to(opts.p_max);
    let total = primes.len() as u64;

    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(&MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&0u16.to_le_bytes())?;
    writer.write_all(&opts.p_max.to_le_bytes())?;
    writer.write_all(&total.to_le_bytes())?;

    let mut offset = HEADER_LEN + 16 * total;
    for &p in &primes {
        writer.write_all(&p.to_le_bytes())?;
        writer.write_all(&offset.to_le_bytes())?;
        offset += block_len(p);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| DbError::Pool(e.to_string()))?;
    let mut done = 0u64;
    for chunk in primes.chunks(BUILD_CHUNK) {
        let blocks: Result<Vec<Vec<u8>>, KernelError> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&p| build_prime_table(p, opts.kernel).map(|t| serialize_table(&t)))
                .collect()
        });
        for block in blocks? {
            writer.write_all(&block)?;
        }
        done += chunk.len() as u64;
        progress(done, total);
    }
    writer.flush()?;
    drop(writer);

    db_open(path)
}

/// As [`db_create_with_progress`] without progress reporting.
pub fn db_create(path: &Path, opts: &CreateOptions) -> Result<ApDatabase, DbError> {
    db_create_with_progress(path, opts, |_, _| {})
}

/// Opens a database, validating header and index. Blocks are not read
/// until a lookup or `read_table` needs them.
pub fn db_open(path: &Path) -> Result<ApDatabase, DbError> {
    let mut file = File::open(path)?;
    let mut header = [0u8; HEADER_LEN as usize];
    file.read_exact(&mut header).map_err(|_| DbError::BadMagic)?;
    if header[0..4] != MAGIC {
        return Err(DbError::BadMagic);
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(DbError::UnknownVersion(version));
    }
    let p_max = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap());

    let mut index_bytes = vec![0u8; (16 * count) as usize];
    file.read_exact(&mut index_bytes)
        .map_err(|_| DbError::CorruptHeader("index shorter than prime_count".into()))?;
    let mut primes = Vec::with_capacity(count as usize);
    let mut offsets = Vec::with_capacity(count as usize);
    let mut expect_offset = HEADER_LEN + 16 * count;
    for rec in index_bytes.chunks_exact(16) {
        let p = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let off = u64::from_le_bytes(rec[8..16].try_into().unwrap());
        if let Some(&prev) = primes.last() {
            if p <= prev {
                return Err(DbError::CorruptHeader(format!("index not ascending at p = {p}")));
            }
        }
        if p < 3 || p > p_max || p % 2 == 0 {
            return Err(DbError::CorruptHeader(format!("index prime {p} out of range")));
        }
        if off != expect_offset {
            return Err(DbError::CorruptHeader(format!(
                "block offset for p = {p} is {off}, expected {expect_offset}"
            )));
        }
        expect_offset += block_len(p);
        primes.push(p);
        offsets.push(off);
    }

    let file_len = file.metadata()?.len();
    if file_len < expect_offset {
        // Attribute the truncation to the first block that runs past EOF.
        for (i, &p) in primes.iter().enumerate() {
            let end = offsets[i] + block_len(p);
            if end > file_len {
                return Err(DbError::TruncatedBlock { prime: p });
            }
        }
        return Err(DbError::CorruptHeader("file shorter than index".into()));
    }
    if file_len > expect_offset {
        return Err(DbError::CorruptHeader(format!(
            "{} trailing bytes after last block",
            file_len - expect_offset
        )));
    }

    Ok(ApDatabase {
        file,
        p_max,
        primes,
        offsets,
        meta: RwLock::new(HashMap::new()),
    })
}

impl ApDatabase {
    pub fn p_max(&self) -> u64 {
        self.p_max
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn contains(&self, p: u64) -> bool {
        self.primes.binary_search(&p).is_ok()
    }

    /// Primes of the database inside [lo, hi].
    pub fn primes_in_range(&self, lo: u64, hi: u64) -> &[u64] {
        let start = self.primes.partition_point(|&p| p < lo);
        let end = self.primes.partition_point(|&p| p <= hi);
        &self.primes[start..end]
    }

    fn block_offset(&self, p: u64) -> Result<u64, DbError> {
        let i = self.primes.binary_search(&p).map_err(|_| DbError::PrimeNotInDb(p))?;
        Ok(self.offsets[i])
    }

    fn read_at(&self, buf: &mut [u8], offset: u64, prime: u64) -> Result<(), DbError> {
        self.file
            .read_exact_at(buf, offset)
            .map_err(|_| DbError::TruncatedBlock { prime })
    }

    fn block_meta(&self, p: u64) -> Result<Arc<BlockMeta>, DbError> {
        if let Some(meta) = self.meta.read().unwrap().get(&p) {
            return Ok(meta.clone());
        }
        let off = self.block_offset(p)?;
        let pm = PrimeModulus::new(p).map_err(KernelError::from)?;
        let rc = rep_count(p) as usize;
        let sc = sextic_count(p) as usize;

        let mut head = vec![0u8; 2 + 8 * rc];
        self.read_at(&mut head, off, p)?;
        let stored_rc = u16::from_le_bytes([head[0], head[1]]) as usize;
        if stored_rc != rc {
            return Err(DbError::CorruptBlock {
                prime: p,
                reason: format!("rep_count {stored_rc}, expected {rc}"),
            });
        }
        let mut quartic = vec![0u64];
        for rec in head[2..].chunks_exact(8) {
            let rep = u64::from_le_bytes(rec.try_into().unwrap());
            if rep == 0 || rep >= p || quartic.last() >= Some(&rep) {
                return Err(DbError::CorruptBlock {
                    prime: p,
                    reason: format!("invalid quartic rep {rep}"),
                });
            }
            quartic.push(rep);
        }

        let values_offset = off + 2 + 8 * rc as u64;
        let sextic_off = values_offset + 2 * rc as u64 * p;
        let mut tail = vec![0u8; 2 + 10 * sc];
        self.read_at(&mut tail, sextic_off, p)?;
        let stored_sc = u16::from_le_bytes([tail[0], tail[1]]) as usize;
        if stored_sc != sc {
            return Err(DbError::CorruptBlock {
                prime: p,
                reason: format!("sextic_count {stored_sc}, expected {sc}"),
            });
        }
        let mut sextic = Vec::with_capacity(sc);
        let mut sextic_values = Vec::with_capacity(sc);
        for rec in tail[2..].chunks_exact(10) {
            let brep = u64::from_le_bytes(rec[0..8].try_into().unwrap());
            if brep == 0 || brep >= p {
                return Err(DbError::CorruptBlock {
                    prime: p,
                    reason: format!("invalid sextic rep {brep}"),
                });
            }
            sextic.push(brep);
            sextic_values.push(i16::from_le_bytes([rec[8], rec[9]]));
        }

        let meta = Arc::new(BlockMeta {
            reps: ResidueClassReps { p: pm, quartic, sextic },
            sextic_values,
            values_offset,
        });
        self.meta.write().unwrap().insert(p, meta.clone());
        Ok(meta)
    }

    /// Applies the reduction for (p, a, b) without touching row data.
    pub fn reduce(&self, p: u64, a: u64, b: u64) -> Result<LookupReduction, DbError> {
        let meta = self.block_meta(p)?;
        reduce_with_reps(&meta.reps, a, b)
    }

    /// -a_p of y² = x³ + ax + b over F_p, for any residues a, b.
    pub fn lookup_neg_ap(&self, p: u64, a: u64, b: u64) -> Result<i16, DbError> {
        let meta = self.block_meta(p)?;
        match reduce_with_reps(&meta.reps, a, b)? {
            LookupReduction::ForcedZero => Ok(0),
            LookupReduction::SexticClass { index } => Ok(meta.sextic_values[index]),
            LookupReduction::QuarticRow { rep, reduced_b } => {
                let idx = meta
                    .reps
                    .quartic_nonzero()
                    .iter()
                    .position(|&r| r == rep)
                    .expect("reduce returned a stored rep");
                let cell = meta.values_offset + 2 * (idx as u64 * p + reduced_b);
                let mut buf = [0u8; 2];
                self.read_at(&mut buf, cell, p)?;
                Ok(i16::from_le_bytes(buf))
            }
        }
    }

    /// Reads one whole block into memory.
    pub fn read_table(&self, p: u64) -> Result<PrimeTable, DbError> {
        let meta = self.block_meta(p)?;
        let pm = meta.reps.p;
        let rc = meta.reps.quartic_nonzero().len();
        let mut bytes = vec![0u8; 2 * rc * p as usize];
        self.read_at(&mut bytes, meta.values_offset, p)?;
        let rows: Vec<Vec<i16>> = bytes
            .chunks_exact(2 * p as usize)
            .map(|row| row.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
            .collect();
        let sextic = meta
            .reps
            .sextic
            .iter()
            .copied()
            .zip(meta.sextic_values.iter().copied())
            .collect();
        Ok(PrimeTable::from_parts(pm, meta.reps.quartic_nonzero().to_vec(), rows, sextic))
    }

    /// Per-prime fast reducer built from the stored representative list.
    pub fn reducer(&self, p: u64) -> Result<Reducer, DbError> {
        let meta = self.block_meta(p)?;
        Ok(Reducer::new(&meta.reps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apkernel::{trace_char_sum_cached, ChiTable};
    use tempfile::tempdir;

    #[test]
    fn expected_count_examples() {
        assert_eq!(expected_count(13), 58);
        assert_eq!(expected_count(11), 22);
        assert_eq!(expected_count(7), 20);
        assert_eq!(expected_count(3), 6);
        assert_eq!(expected_count(5), 20);
    }

    #[test]
    fn sieve_is_odd_primes() {
        assert_eq!(odd_primes_to(13), vec![3, 5, 7, 11, 13]);
        assert_eq!(odd_primes_to(3), vec![3]);
        let primes = odd_primes_to(1000);
        assert_eq!(primes.len(), 167);
        assert!(primes.iter().all(|&p| crate::modarith::is_prime(p)));
    }

    #[test]
    fn create_open_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        let db = db_create(&path, &CreateOptions::new(13)).unwrap();
        assert_eq!(db.primes(), &[3, 5, 7, 11, 13]);
        assert_eq!(db.p_max(), 13);

        let total: u64 = db.primes().iter().map(|&p| expected_count(p)).sum();
        assert_eq!(total, 6 + 20 + 20 + 22 + 58);

        for &p in db.primes() {
            let t = db.read_table(p).unwrap();
            assert_eq!(t.stored_count(), expected_count(p));
            let rebuilt = build_prime_table(p, Kernel::Naive).unwrap();
            assert_eq!(t, rebuilt, "reopened block differs at p = {p}");
        }
    }

    #[test]
    fn blocks_bytewise_stable() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        db_create(&path, &CreateOptions::new(13)).unwrap();
        let first = std::fs::read(&path).unwrap();
        // Round-trip the parsed tables through the serializer.
        let db = db_open(&path).unwrap();
        let mut again = first[..(HEADER_LEN + 16 * 5) as usize].to_vec();
        for &p in db.primes() {
            again.extend_from_slice(&serialize_table(&db.read_table(p).unwrap()));
        }
        assert_eq!(first, again);
    }

    #[test]
    fn single_prime_db() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p3.apdb");
        let db = db_create(&path, &CreateOptions::new(3)).unwrap();
        assert_eq!(db.primes(), &[3]);
        assert_eq!(db.read_table(3).unwrap().stored_count(), 6);
    }

    #[test]
    fn open_rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.apdb");
        std::fs::write(&path, b"NOPE0000000000000000000000").unwrap();
        assert!(matches!(db_open(&path), Err(DbError::BadMagic)));
    }

    #[test]
    fn open_rejects_unknown_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v9.apdb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&9u16.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&13u64.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(db_open(&path), Err(DbError::UnknownVersion(9))));
    }

    #[test]
    fn open_names_truncated_prime() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.apdb");
        db_create(&path, &CreateOptions::new(13)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Chop into the last block (p = 13).
        let mut f = File::create(&path).unwrap();
        f.write_all(&bytes[..bytes.len() - 10]).unwrap();
        drop(f);
        match db_open(&path) {
            Err(DbError::TruncatedBlock { prime }) => assert_eq!(prime, 13),
            Err(other) => panic!("expected truncation error, got {other:?}"),
            Ok(_) => panic!("expected truncation error, opened fine"),
        }
    }

    #[test]
    fn reduce_examples() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        let db = db_create(&path, &CreateOptions::new(13)).unwrap();
        assert_eq!(
            db.reduce(13, 3, 1).unwrap(),
            LookupReduction::QuarticRow { rep: 1, reduced_b: 12 }
        );
        assert_eq!(db.reduce(5, 0, 2).unwrap(), LookupReduction::ForcedZero);
        assert_eq!(db.reduce(13, 0, 0).unwrap(), LookupReduction::ForcedZero);
        assert!(matches!(db.reduce(17, 1, 1), Err(DbError::PrimeNotInDb(17))));
    }

    #[test]
    fn lookup_examples() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        let db = db_create(&path, &CreateOptions::new(13)).unwrap();
        assert_eq!(db.lookup_neg_ap(5, 1, 1).unwrap(), 3);
        assert_eq!(db.lookup_neg_ap(7, 0, 1).unwrap(), 4);
        let via_row = db.lookup_neg_ap(13, 1, 12).unwrap();
        assert_eq!(db.lookup_neg_ap(13, 3, 1).unwrap(), via_row);
    }

    #[test]
    fn lookup_matches_trace_exhaustively_small() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        let db = db_create(&path, &CreateOptions::new(61)).unwrap();
        for &p in db.primes() {
            let pm = PrimeModulus::new(p).unwrap();
            let chi = ChiTable::new(pm);
            let reducer = db.reducer(p).unwrap();
            let table = db.read_table(p).unwrap();
            for a in 0..p {
                for b in 0..p {
                    let want = trace_char_sum_cached(&chi, a, b);
                    let got = db.lookup_neg_ap(p, a, b).unwrap() as i64;
                    assert_eq!(got, want, "lookup p={p} a={a} b={b}");
                    let fast = reducer.reduce(a, b).read(&table).unwrap() as i64;
                    assert_eq!(fast, want, "reducer p={p} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn reduce_rep_is_always_stored() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        let db = db_create(&path, &CreateOptions::new(199)).unwrap();
        for &p in db.primes() {
            let reps = modarith::class_reps(PrimeModulus::new(p).unwrap());
            for a in 1..p {
                match db.reduce(p, a, 1).unwrap() {
                    LookupReduction::QuarticRow { rep, .. } => {
                        assert!(reps.quartic_nonzero().contains(&rep))
                    }
                    other => panic!("unexpected reduction {other:?}"),
                }
            }
        }
    }

    #[test]
    fn hasse_bound_on_lookups() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.apdb");
        let db = db_create(&path, &CreateOptions::new(97)).unwrap();
        for &p in db.primes() {
            for a in 0..p.min(20) {
                for b in 0..p.min(20) {
                    let v = db.lookup_neg_ap(p, a, b).unwrap() as i64;
                    assert!(v * v <= 4 * p as i64);
                }
            }
        }
    }
}
