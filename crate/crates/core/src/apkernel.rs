//! Per-prime trace tables: the Legendre character sum for one curve and the
//! reduced table of -a_p values over all isomorphism-class representatives.
//!
//! A table stores, for each nonzero quartic representative a, the full row
//! -a_p(y² = x³ + ax + b) for b = 0..p-1, plus six sextic entries for the
//! a = 0 column when p ≡ 1 mod 3. Every other curve reduces to one of these
//! rows, so (4p if p ≡ 1 mod 4 else 2p) + (6 if p ≡ 1 mod 3 else 0) values
//! suffice instead of p².

use crate::modarith::{self, ModArithError, PrimeModulus, ResidueClassReps};
use crate::ntt;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Largest prime whose traces fit the signed 16-bit storage format
/// (2*sqrt(p) <= 32767).
pub const MAX_TABLE_PRIME: u64 = 268_419_072;

/// Largest prime the convolution kernel accepts: the padded transform of
/// length >= 2p-1 must fit the NTT's 2^23 root-of-unity order.
pub const MAX_CONVOLUTION_PRIME: u64 = (ntt::MAX_NTT_LEN as u64 + 1) / 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error(transparent)]
    ModArith(#[from] ModArithError),
    #[error("prime {0} exceeds the 16-bit trace bound (max {MAX_TABLE_PRIME})")]
    ValueBound(u64),
    #[error("prime {0} exceeds the convolution kernel's transform length (max prime {MAX_CONVOLUTION_PRIME}); use the naive kernel")]
    ConvolutionLength(u64),
}

/// Which row builder to use. Both produce bit-identical tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// O(p²) per row: table lookups of the Legendre character.
    #[default]
    Naive,
    /// O(p log p) per row: exact NTT cross-correlation of the cubic's
    /// multiplicity function with the character table.
    Convolution,
}

impl std::str::FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Kernel::Naive),
            "convolution" => Ok(Kernel::Convolution),
            other => Err(format!("unknown kernel '{other}' (expected naive or convolution)")),
        }
    }
}

/// Legendre character table for one prime, extended to index 2p-2 so the
/// hot loop can look up chi(g + b) without reducing mod p.
pub struct ChiTable {
    p: u64,
    ext: Vec<i8>,
}

impl ChiTable {
    pub fn new(p: PrimeModulus) -> Self {
        let m = p.value() as usize;
        let mut vals = vec![-1i8; m];
        vals[0] = 0;
        let mut x = 1u64;
        while x < p.value() {
            vals[(x * x % p.value()) as usize] = 1;
            x += 1;
        }
        let mut ext = vals;
        ext.extend_from_within(..m - 1);
        ChiTable { p: p.value(), ext }
    }

    #[inline]
    pub fn prime(&self) -> u64 {
        self.p
    }

    /// chi(v) for v already reduced below 2p-1.
    #[inline(always)]
    pub fn chi_unreduced(&self, v: u64) -> i32 {
        self.ext[v as usize] as i32
    }

    #[inline]
    pub fn chi(&self, v: u64) -> i32 {
        self.ext[(v % self.p) as usize] as i32
    }
}

/// g(x) = x³ + ax mod p for x = 0..p-1.
fn cubic_values(a: u64, p: u64) -> Vec<u32> {
    (0..p)
        .map(|x| {
            let x2 = x * x % p;
            ((x2 * x + a * x) % p) as u32
        })
        .collect()
}

/// -a_p = sum over x of chi(x³ + ax + b). Defined for every (a, b),
/// singular curves included.
pub fn trace_char_sum(a: u64, b: u64, p: PrimeModulus) -> i64 {
    trace_char_sum_cached(&ChiTable::new(p), a, b)
}

/// As [`trace_char_sum`], reusing a prebuilt character table.
pub fn trace_char_sum_cached(chi: &ChiTable, a: u64, b: u64) -> i64 {
    debug_assert!(a < chi.p && b < chi.p);
    let mut sum = 0i64;
    for x in 0..chi.p {
        let x2 = x * x % chi.p;
        sum += chi.chi_unreduced((x2 * x + a * x) % chi.p + b) as i64;
    }
    sum
}

/// The full row -a_p(x³ + ax + b) for b = 0..p-1, O(p²).
pub fn trace_row(chi: &ChiTable, a: u64) -> Vec<i32> {
    let g = cubic_values(a, chi.p);
    naive_row(chi, &g)
}

fn naive_row(chi: &ChiTable, g: &[u32]) -> Vec<i32> {
    let p = chi.p;
    let mut row = vec![0i32; p as usize];
    for (b, out) in row.iter_mut().enumerate() {
        let mut sum = 0i32;
        for &gv in g {
            sum += chi.chi_unreduced(gv as u64 + b as u64);
        }
        *out = sum;
    }
    row
}

/// Same row via exact cyclic cross-correlation: row[b] = sum over v of
/// N(v) chi(v + b) where N(v) = #{x : x³ + ax = v}. Computed as the linear
/// NTT convolution of the index-reversed multiplicity function with the
/// character table, folded back to length p. The working modulus exceeds
/// twice any folded value (|row[b]| <= sum N = p), so recovery of the
/// signed result is exact.
fn convolution_row(chi: &ChiTable, g: &[u32]) -> Vec<i32> {
    let p = chi.p as usize;
    let m = (2 * p - 1).next_power_of_two();

    let mut mult = vec![0u64; m];
    for &v in g {
        let rev = if v == 0 { 0 } else { p - v as usize };
        mult[rev] += 1;
    }
    let mut chi_res = vec![0u64; m];
    for (v, slot) in chi_res.iter_mut().enumerate().take(p) {
        *slot = ntt::from_signed(chi.chi_unreduced(v as u64) as i64);
    }

    ntt::forward(&mut mult);
    ntt::forward(&mut chi_res);
    ntt::pointwise_mul(&mut mult, &chi_res);
    ntt::inverse(&mut mult);

    (0..p)
        .map(|b| {
            let folded = (mult[b] + mult[b + p]) % ntt::NTT_MODULUS;
            ntt::to_signed(folded) as i32
        })
        .collect()
}

/// The reduced -a_p table for one prime: one row per nonzero quartic
/// representative plus the sextic entries of the a = 0 column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeTable {
    p: PrimeModulus,
    reps: ResidueClassReps,
    rows: Vec<Vec<i16>>,
    sextic_values: Vec<i16>,
}

impl PrimeTable {
    pub fn prime(&self) -> PrimeModulus {
        self.p
    }

    pub fn reps(&self) -> &ResidueClassReps {
        &self.reps
    }

    /// One row per entry of `reps().quartic_nonzero()`, each of length p.
    pub fn rows(&self) -> &[Vec<i16>] {
        &self.rows
    }

    /// One value per entry of `reps().sextic` (empty unless p ≡ 1 mod 3).
    pub fn sextic_values(&self) -> &[i16] {
        &self.sextic_values
    }

    /// -a_p for the stored representative curve y² = x³ + rep·x + b.
    pub fn row_value(&self, rep: u64, b: u64) -> Option<i16> {
        let idx = self.reps.quartic_nonzero().iter().position(|&r| r == rep)?;
        self.rows[idx].get(b as usize).copied()
    }

    pub fn stored_count(&self) -> u64 {
        self.rows.iter().map(|r| r.len() as u64).sum::<u64>() + self.sextic_values.len() as u64
    }

    /// Reassembles a table from deserialized parts (storage layer only);
    /// shape is validated, values are trusted until `verify_table`.
    pub(crate) fn from_parts(
        p: PrimeModulus,
        quartic_nonzero: Vec<u64>,
        rows: Vec<Vec<i16>>,
        sextic: Vec<(u64, i16)>,
    ) -> Self {
        debug_assert_eq!(quartic_nonzero.len(), rows.len());
        let mut quartic = vec![0u64];
        quartic.extend_from_slice(&quartic_nonzero);
        let (sextic_reps, sextic_values) = sextic.into_iter().unzip();
        PrimeTable {
            p,
            reps: ResidueClassReps { p, quartic, sextic: sextic_reps },
            rows,
            sextic_values,
        }
    }
}

/// Stored-value count mandated by the reduction: (4p or 2p) + (6 or 0).
pub fn expected_stored_count(p: PrimeModulus) -> u64 {
    let quartic = if p.mod4() == 1 { 4 * p.value() } else { 2 * p.value() };
    quartic + if p.mod3() == 1 { 6 } else { 0 }
}

/// Builds the reduced table for `p` with the chosen kernel. Output is
/// identical for both kernels and independent of thread count.
pub fn build_prime_table(p: u64, kernel: Kernel) -> Result<PrimeTable, KernelError> {
    let pm = PrimeModulus::new(p)?;
    if p > MAX_TABLE_PRIME {
        return Err(KernelError::ValueBound(p));
    }
    if kernel == Kernel::Convolution && p > MAX_CONVOLUTION_PRIME {
        return Err(KernelError::ConvolutionLength(p));
    }

    let reps = modarith::class_reps(pm);
    let chi = ChiTable::new(pm);
    let hasse_sq = 4 * p as i64;

    let mut rows = Vec::with_capacity(reps.quartic_nonzero().len());
    for &a in reps.quartic_nonzero() {
        let g = cubic_values(a, p);
        let wide = match kernel {
            Kernel::Naive => naive_row(&chi, &g),
            Kernel::Convolution => convolution_row(&chi, &g),
        };
        let row: Vec<i16> = wide
            .iter()
            .map(|&v| {
                debug_assert!((v as i64) * (v as i64) <= hasse_sq, "Hasse violation at a={a}");
                v as i16
            })
            .collect();
        rows.push(row);
    }

    let sextic_values = reps
        .sextic
        .iter()
        .map(|&b| trace_char_sum_cached(&chi, 0, b) as i16)
        .collect();

    Ok(PrimeTable { p: pm, reps, rows, sextic_values })
}

/// Outcome of [`verify_table`]: structural checks plus sampled
/// re-derivations, with the first counterexample if any check failed.
#[derive(Debug, Clone)]
pub struct TableVerification {
    pub passed: bool,
    pub checks_run: u64,
    pub first_failure: Option<String>,
}

/// Checks the Hasse bound on every entry, the storage-count formula, the
/// b ↔ p-b row symmetry when p ≡ 1 mod 4, and re-derives `sample_size`
/// deterministically chosen entries through the character sum.
pub fn verify_table(table: &PrimeTable, sample_size: u64) -> TableVerification {
    let p = table.p.value();
    let mut checks = 0u64;
    fn fail(checks: u64, msg: String) -> TableVerification {
        TableVerification { passed: false, checks_run: checks, first_failure: Some(msg) }
    }

    checks += 1;
    let want = expected_stored_count(table.p);
    if table.stored_count() != want {
        return fail(checks, format!("p={p}: stored count {} != {want}", table.stored_count()));
    }

    let hasse_sq = 4 * p as i64;
    for (idx, row) in table.rows.iter().enumerate() {
        let rep = table.reps.quartic_nonzero()[idx];
        for (b, &v) in row.iter().enumerate() {
            checks += 1;
            if (v as i64) * (v as i64) > hasse_sq {
                return fail(checks, format!("p={p}: Hasse violation at (a={rep}, b={b}): {v}"));
            }
        }
    }
    for (j, &v) in table.sextic_values.iter().enumerate() {
        checks += 1;
        if (v as i64) * (v as i64) > hasse_sq {
            return fail(checks, format!("p={p}: Hasse violation at sextic class {j}: {v}"));
        }
    }

    if table.p.mod4() == 1 {
        for (idx, row) in table.rows.iter().enumerate() {
            let rep = table.reps.quartic_nonzero()[idx];
            for b in 0..p {
                checks += 1;
                let mirror = ((p - b) % p) as usize;
                if row[b as usize] != row[mirror] {
                    return fail(checks, format!(
                        "p={p}: b <-> p-b symmetry broken at (a={rep}, b={b})"
                    ));
                }
            }
        }
    }

    let chi = ChiTable::new(table.p);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4150_4442 ^ p);
    let row_cells: u64 = table.rows.iter().map(|r| r.len() as u64).sum();
    let total = row_cells + table.sextic_values.len() as u64;
    for _ in 0..sample_size {
        checks += 1;
        let cell = rng.next_u64() % total;
        let (a, b, stored) = if cell < row_cells {
            let idx = (cell / p) as usize;
            let b = cell % p;
            (table.reps.quartic_nonzero()[idx], b, table.rows[idx][b as usize])
        } else {
            let j = (cell - row_cells) as usize;
            (0, table.reps.sextic[j], table.sextic_values[j])
        };
        let fresh = trace_char_sum_cached(&chi, a, b);
        if fresh != stored as i64 {
            return fail(checks, format!(
                "p={p}: re-derivation mismatch at (a={a}, b={b}): stored {stored}, computed {fresh}"
            ));
        }
    }

    TableVerification { passed: true, checks_run: checks, first_failure: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::{is_prime, mod_pow, mul_mod};

    fn pm(p: u64) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace_char_sum(1, 1, pm(5)), 3);
        assert_eq!(trace_char_sum(0, 2, pm(5)), 0);
        assert_eq!(trace_char_sum(0, 1, pm(7)), 4);
    }

    #[test]
    fn zero_rules() {
        for p in [5u64, 11, 17, 23, 29].map(pm) {
            assert_eq!(p.mod3(), 2);
            let chi = ChiTable::new(p);
            for b in 0..p.value() {
                assert_eq!(trace_char_sum_cached(&chi, 0, b), 0, "p={} b={b}", p.value());
            }
        }
        for p in [3u64, 7, 13, 19, 31].map(pm) {
            assert_eq!(trace_char_sum(0, 0, p), 0);
        }
    }

    #[test]
    fn stored_counts() {
        assert_eq!(build_prime_table(13, Kernel::Naive).unwrap().stored_count(), 58);
        assert_eq!(build_prime_table(11, Kernel::Naive).unwrap().stored_count(), 22);
        let t = build_prime_table(7, Kernel::Naive).unwrap();
        assert_eq!(t.stored_count(), 20);
        for row in t.rows() {
            for &v in row {
                assert!((v as i64) * (v as i64) <= 28);
            }
        }
    }

    #[test]
    fn kernels_agree_small() {
        for p in (3..=199).filter(|&p| is_prime(p)) {
            let a = build_prime_table(p, Kernel::Naive).unwrap();
            let b = build_prime_table(p, Kernel::Convolution).unwrap();
            assert_eq!(a, b, "p={p}");
        }
    }

    #[test]
    fn convolution_rejects_oversized_prime() {
        // 4194319 is the first prime past the transform bound.
        assert!(matches!(
            build_prime_table(4_194_319, Kernel::Convolution),
            Err(KernelError::ConvolutionLength(_))
        ));
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(build_prime_table(2, Kernel::Naive).is_err());
        assert!(build_prime_table(15, Kernel::Naive).is_err());
    }

    #[test]
    fn verify_passes_and_catches_corruption() {
        let t = build_prime_table(13, Kernel::Naive).unwrap();
        let report = verify_table(&t, 58);
        assert!(report.passed, "{:?}", report.first_failure);

        let mut corrupt = t.clone();
        let hasse_breaker = (2.0 * (13.0f64).sqrt()).ceil() as i16 + 1;
        corrupt.rows[0][5] = hasse_breaker;
        let report = verify_table(&corrupt, 0);
        assert!(!report.passed);
        assert!(report.first_failure.unwrap().contains("Hasse"));

        // A value that respects Hasse but is wrong: caught by re-derivation
        // (or, for p = 1 mod 4, by the mirror symmetry check).
        let mut subtle = t.clone();
        let old = subtle.rows[1][3];
        subtle.rows[1][3] = if old == 1 { -1 } else { 1 };
        let report = verify_table(&subtle, 58);
        assert!(!report.passed);

        let report = verify_table(&build_prime_table(11, Kernel::Convolution).unwrap(), 22);
        assert!(report.passed);
    }

    #[test]
    fn isomorphism_invariance() {
        // trace(a, b) == trace(a l^-4, b l^-6) for every unit l.
        for p in (3..=199).filter(|&p| is_prime(p)).map(pm) {
            let chi = ChiTable::new(p);
            let m = p.value();
            let full: Vec<Vec<i32>> = (0..m).map(|a| trace_row(&chi, a)).collect();
            for l in 1..m {
                let li4 = mod_pow(mod_pow(l, 4, p), m - 2, p);
                let li6 = mod_pow(mod_pow(l, 6, p), m - 2, p);
                for a in 1..m {
                    let a2 = mul_mod(a, li4, p);
                    for b in 0..m {
                        assert_eq!(
                            full[a as usize][b as usize],
                            full[a2 as usize][mul_mod(b, li6, p) as usize],
                            "p={m} a={a} b={b} l={l}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mirror_symmetry_mod4() {
        for p in [5u64, 13, 17, 29, 37, 41] {
            let t = build_prime_table(p, Kernel::Naive).unwrap();
            for row in t.rows() {
                for b in 0..p {
                    assert_eq!(row[b as usize], row[((p - b) % p) as usize]);
                }
            }
        }
    }
}
