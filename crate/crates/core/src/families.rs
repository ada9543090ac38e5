//! One-parameter families y² = x³ + A(T)x + B(T) and their Frobenius-trace
//! moments against a database.
//!
//! Raw moments are exact 128-bit integers (the termwise Hasse bound keeps
//! |A_n(p)| <= 2^n p^{(n+2)/2}, far inside i128 for p <= 250,000 and
//! n <= 10); normalization happens once at the end in double precision.

use crate::apstore::{ApDatabase, DbError, Reducer};
use crate::modarith::PrimeModulus;
use num_bigint::BigInt;
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use thiserror::Error;

/// Highest supported moment order.
pub const MAX_ORDER: u32 = 10;

/// Catalan numbers C_0..C_5; C_n is the leading coefficient of the
/// 2n-th moment.
pub const CATALAN: [u64; 6] = [1, 1, 2, 5, 14, 42];

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("malformed coefficient '{0}'")]
    BadCoefficient(String),
    #[error("family spec must be 'a0,a1,...;b0,b1,...' with both sides present")]
    MissingSide,
    #[error("both polynomials are zero")]
    BothZero,
    #[error("family is a singular surface (4A³ + 27B² ≡ 0)")]
    SingularSurface,
    #[error("moment order {0} out of range 1..={MAX_ORDER}")]
    UnsupportedOrder(u32),
    #[error("normalization is defined for even orders, got {0}")]
    OddOrder(u32),
    #[error("no primes in range after filters")]
    EmptyRange,
    #[error(transparent)]
    Db(#[from] DbError),
}

/// Integer polynomial, coefficients ascending. Trailing zeros are trimmed;
/// the zero polynomial has no coefficients and degree `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntPolynomial {
    coeffs: Vec<i64>,
}

impl IntPolynomial {
    pub fn new(mut coeffs: Vec<i64>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        IntPolynomial { coeffs }
    }

    pub fn zero() -> Self {
        IntPolynomial { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn parse(s: &str) -> Result<Self, FamilyError> {
        if s.trim().is_empty() {
            return Err(FamilyError::MissingSide);
        }
        let coeffs = s
            .split(',')
            .map(|c| c.trim().parse::<i64>().map_err(|_| FamilyError::BadCoefficient(c.into())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(IntPolynomial::new(coeffs))
    }

    /// Coefficients reduced into [0, p); evaluation then needs no signed
    /// arithmetic.
    pub(crate) fn reduced_mod(&self, p: PrimeModulus) -> Vec<u64> {
        self.coeffs.iter().map(|&c| c.rem_euclid(p.value() as i64) as u64).collect()
    }

    /// A(t) mod p, exact for any |coefficient| < 2^63 and p < 2^31.
    pub fn eval_mod(&self, t: u64, p: PrimeModulus) -> u64 {
        eval_reduced(&self.reduced_mod(p), t, p.value())
    }
}

#[inline]
fn eval_reduced(coeffs: &[u64], t: u64, p: u64) -> u64 {
    let mut acc = 0u64;
    for &c in coeffs.iter().rev() {
        acc = (acc * t + c) % p;
    }
    acc
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A family y² = x³ + A(T)x + B(T) with its surface validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub a: IntPolynomial,
    pub b: IntPolynomial,
    pub is_singular_surface: bool,
    pub has_constant_j: bool,
}

impl Family {
    pub fn new(a: IntPolynomial, b: IntPolynomial) -> Self {
        let (is_singular_surface, has_constant_j) = surface_checks(&a, &b);
        Family { a, b, is_singular_surface, has_constant_j }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{}", self.a, self.b)
    }
}

/// Parses "c0,c1,...;d0,d1,..." (A before the semicolon, B after).
pub fn parse_family(spec: &str) -> Result<Family, FamilyError> {
    let (a_part, b_part) = spec.split_once(';').ok_or(FamilyError::MissingSide)?;
    let a = IntPolynomial::parse(a_part)?;
    let b = IntPolynomial::parse(b_part)?;
    if a.is_zero() && b.is_zero() {
        return Err(FamilyError::BothZero);
    }
    Ok(Family::new(a, b))
}

/// (A(t) mod p, B(t) mod p).
pub fn eval_family_mod(f: &Family, t: u64, p: PrimeModulus) -> (u64, u64) {
    (f.a.eval_mod(t, p), f.b.eval_mod(t, p))
}

// Exact polynomial arithmetic for the surface flags; coefficients of
// 4A³ + 27B² can overflow i64, hence BigInt.

fn big_poly(p: &IntPolynomial) -> Vec<BigInt> {
    p.coeffs.iter().map(|&c| BigInt::from(c)).collect()
}

fn poly_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigInt::from(0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_scale(a: &[BigInt], k: i64) -> Vec<BigInt> {
    a.iter().map(|x| x * k).collect()
}

fn poly_add(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let mut out = vec![BigInt::from(0); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn poly_is_zero(a: &[BigInt]) -> bool {
    a.iter().all(|x| x.sign() == num_bigint::Sign::NoSign)
}

/// True iff the polynomials are linearly dependent over Q (the zero
/// polynomial is proportional to anything).
fn proportional(a: &[BigInt], b: &[BigInt]) -> bool {
    let n = a.len().max(b.len());
    let zero = BigInt::from(0);
    let at = |v: &[BigInt], i: usize| v.get(i).unwrap_or(&zero).clone();
    for i in 0..n {
        for j in (i + 1)..n {
            if at(a, i) * at(b, j) != at(a, j) * at(b, i) {
                return false;
            }
        }
    }
    true
}

/// (is_singular_surface, has_constant_j), by exact integer arithmetic:
/// the surface is singular iff 4A³ + 27B² is the zero polynomial, and
/// j(T) = 1728·4A³ / (4A³ + 27B²) is constant iff numerator and
/// denominator are proportional.
pub fn surface_checks(a: &IntPolynomial, b: &IntPolynomial) -> (bool, bool) {
    let ab = big_poly(a);
    let bb = big_poly(b);
    let a3 = poly_mul(&poly_mul(&ab, &ab), &ab);
    let b2 = poly_mul(&bb, &bb);
    let disc = poly_add(&poly_scale(&a3, 4), &poly_scale(&b2, 27));
    let singular = poly_is_zero(&disc);
    let constant_j = proportional(&a3, &disc);
    (singular, constant_j)
}

/// One prime's worth of moments.
#[derive(Debug, Clone)]
pub struct MomentRow {
    pub p: u64,
    /// Raw A_n(p), parallel to the series' order list.
    pub raw: Vec<i128>,
    /// (B_{2n}, B'_{2n}) for even orders, `None` for odd ones.
    pub normalized: Vec<Option<(f64, f64)>>,
}

/// Per-prime raw and normalized moments of one family.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub family: Family,
    pub orders: Vec<u32>,
    pub rows: Vec<MomentRow>,
}

impl MomentSeries {
    /// The (p, B₂) sequence, if order 2 was requested.
    pub fn b2_series(&self) -> Option<Vec<(u64, f64)>> {
        let idx = self.orders.iter().position(|&o| o == 2)?;
        Some(
            self.rows
                .iter()
                .map(|r| (r.p, r.normalized[idx].expect("order 2 is even").0))
                .collect(),
        )
    }

    /// First-moment sequence (p, A₁(p)), if order 1 was requested.
    pub fn first_moments(&self) -> Option<Vec<(u64, i128)>> {
        let idx = self.orders.iter().position(|&o| o == 1)?;
        Some(self.rows.iter().map(|r| (r.p, r.raw[idx])).collect())
    }

    /// CSV emission: header `p,n,raw,B,Bprime`, one row per (prime, order).
    /// Odd orders leave the normalized fields empty.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "p,n,raw,B,Bprime")?;
        for row in &self.rows {
            for (i, &order) in self.orders.iter().enumerate() {
                match row.normalized[i] {
                    Some((b, bp)) => writeln!(w, "{},{},{},{},{}", row.p, order, row.raw[i], b, bp)?,
                    None => writeln!(w, "{},{},{},,", row.p, order, row.raw[i])?,
                }
            }
        }
        Ok(())
    }
}

fn float_pow(base: f64, exp: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// (B_{2n}, B'_{2n}) from the raw even moment: B = (raw/C_n - p^{n+1}) /
/// p^{n+1/2} and B' = C_n · B (the two agree by algebra; computing B' as a
/// product keeps the pair consistent to the last bit).
pub fn normalized_moment(raw: i128, order: u32, p: u64) -> Result<(f64, f64), FamilyError> {
    if order == 0 || order > MAX_ORDER {
        return Err(FamilyError::UnsupportedOrder(order));
    }
    if order % 2 != 0 {
        return Err(FamilyError::OddOrder(order));
    }
    let n = order / 2;
    let cn = CATALAN[n as usize] as f64;
    let pf = p as f64;
    let leading = float_pow(pf, n + 1);
    let scale = float_pow(pf, n) * pf.sqrt();
    let b = (raw as f64 / cn - leading) / scale;
    Ok((b, cn * b))
}

/// B₂(p) = (A₂(p) - p²) / p^{3/2}.
pub fn normalized_second_moment(raw: i128, p: u64) -> f64 {
    normalized_moment(raw, 2, p).expect("order 2 is valid").0
}

fn check_orders(orders: &[u32]) -> Result<Vec<u32>, FamilyError> {
    let mut sorted: Vec<u32> = orders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(FamilyError::UnsupportedOrder(0));
    }
    for &o in &sorted {
        if o == 0 || o > MAX_ORDER {
            return Err(FamilyError::UnsupportedOrder(o));
        }
    }
    Ok(sorted)
}

/// All requested raw moments of a family at one prime, in a single pass
/// over t = 0..p-1 (singular specializations included).
pub fn moments_at_prime(
    table: &crate::apkernel::PrimeTable,
    reducer: &Reducer,
    f: &Family,
    orders: &[u32],
) -> Vec<i128> {
    let pm = table.prime();
    let p = pm.value();
    let a_red = f.a.reduced_mod(pm);
    let b_red = f.b.reduced_mod(pm);
    let max_order = *orders.iter().max().expect("orders checked") as usize;
    let rows = table.rows();
    let sextic = table.sextic_values();

    let mut acc = vec![0i128; orders.len()];
    for t in 0..p {
        let a = eval_reduced(&a_red, t, p);
        let b = eval_reduced(&b_red, t, p);
        let neg_ap = if a == 0 {
            match reducer.sextic_slot(b) {
                Some(j) => sextic[j] as i64,
                None => 0,
            }
        } else {
            let (row, col) = reducer.row_slot(a, b);
            rows[row][col] as i64
        };
        let a_t = -(neg_ap as i128);
        let mut powers = [1i128; MAX_ORDER as usize + 1];
        for k in 1..=max_order {
            powers[k] = powers[k - 1] * a_t;
        }
        for (slot, &o) in acc.iter_mut().zip(orders) {
            *slot += powers[o as usize];
        }
    }
    acc
}

/// Raw n-th moment A_n(p) = sum over t of a_t(p)^n, exact.
pub fn raw_moment(db: &ApDatabase, f: &Family, n: u32, p: u64) -> Result<i128, FamilyError> {
    let orders = check_orders(&[n])?;
    let table = db.read_table(p)?;
    let reducer = db.reducer(p)?;
    Ok(moments_at_prime(&table, &reducer, f, &orders)[0])
}

/// Computes raw (and, for even orders, normalized) moments for every
/// database prime in [p_lo, p_hi], after dropping the first `skip` primes.
/// Primes are processed in parallel, one block in memory per worker, and
/// results are ordered by prime.
pub fn moment_series(
    db: &ApDatabase,
    f: &Family,
    orders: &[u32],
    p_lo: u64,
    p_hi: u64,
    skip: usize,
) -> Result<MomentSeries, FamilyError> {
    if f.is_singular_surface {
        return Err(FamilyError::SingularSurface);
    }
    let orders = check_orders(orders)?;
    let primes = db.primes_in_range(p_lo, p_hi);
    if skip >= primes.len() {
        return Err(FamilyError::EmptyRange);
    }
    let primes = &primes[skip..];

    let rows: Result<Vec<MomentRow>, FamilyError> = primes
        .par_iter()
        .map(|&p| {
            let table = db.read_table(p)?;
            let reducer = db.reducer(p)?;
            let raw = moments_at_prime(&table, &reducer, f, &orders);
            let normalized = orders
                .iter()
                .zip(&raw)
                .map(|(&o, &r)| {
                    if o % 2 == 0 {
                        Some(normalized_moment(r, o, p).expect("even order in range"))
                    } else {
                        None
                    }
                })
                .collect();
            Ok(MomentRow { p, raw, normalized })
        })
        .collect();

    Ok(MomentSeries { family: f.clone(), orders, rows: rows? })
}

/// Direct reduction-free lookup used in tests and verification paths:
/// reduce through the database on every call.
pub fn neg_ap_of(db: &ApDatabase, f: &Family, t: u64, p: u64) -> Result<i16, FamilyError> {
    let pm = PrimeModulus::new(p).map_err(crate::apkernel::KernelError::from).map_err(DbError::from)?;
    let (a, b) = eval_family_mod(f, t, pm);
    Ok(db.lookup_neg_ap(p, a, b)?)
}
