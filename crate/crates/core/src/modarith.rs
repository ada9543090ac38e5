//! Exact modular arithmetic over F_p for odd primes p < 2^31.
//!
//! All residues are `u64` values in `[0, p)`; products go through `u128`
//! intermediates so nothing here can overflow for the supported modulus
//! range. Square roots use the `(p+1)/4` exponent when `p ≡ 3 mod 4` and
//! Cipolla's algorithm in the quadratic extension otherwise.

use thiserror::Error;

/// Largest supported modulus (exclusive). Keeps every product inside u128
/// with a wide margin and every residue table addressable by u32.
pub const MAX_MODULUS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModArithError {
    #[error("modulus {0} is not an odd prime")]
    NotOddPrime(u64),
    #[error("modulus {0} is out of range (must be an odd prime < 2^31)")]
    ModulusTooLarge(u64),
    #[error("0 has no inverse modulo {0}")]
    ZeroInverse(u64),
    #[error("{value} is not a square modulo {p}")]
    NonResidue { value: u64, p: u64 },
    #[error("{value} is not a {k}th power modulo {p}")]
    NotKthPower { value: u64, k: u32, p: u64 },
    #[error("kth_root supports k in {{2, 4}}, got {0}")]
    UnsupportedRootOrder(u32),
}

/// An odd prime modulus together with its residues mod 4 and mod 3,
/// which decide the square-root branch and the sextic-class layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeModulus {
    p: u64,
    p_mod4: u8,
    p_mod3: u8,
}

impl PrimeModulus {
    /// Verifies primality (deterministic Miller-Rabin) and oddness.
    pub fn new(p: u64) -> Result<Self, ModArithError> {
        if p >= MAX_MODULUS {
            return Err(ModArithError::ModulusTooLarge(p));
        }
        if p < 3 || p % 2 == 0 || !is_prime(p) {
            return Err(ModArithError::NotOddPrime(p));
        }
        Ok(PrimeModulus {
            p,
            p_mod4: (p % 4) as u8,
            p_mod3: (p % 3) as u8,
        })
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn mod4(&self) -> u8 {
        self.p_mod4
    }

    #[inline]
    pub fn mod3(&self) -> u8 {
        self.p_mod3
    }
}

/// Deterministic Miller-Rabin. The base set {2, 3, 5, 7} is exact for all
/// n < 3,215,031,751, which covers the full modulus range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7] {
        if n == q {
            return true;
        }
        if n % q == 0 {
            return false;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'base: for a in [2u64, 3, 5, 7] {
        let mut x = pow_raw(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_raw(x, x, n);
            if x == n - 1 {
                continue 'base;
            }
        }
        return false;
    }
    true
}

#[inline(always)]
fn mul_raw(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_raw(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc: u64 = 1;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_raw(acc, base, m);
        }
        base = mul_raw(base, base, m);
        exp >>= 1;
    }
    acc
}

#[inline(always)]
pub fn mul_mod(a: u64, b: u64, p: PrimeModulus) -> u64 {
    mul_raw(a, b, p.p)
}

/// x^e mod p by repeated squaring.
pub fn mod_pow(x: u64, e: u64, p: PrimeModulus) -> u64 {
    debug_assert!(x < p.p);
    pow_raw(x, e, p.p)
}

/// Multiplicative inverse via Fermat's little theorem.
pub fn mod_inv(x: u64, p: PrimeModulus) -> Result<u64, ModArithError> {
    if x == 0 {
        return Err(ModArithError::ZeroInverse(p.p));
    }
    Ok(pow_raw(x, p.p - 2, p.p))
}

/// Legendre symbol (a|p) in {-1, 0, +1} via Euler's criterion.
pub fn legendre(a: u64, p: PrimeModulus) -> i32 {
    if a == 0 {
        return 0;
    }
    let e = pow_raw(a, (p.p - 1) / 2, p.p);
    if e == 1 {
        1
    } else {
        debug_assert_eq!(e, p.p - 1);
        -1
    }
}

/// Element of F_p(ω) with ω² = d, used only by the Cipolla branch.
#[derive(Clone, Copy)]
struct Fp2 {
    re: u64,
    im: u64,
}

fn fp2_mul(x: Fp2, y: Fp2, d: u64, p: u64) -> Fp2 {
    let re = (mul_raw(x.re, y.re, p) + mul_raw(mul_raw(x.im, y.im, p), d, p)) % p;
    let im = (mul_raw(x.re, y.im, p) + mul_raw(x.im, y.re, p)) % p;
    Fp2 { re, im }
}

fn fp2_pow(mut base: Fp2, mut exp: u64, d: u64, p: u64) -> Fp2 {
    let mut acc = Fp2 { re: 1, im: 0 };
    while exp > 0 {
        if exp & 1 == 1 {
            acc = fp2_mul(acc, base, d, p);
        }
        base = fp2_mul(base, base, d, p);
        exp >>= 1;
    }
    acc
}

/// Square root of a quadratic residue, canonicalized to the root ≤ (p-1)/2.
///
/// `p ≡ 3 mod 4` uses the exponent (p+1)/4; `p ≡ 1 mod 4` uses Cipolla's
/// algorithm, scanning a = 0, 1, 2, ... for the first a with a² - x a
/// non-residue (deterministic, so repeated builds are byte-identical).
pub fn sqrt_mod(x: u64, p: PrimeModulus) -> Result<u64, ModArithError> {
    if x == 0 {
        return Ok(0);
    }
    match legendre(x, p) {
        -1 => return Err(ModArithError::NonResidue { value: x, p: p.p }),
        0 => unreachable!("x == 0 handled above"),
        _ => {}
    }
    let m = p.p;
    let root = if p.p_mod4 == 3 {
        pow_raw(x, (m + 1) / 4, m)
    } else {
        let mut a = 0u64;
        let d = loop {
            let d = (mul_raw(a, a, m) + m - x) % m;
            if d != 0 && legendre(d, p) == -1 {
                break d;
            }
            a += 1;
        };
        let r = fp2_pow(Fp2 { re: a, im: 1 }, (m + 1) / 2, d, m);
        debug_assert_eq!(r.im, 0, "Cipolla result must land in F_p");
        r.re
    };
    debug_assert_eq!(mul_raw(root, root, m), x);
    Ok(root.min(m - root))
}

/// True iff x is a k-th power in F_p (0 counts as one).
pub fn is_kth_power(x: u64, k: u32, p: PrimeModulus) -> bool {
    if x == 0 {
        return true;
    }
    let g = gcd(k as u64, p.p - 1);
    pow_raw(x, (p.p - 1) / g, p.p) == 1
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A k-th root of x for k in {2, 4}.
///
/// k = 4 takes two nested square roots. The inner step needs a square root
/// that is itself a quadratic residue: for p ≡ 3 mod 4 exactly one of ±s
/// qualifies; for p ≡ 1 mod 4 both do (χ(-1) = 1) and the canonical smaller
/// one is used, which keeps the result deterministic.
pub fn kth_root(x: u64, k: u32, p: PrimeModulus) -> Result<u64, ModArithError> {
    match k {
        2 => sqrt_mod(x, p),
        4 => {
            if x == 0 {
                return Ok(0);
            }
            let not_fourth = || ModArithError::NotKthPower { value: x, k: 4, p: p.p };
            let s = sqrt_mod(x, p).map_err(|_| not_fourth())?;
            let inner = if legendre(s, p) == 1 { s } else { p.p - s };
            let root = sqrt_mod(inner, p).map_err(|_| not_fourth())?;
            debug_assert_eq!(pow_raw(root, 4, p.p), x);
            Ok(root)
        }
        other => Err(ModArithError::UnsupportedRootOrder(other)),
    }
}

/// Smallest-positive representatives of the quartic (and, for p ≡ 1 mod 3,
/// sextic) power cosets of F_p*. `quartic` always begins with 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueClassReps {
    pub p: PrimeModulus,
    pub quartic: Vec<u64>,
    pub sextic: Vec<u64>,
}

impl ResidueClassReps {
    /// The nonzero quartic representatives (one table row per entry).
    pub fn quartic_nonzero(&self) -> &[u64] {
        &self.quartic[1..]
    }
}

/// Scans a = 1, 2, ... and keeps a whenever it lies in no previously kept
/// coset, so every representative is the least element of its coset.
pub fn class_reps(p: PrimeModulus) -> ResidueClassReps {
    let quartic_count = if p.p_mod4 == 1 { 4 } else { 2 };
    let mut quartic = vec![0u64];
    scan_coset_reps(p, 4, quartic_count, &mut quartic);

    let mut sextic = Vec::new();
    if p.p_mod3 == 1 {
        scan_coset_reps(p, 6, 6, &mut sextic);
    }
    ResidueClassReps { p, quartic, sextic }
}

fn scan_coset_reps(p: PrimeModulus, k: u32, want: usize, out: &mut Vec<u64>) {
    let start = out.len();
    let mut a = 1u64;
    while out.len() - start < want {
        let fresh = out[start..]
            .iter()
            .all(|&r| !is_kth_power(mul_raw(a, pow_raw(r, p.p - 2, p.p), p.p), k, p));
        if fresh {
            out.push(a);
        }
        a += 1;
    }
}
