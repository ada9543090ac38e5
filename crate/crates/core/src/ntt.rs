//! Exact integer convolution via a number-theoretic transform modulo
//! 998244353 = 119 * 2^23 + 1 (primitive root 3).
//!
//! Supports power-of-two lengths up to 2^23. Inputs are reduced residues;
//! callers that need signed results recover them from the centered
//! representative as long as magnitudes stay below (modulus-1)/2.

/// NTT-friendly working modulus.
pub const NTT_MODULUS: u64 = 998_244_353;
const NTT_ROOT: u64 = 3;
/// Largest supported transform length.
pub const MAX_NTT_LEN: usize = 1 << 23;

#[inline(always)]
fn mul(a: u64, b: u64) -> u64 {
    (a as u128 * b as u128 % NTT_MODULUS as u128) as u64
}

fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

fn bit_reverse_permute(data: &mut [u64]) {
    let n = data.len();
    let shift = usize::BITS - n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> shift;
        if i < j {
            data.swap(i, j);
        }
    }
}

fn transform(data: &mut [u64], invert: bool) {
    let n = data.len();
    assert!(n.is_power_of_two() && n <= MAX_NTT_LEN);
    bit_reverse_permute(data);
    let mut len = 2;
    while len <= n {
        let mut w = pow(NTT_ROOT, (NTT_MODULUS - 1) / len as u64);
        if invert {
            w = pow(w, NTT_MODULUS - 2);
        }
        for block in data.chunks_exact_mut(len) {
            let (lo, hi) = block.split_at_mut(len / 2);
            let mut twiddle = 1u64;
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let t = mul(twiddle, *b);
                let u = *a;
                *a = if u + t >= NTT_MODULUS { u + t - NTT_MODULUS } else { u + t };
                *b = if u >= t { u - t } else { u + NTT_MODULUS - t };
                twiddle = mul(twiddle, w);
            }
        }
        len <<= 1;
    }
    if invert {
        let n_inv = pow(n as u64, NTT_MODULUS - 2);
        for v in data.iter_mut() {
            *v = mul(*v, n_inv);
        }
    }
}

pub fn forward(data: &mut [u64]) {
    transform(data, false);
}

pub fn inverse(data: &mut [u64]) {
    transform(data, true);
}

/// Pointwise product of two spectra, in place on `a`.
pub fn pointwise_mul(a: &mut [u64], b: &[u64]) {
    assert_eq!(a.len(), b.len());
    for (x, &y) in a.iter_mut().zip(b) {
        *x = mul(*x, y);
    }
}

/// Centered signed representative of a residue.
#[inline]
pub fn to_signed(v: u64) -> i64 {
    if v > NTT_MODULUS / 2 {
        v as i64 - NTT_MODULUS as i64
    } else {
        v as i64
    }
}

/// Maps a signed value with |v| < modulus/2 to its residue.
#[inline]
pub fn from_signed(v: i64) -> u64 {
    v.rem_euclid(NTT_MODULUS as i64) as u64
}
