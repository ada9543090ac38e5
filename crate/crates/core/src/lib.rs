//! Indexed on-disk database of Frobenius traces a_p for elliptic curves
//! y² = x³ + ax + b over F_p, with the moment statistics, bias diagnostics,
//! and exhaustive family-search machinery built on top of it.
//!
//! Modules, bottom up:
//!
//! - [`modarith`] — exact arithmetic in F_p (powering, Legendre symbol,
//!   square roots, k-th power classes).
//! - [`ntt`] — exact integer convolution for the fast trace kernel.
//! - [`apkernel`] — character-sum traces and the reduced per-prime table.
//! - [`apstore`] — the `.apdb` binary format, random-access lookups, and
//!   the isomorphism-class reduction.
//! - [`families`] — one-parameter families A(T), B(T) and their raw and
//!   normalized moments.
//! - [`biasstats`] — running averages, variance traces, histograms,
//!   truncated-normal fits, KS statistics.
//! - [`famsearch`] — exhaustive {0,1}-coefficient family search with the
//!   positivity filter.

pub mod apkernel;
pub mod apstore;
pub mod biasstats;
pub mod families;
pub mod famsearch;
pub mod modarith;
pub mod ntt;

pub use apkernel::{build_prime_table, trace_char_sum, verify_table, Kernel, PrimeTable};
pub use apstore::{db_create, db_open, expected_count, ApDatabase, CreateOptions, LookupReduction};
pub use families::{moment_series, parse_family, Family, IntPolynomial, MomentSeries};
pub use modarith::PrimeModulus;
