//! Exhaustive search over one-parameter families with small coefficient
//! sets, filtered by how often the running average of the normalized
//! second moment stays positive.

use crate::apstore::{ApDatabase, DbError};
use crate::biasstats::running_averages;
use crate::families::{
    moment_series, moments_at_prime, normalized_second_moment, Family, FamilyError, IntPolynomial,
};
use rayon::prelude::*;
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Families per checkpointed batch during [`search`].
const SEARCH_BATCH: usize = 256;
/// Enumeration cap on the polynomial degree.
pub const MAX_SEARCH_DEGREE: usize = 10;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("max_degree {0} exceeds the search cap of {MAX_SEARCH_DEGREE}")]
    DegreeTooLarge(usize),
    #[error("coefficient set is empty")]
    EmptyCoefficients,
    #[error("positivity threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("search bound {bound} exceeds the database p_max {p_max}")]
    BoundExceedsDb { bound: u64, p_max: u64 },
    #[error("family {0} is a singular surface")]
    SingularFamily(String),
    #[error("checkpoint I/O: {0}")]
    Checkpoint(std::io::Error),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Search configuration. Defaults follow the exhaustive degree <= 5,
/// {0,1}-coefficient sweep with the 95% positivity filter at p <= 1000.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub max_degree: usize,
    pub coefficients: Vec<i64>,
    pub filter_p_max: u64,
    pub positivity_threshold: f64,
    /// Re-evaluate survivors' running averages up to this larger bound.
    pub second_stage_p_max: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_degree: 5,
            coefficients: vec![0, 1],
            filter_p_max: 1000,
            positivity_threshold: 0.95,
            second_stage_p_max: None,
        }
    }
}

impl SearchConfig {
    fn validate(&self, db: &ApDatabase) -> Result<Vec<i64>, SearchError> {
        if self.max_degree > MAX_SEARCH_DEGREE {
            return Err(SearchError::DegreeTooLarge(self.max_degree));
        }
        if self.coefficients.is_empty() {
            return Err(SearchError::EmptyCoefficients);
        }
        if !(self.positivity_threshold > 0.0 && self.positivity_threshold <= 1.0) {
            return Err(SearchError::BadThreshold(self.positivity_threshold));
        }
        for bound in std::iter::once(self.filter_p_max).chain(self.second_stage_p_max) {
            if bound > db.p_max() {
                return Err(SearchError::BoundExceedsDb { bound, p_max: db.p_max() });
            }
        }
        let mut set = self.coefficients.clone();
        set.sort_unstable();
        set.dedup();
        Ok(set)
    }
}

/// One family's filter outcome.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub family: Family,
    /// Fraction of prefixes whose running average is strictly positive.
    pub fraction_positive: f64,
    pub final_run_avg: f64,
    pub final_log_avg: f64,
    pub pass: bool,
}

fn coeff_vector(set: &[i64], len: usize, mut index: u64) -> Vec<i64> {
    let k = set.len() as u64;
    let mut digits = vec![0usize; len];
    for slot in digits.iter_mut().rev() {
        *slot = (index % k) as usize;
        index /= k;
    }
    // Most-significant digit first = lexicographic order on (c0, c1, ...).
    digits.into_iter().map(|d| set[d]).collect()
}

/// All (A, B) pairs with coefficients from the set and degree <= max_degree,
/// excluding singular surfaces and constant-j families. Order is
/// lexicographic on coefficient vectors, A-major.
pub fn enumerate_families(
    sorted_set: &[i64],
    max_degree: usize,
) -> impl Iterator<Item = Family> + '_ {
    let len = max_degree + 1;
    let per_poly = (sorted_set.len() as u64).pow(len as u32);
    (0..per_poly).flat_map(move |ia| {
        let a = IntPolynomial::new(coeff_vector(sorted_set, len, ia));
        (0..per_poly).filter_map(move |ib| {
            let b = IntPolynomial::new(coeff_vector(sorted_set, len, ib));
            let fam = Family::new(a.clone(), b);
            (!fam.is_singular_surface && !fam.has_constant_j).then_some(fam)
        })
    })
}

fn prefix_stats(b2: &[(u64, f64)], threshold: f64) -> (f64, f64, f64, bool) {
    let report = running_averages(b2).expect("filter range is nonempty");
    let positive = report.points.iter().filter(|pt| pt.run_avg > 0.0).count();
    let fraction = positive as f64 / report.points.len() as f64;
    let last = report.final_point();
    (fraction, last.run_avg, last.log_avg, fraction > threshold)
}

/// Runs the positivity filter for a single family: B₂ for 2 < p <=
/// filter_p_max, the running average at each prefix, and the fraction of
/// strictly positive prefixes against the threshold.
pub fn bias_filter(
    db: &ApDatabase,
    family: &Family,
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    cfg.validate(db)?;
    if family.is_singular_surface {
        return Err(SearchError::SingularFamily(family.to_string()));
    }
    let series = moment_series(db, family, &[2], 3, cfg.filter_p_max, 0)?;
    let b2 = series.b2_series().expect("order 2 requested");
    let (fraction_positive, final_run_avg, final_log_avg, pass) =
        prefix_stats(&b2, cfg.positivity_threshold);
    Ok(SearchResult {
        family: family.clone(),
        fraction_positive,
        final_run_avg,
        final_log_avg,
        pass,
    })
}

fn load_checkpoint(path: &Path) -> Result<HashSet<String>, SearchError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text.lines().map(str::to_owned).collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(HashSet::new()),
        Err(e) => Err(SearchError::Checkpoint(e)),
    }
}

/// Exhaustive filter over the enumerated families, returning the passing
/// set ranked by final running average (descending).
///
/// Work proceeds prime-by-prime inside batches of families, so only one
/// block is in memory per worker. With a checkpoint path, families already
/// listed are skipped and each finished batch appends its family specs;
/// a resumed run therefore evaluates (and reports) only the remainder.
pub fn search(
    db: &ApDatabase,
    cfg: &SearchConfig,
    checkpoint: Option<&Path>,
) -> Result<Vec<SearchResult>, SearchError> {
    let set = cfg.validate(db)?;
    let done = match checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => HashSet::new(),
    };
    let families: Vec<Family> = enumerate_families(&set, cfg.max_degree)
        .filter(|f| !done.contains(&f.to_string()))
        .collect();
    let primes: Vec<u64> = db.primes_in_range(3, cfg.filter_p_max).to_vec();
    if primes.is_empty() {
        return Ok(Vec::new());
    }

    let mut checkpoint_file = match checkpoint {
        Some(path) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(SearchError::Checkpoint)?,
        ),
        None => None,
    };

    let mut results: Vec<SearchResult> = Vec::new();
    for batch in families.chunks(SEARCH_BATCH) {
        // b2[family][prime], filled one prime at a time.
        let mut b2 = vec![Vec::with_capacity(primes.len()); batch.len()];
        for &p in &primes {
            let table = db.read_table(p)?;
            let reducer = db.reducer(p)?;
            let col: Vec<f64> = batch
                .par_iter()
                .map(|f| {
                    let raw = moments_at_prime(&table, &reducer, f, &[2])[0];
                    normalized_second_moment(raw, p)
                })
                .collect();
            for (series, v) in b2.iter_mut().zip(col) {
                series.push(v);
            }
        }
        for (f, series) in batch.iter().zip(b2) {
            let paired: Vec<(u64, f64)> = primes.iter().copied().zip(series).collect();
            let (fraction_positive, final_run_avg, final_log_avg, pass) =
                prefix_stats(&paired, cfg.positivity_threshold);
            results.push(SearchResult {
                family: f.clone(),
                fraction_positive,
                final_run_avg,
                final_log_avg,
                pass,
            });
        }
        if let Some(file) = checkpoint_file.as_mut() {
            let mut lines = String::new();
            for f in batch {
                lines.push_str(&f.to_string());
                lines.push('\n');
            }
            file.write_all(lines.as_bytes()).map_err(SearchError::Checkpoint)?;
        }
    }

    let mut passing: Vec<SearchResult> = results.into_iter().filter(|r| r.pass).collect();

    if let Some(stage2) = cfg.second_stage_p_max {
        for r in passing.iter_mut() {
            let series = moment_series(db, &r.family, &[2], 3, stage2, 0)?;
            let b2 = series.b2_series().expect("order 2 requested");
            let report = running_averages(&b2).expect("stage-2 range is nonempty");
            let last = report.final_point();
            r.final_run_avg = last.run_avg;
            r.final_log_avg = last.log_avg;
        }
    }

    passing.sort_by(|a, b| {
        b.final_run_avg
            .partial_cmp(&a.final_run_avg)
            .expect("averages are finite")
            .then_with(|| a.family.to_string().cmp(&b.family.to_string()))
    });
    Ok(passing)
}

/// CSV report: `family,fraction_positive,final_run_avg,final_log_avg,pass`.
/// The family spec contains commas and a semicolon, so it is quoted.
pub fn write_search_csv(results: &[SearchResult], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "family,fraction_positive,final_run_avg,final_log_avg,pass")?;
    for r in results {
        writeln!(
            w,
            "\"{}\",{},{},{},{}",
            r.family, r.fraction_positive, r.final_run_avg, r.final_log_avg, r.pass
        )?;
    }
    Ok(())
}
