//! `apbias` — build an indexed database of Frobenius traces over F_p and
//! run moment, bias, distribution, and family-search analyses against it.
//!
//! Every subcommand except `build` resolves its database from `--db` or
//! the `APBIAS_DB` environment variable. Tabular output is CSV with a
//! header row, written to `--out` or stdout; `fit` emits one JSON object.

use anyhow::{bail, Context, Result};
use apbias_core::apkernel::{verify_table, Kernel};
use apbias_core::apstore::{db_create_with_progress, db_open, ApDatabase, CreateOptions};
use apbias_core::biasstats::{
    histogram, ks_statistic, partition_by_residue, rank_statistic, running_averages,
    truncated_normal_fit, variance_trace, write_variance_csv, FitMode,
};
use apbias_core::families::{moment_series, parse_family, Family};
use apbias_core::famsearch::{search, write_search_csv, SearchConfig};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "apbias", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DbArg {
    /// Database path (falls back to the APBIAS_DB environment variable).
    #[arg(long)]
    db: Option<PathBuf>,
}

impl DbArg {
    fn open(&self) -> Result<ApDatabase> {
        let path = match &self.db {
            Some(p) => p.clone(),
            None => std::env::var_os("APBIAS_DB")
                .map(PathBuf::from)
                .context("no --db given and APBIAS_DB is not set")?,
        };
        db_open(&path).with_context(|| format!("opening {}", path.display()))
    }
}

#[derive(Args, Clone)]
struct SeriesArgs {
    /// Family spec "a0,a1,...;b0,b1,..." (coefficients ascending).
    #[arg(long)]
    family: String,
    /// Smallest prime to include.
    #[arg(long, default_value_t = 3)]
    pmin: u64,
    /// Largest prime to include (default: the database bound).
    #[arg(long)]
    pmax: Option<u64>,
    /// Drop the first K primes of the range.
    #[arg(long, default_value_t = 0)]
    skip: usize,
}

impl SeriesArgs {
    fn family(&self) -> Result<Family> {
        parse_family(&self.family).with_context(|| format!("family spec '{}'", self.family))
    }

    /// (p, B₂) series under the common filters.
    fn b2_series(&self, db: &ApDatabase) -> Result<Vec<(u64, f64)>> {
        let f = self.family()?;
        let pmax = self.pmax.unwrap_or_else(|| db.p_max());
        let series = moment_series(db, &f, &[2], self.pmin, pmax, self.skip)?;
        Ok(series.b2_series().expect("order 2 requested"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a database of all odd primes p <= pmax.
    Build {
        #[arg(long)]
        pmax: u64,
        #[arg(long)]
        out: PathBuf,
        /// Row builder: naive (O(p²)) or convolution (O(p log p), exact).
        #[arg(long, default_value = "naive")]
        kernel: Kernel,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Print -a_p for one curve y² = x³ + ax + b.
    Lookup {
        #[command(flatten)]
        db: DbArg,
        #[arg(long)]
        prime: u64,
        #[arg(long)]
        a: u64,
        #[arg(long)]
        b: u64,
    },
    /// Raw and normalized moments per prime (CSV: p,n,raw,B,Bprime).
    Moments {
        #[command(flatten)]
        db: DbArg,
        #[command(flatten)]
        series: SeriesArgs,
        /// Comma-separated moment orders, e.g. 2,4,6.
        #[arg(long, default_value = "2")]
        orders: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Running averages of B₂ (CSV: p,B2,run_avg,log_avg).
    Bias {
        #[command(flatten)]
        db: DbArg,
        #[command(flatten)]
        series: SeriesArgs,
        /// Keep only primes with p mod M == R (with --class).
        #[arg(long = "mod", requires = "class")]
        modulus: Option<u64>,
        #[arg(long, requires = "modulus")]
        class: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram of the B₂ sample (CSV: bucket_low,bucket_high,count).
    Hist {
        #[command(flatten)]
        db: DbArg,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, default_value_t = 100)]
        buckets: usize,
        /// Explicit bounds LO HI instead of [min, max].
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        bounds: Option<Vec<f64>>,
        /// Also write the running-variance trace (CSV: p,variance) here.
        #[arg(long)]
        variance_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated-normal fit of the B₂ sample plus its KS statistic (JSON).
    Fit {
        #[command(flatten)]
        db: DbArg,
        #[command(flatten)]
        series: SeriesArgs,
        /// parent: parent normal takes sample mean/variance;
        /// truncated: solve so the truncated law matches them.
        #[arg(long, default_value = "parent")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive family search with the positivity filter
    /// (CSV: family,fraction_positive,final_run_avg,final_log_avg,pass).
    Search {
        #[command(flatten)]
        db: DbArg,
        #[arg(long, default_value_t = 5)]
        max_degree: usize,
        /// Comma-separated coefficient set.
        #[arg(long, default_value = "0,1")]
        coeffs: String,
        #[arg(long, default_value_t = 1000)]
        filter_pmax: u64,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        /// Re-evaluate survivors' running averages up to this bound.
        #[arg(long)]
        stage2_pmax: Option<u64>,
        /// Resume file: one completed family spec per line.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// First-moment rank statistic -(1/X) Σ A₁(p) log p / p.
    Rank {
        #[command(flatten)]
        db: DbArg,
        #[arg(long)]
        family: String,
        #[arg(long)]
        xmax: u64,
    },
    /// Check structure and sampled re-derivations of a database.
    Verify {
        #[command(flatten)]
        db: DbArg,
        /// Total number of entries to re-derive across the database.
        #[arg(long, default_value_t = 1000)]
        sample: u64,
    },
}

fn out_writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn main() {
    if let Err(e) = run() {
        eprintln!("apbias: error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Build { pmax, out, kernel, threads } => {
            let opts = CreateOptions { p_max: pmax, kernel, threads };
            let started = std::time::Instant::now();
            let db = db_create_with_progress(&out, &opts, |done, total| {
                eprintln!("apbias: built {done}/{total} prime tables");
            })?;
            eprintln!(
                "apbias: wrote {} ({} primes, p_max {}) in {:.1}s",
                out.display(),
                db.primes().len(),
                db.p_max(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Lookup { db, prime, a, b } => {
            let db = db.open()?;
            println!("{}", db.lookup_neg_ap(prime, a, b)?);
        }
        Command::Moments { db, series, orders, out } => {
            let f = series.family()?;
            let orders: Vec<u32> = orders
                .split(',')
                .map(|s| s.trim().parse::<u32>().with_context(|| format!("order '{s}'")))
                .collect::<Result<_>>()?;
            let db = db.open()?;
            let pmax = series.pmax.unwrap_or_else(|| db.p_max());
            let ms = moment_series(&db, &f, &orders, series.pmin, pmax, series.skip)?;
            ms.write_csv(&mut out_writer(&out)?)?;
        }
        Command::Bias { db, series, modulus, class, out } => {
            series.family()?;
            let db = db.open()?;
            let mut b2 = series.b2_series(&db)?;
            if let (Some(m), Some(r)) = (modulus, class) {
                let parts = partition_by_residue(&b2, m);
                b2 = parts.get(&r).cloned().unwrap_or_default();
                eprintln!(
                    "apbias: filters: mod {m} class {r}, skip {}, {} primes kept",
                    series.skip,
                    b2.len()
                );
            }
            if b2.is_empty() {
                bail!("no primes left after filters");
            }
            running_averages(&b2)?.write_csv(&mut out_writer(&out)?)?;
        }
        Command::Hist { db, series, buckets, bounds, variance_out, out } => {
            series.family()?;
            let db = db.open()?;
            let b2 = series.b2_series(&db)?;
            let sample: Vec<f64> = b2.iter().map(|&(_, v)| v).collect();
            let bounds = bounds.map(|v| (v[0], v[1]));
            let h = histogram(&sample, buckets, bounds)?;
            h.write_csv(&mut out_writer(&out)?)?;
            if let Some(path) = variance_out {
                let trace = variance_trace(&b2);
                write_variance_csv(&trace, &mut out_writer(&Some(path))?)?;
            }
        }
        Command::Fit { db, series, mode, out } => {
            series.family()?;
            let mode = match mode.as_str() {
                "parent" => FitMode::Parent,
                "truncated" => FitMode::TruncatedMoments,
                other => bail!("unknown fit mode '{other}' (expected parent or truncated)"),
            };
            let db = db.open()?;
            let b2 = series.b2_series(&db)?;
            let sample: Vec<f64> = b2.iter().map(|&(_, v)| v).collect();
            let fit = truncated_normal_fit(&sample, mode)?;
            let (ks_d, ks_p) = ks_statistic(&sample, |x| fit.cdf(x));
            let json = serde_json::json!({
                "mu": fit.mu,
                "sigma": fit.sigma,
                "lower": fit.lower,
                "upper": fit.upper,
                "ks_d": ks_d,
                "ks_p": ks_p,
            });
            writeln!(out_writer(&out)?, "{}", serde_json::to_string_pretty(&json)?)?;
        }
        Command::Search {
            db,
            max_degree,
            coeffs,
            filter_pmax,
            threshold,
            stage2_pmax,
            checkpoint,
            threads,
            out,
        } => {
            let coefficients: Vec<i64> = coeffs
                .split(',')
                .map(|s| s.trim().parse::<i64>().with_context(|| format!("coefficient '{s}'")))
                .collect::<Result<_>>()?;
            let db = db.open()?;
            let cfg = SearchConfig {
                max_degree,
                coefficients,
                filter_p_max: filter_pmax,
                positivity_threshold: threshold,
                second_stage_p_max: stage2_pmax,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
            let results = pool.install(|| search(&db, &cfg, checkpoint.as_deref()))?;
            eprintln!("apbias: {} families pass the filter", results.len());
            write_search_csv(&results, &mut out_writer(&out)?)?;
        }
        Command::Rank { db, family, xmax } => {
            let f = parse_family(&family)?;
            let db = db.open()?;
            println!("{}", rank_statistic(&db, &f, xmax)?);
        }
        Command::Verify { db, sample } => {
            let db = db.open()?;
            let n = db.primes().len() as u64;
            let mut failures = 0u64;
            for (i, &p) in db.primes().iter().enumerate() {
                let per_prime = sample / n + if (i as u64) < sample % n { 1 } else { 0 };
                let table = db.read_table(p)?;
                let report = verify_table(&table, per_prime);
                if !report.passed {
                    failures += 1;
                    eprintln!("apbias: FAIL {}", report.first_failure.unwrap_or_default());
                }
            }
            if failures > 0 {
                bail!("{failures} prime blocks failed verification");
            }
            println!("ok: {} primes verified, {} re-derivations sampled", n, sample);
        }
    }
    Ok(())
}
