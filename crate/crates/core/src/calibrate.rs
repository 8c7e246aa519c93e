//! P-values from the normal and Gumbel limits and from Monte Carlo
//! permutation nulls.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::aggregate::{compute_raw, rescale, rescale_with, Limit, StatisticId};
use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::ranks::RankMatrix;
use crate::rng::{random_permutation, substream, Domain};

/// Relative tolerance used when counting null values at least as large as
/// the observed one, so that floating-point noise in equal statistics never
/// breaks ties against the observation.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Upper tail `1 - Phi(z)` of the standard normal.
pub fn normal_pvalue(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Extreme-value statistic `t = (9n/4) s^2 - 4 log m + log log m` for the
/// maximum absolute Kendall tau.
pub fn gumbel_statistic(s_max: f64, n: usize, m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::Domain(format!("Gumbel calibration needs m >= 3, got {m}")));
    }
    if n < 2 {
        return Err(Error::SampleTooSmall { n, min: 2 });
    }
    let lm = (m as f64).ln();
    Ok(2.25 * n as f64 * s_max * s_max - 4.0 * lm + lm.ln())
}

/// Upper tail of the limit `F(t) = exp(-exp(-t/2) / sqrt(8 pi))`.
pub fn gumbel_tail(t: f64) -> f64 {
    -(-(-t / 2.0).exp() / (8.0 * PI).sqrt()).exp_m1()
}

/// P-value of the maximum absolute Kendall tau.
pub fn gumbel_max_pvalue(s_max: f64, n: usize, m: usize) -> Result<f64> {
    Ok(gumbel_tail(gumbel_statistic(s_max, n, m)?))
}

/// How a p-value is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Asymptotic,
    MonteCarlo { reps: usize, seed: u64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Asymptotic => "asymptotic",
            Method::MonteCarlo { .. } => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: StatisticId,
    pub raw: f64,
    pub rescaled: f64,
    pub method: Method,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n: usize,
    pub m: usize,
}

/// Sorted Monte Carlo null distribution of a raw statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct NullTable {
    pub statistic: StatisticId,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

/// The rank matrix of null replicate `r`: m independent uniform permutations.
pub fn null_ranks(n: usize, m: usize, seed: u64, r: usize) -> RankMatrix {
    let cols = (0..m)
        .map(|c| random_permutation(&mut substream(seed, Domain::NullPermutation, &[r as u64, c as u64]), n))
        .collect();
    RankMatrix::from_columns_unchecked(cols)
}

/// Raw statistic values of `reps` null replicates, in replicate order.
pub fn null_sample(statistic: StatisticId, n: usize, m: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if n < statistic.min_n() {
        return Err(Error::SampleTooSmall { n, min: statistic.min_n() });
    }
    if m < 2 {
        return Err(Error::Shape { rows: n, cols: m, min_rows: 2 });
    }
    (0..reps)
        .into_par_iter()
        .map(|r| compute_raw(&null_ranks(n, m, seed, r), statistic))
        .collect()
}

/// Monte Carlo null table under independent uniform rankings.
pub fn montecarlo_null(statistic: StatisticId, n: usize, m: usize, reps: usize, seed: u64) -> Result<NullTable> {
    if reps < 100 {
        return Err(Error::Config(format!("Monte Carlo calibration needs at least 100 replicates, got {reps}")));
    }
    let mut values = null_sample(statistic, n, m, reps, seed)?;
    values.sort_by(f64::total_cmp);
    Ok(NullTable { statistic, n, m, reps, seed, values })
}

#[derive(Serialize, Deserialize)]
struct NullRow {
    statistic: String,
    n: usize,
    m: usize,
    reps: usize,
    seed: u64,
    value: f64,
}

impl NullTable {
    /// Add-one p-value `(1 + #{null >= observed}) / (reps + 1)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let cut = observed - TIE_TOLERANCE * observed.abs().max(1.0);
        let below = self.values.partition_point(|&v| v < cut);
        (1 + self.values.len() - below) as f64 / (self.values.len() + 1) as f64
    }

    /// File name identifying the table's key.
    pub fn cache_name(statistic: StatisticId, n: usize, m: usize, reps: usize, seed: u64) -> String {
        format!("null_{statistic}_n{n}_m{m}_r{reps}_s{seed}.csv")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        for &value in &self.values {
            w.serialize(NullRow {
                statistic: self.statistic.to_string(),
                n: self.n,
                m: self.m,
                reps: self.reps,
                seed: self.seed,
                value,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let mut key: Option<(String, usize, usize, usize, u64)> = None;
        let mut values = Vec::new();
        for (i, row) in rd.deserialize::<NullRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse { row: i + 2, col: 0, msg: e.to_string() })?;
            let k = (row.statistic, row.n, row.m, row.reps, row.seed);
            match &key {
                None => key = Some(k),
                Some(k0) if *k0 == k => {}
                Some(_) => return Err(Error::Parse { row: i + 2, col: 0, msg: "mixed table keys".into() }),
            }
            values.push(row.value);
        }
        let (statistic, n, m, reps, seed) = key.ok_or_else(|| Error::Config("empty null table".into()))?;
        if values.len() != reps {
            return Err(Error::Config(format!("null table holds {} values, expected {reps}", values.len())));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { statistic: statistic.parse()?, n, m, reps, seed, values })
    }
}

/// Loads the table from `dir` when a file with a matching key exists,
/// otherwise computes and stores it.
pub fn montecarlo_null_cached(
    dir: &Path,
    statistic: StatisticId,
    n: usize,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<NullTable> {
    let path: PathBuf = dir.join(NullTable::cache_name(statistic, n, m, reps, seed));
    if path.exists() {
        let t = NullTable::load_csv(&path)?;
        if (t.statistic, t.n, t.m, t.reps, t.seed) == (statistic, n, m, reps, seed) {
            return Ok(t);
        }
    }
    let t = montecarlo_null(statistic, n, m, reps, seed)?;
    std::fs::create_dir_all(dir)?;
    t.save_csv(&path)?;
    Ok(t)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn asymptotic_p(statistic: StatisticId, raw: f64, rescaled: f64, n: usize, m: usize) -> Result<f64> {
    match statistic.limit() {
        Limit::StandardNormal => Ok(normal_pvalue(rescaled)),
        Limit::Gumbel => gumbel_max_pvalue(raw, n, m),
    }
}

/// Runs one test on a rank matrix.
pub fn run_test(ranks: &RankMatrix, statistic: StatisticId, alpha: f64, method: Method) -> Result<TestResult> {
    run_test_using(ranks, statistic, alpha, method, Constants::embedded())
}

/// [`run_test`] with explicit rescaling constants.
pub fn run_test_using(
    ranks: &RankMatrix,
    statistic: StatisticId,
    alpha: f64,
    method: Method,
    constants: &Constants,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let (n, m) = (ranks.n(), ranks.m());
    let raw = compute_raw(ranks, statistic)?;
    let rescaled = rescale_with(statistic, raw, n, m, constants)?.rescaled;
    let p_value = match method {
        Method::Asymptotic => asymptotic_p(statistic, raw, rescaled, n, m)?,
        Method::MonteCarlo { reps, seed } => montecarlo_null(statistic, n, m, reps, seed)?.p_value(raw),
    };
    Ok(TestResult { statistic, raw, rescaled, method, p_value, alpha, reject: p_value <= alpha, n, m })
}

/// Runs a Monte Carlo test against a precomputed null table.
pub fn run_test_with_null(ranks: &RankMatrix, alpha: f64, null: &NullTable) -> Result<TestResult> {
    check_alpha(alpha)?;
    let (n, m) = (ranks.n(), ranks.m());
    if (n, m) != (null.n, null.m) {
        return Err(Error::Config(format!(
            "null table is for n = {}, m = {}, data have n = {n}, m = {m}",
            null.n, null.m
        )));
    }
    let raw = compute_raw(ranks, null.statistic)?;
    let rescaled = rescale(null.statistic, raw, n, m)?.rescaled;
    let p_value = null.p_value(raw);
    Ok(TestResult {
        statistic: null.statistic,
        raw,
        rescaled,
        method: Method::MonteCarlo { reps: null.reps, seed: null.seed },
        p_value,
        alpha,
        reject: p_value <= alpha,
        n,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelId;

    /// Upper normal tail by the continued fraction for large z and the
    /// Taylor series of erf for small z.
    fn normal_tail_oracle(z: f64) -> f64 {
        if z < 3.0 {
            let x = z / 2f64.sqrt();
            let mut term = x;
            let mut sum = x;
            for k in 1..200 {
                term *= -x * x / k as f64;
                sum += term / (2 * k + 1) as f64;
            }
            0.5 - sum / PI.sqrt()
        } else {
            let mut f = 0.0;
            for k in (1..200).rev() {
                f = k as f64 / (z + f);
            }
            (-z * z / 2.0).exp() / (2.0 * PI).sqrt() / (z + f)
        }
    }

    #[test]
    fn normal_tail() {
        assert_eq!(normal_pvalue(0.0), 0.5);
        assert!((normal_pvalue(1.6448536269514722) - 0.05).abs() < 1e-10);
        assert_eq!(normal_pvalue(f64::INFINITY), 0.0);
        for i in -40..=80 {
            let z = i as f64 * 0.1;
            assert!((normal_pvalue(z) - normal_tail_oracle(z)).abs() < 1e-10, "z = {z}");
        }
    }

    #[test]
    fn gumbel_values() {
        let t_crit = -2.0 * ((8.0 * PI).sqrt() * -(0.95f64.ln())).ln();
        assert!((t_crit - 2.716219).abs() < 1e-6);
        assert!((gumbel_tail(t_crit) - 0.05).abs() < 1e-12);
        let lm = 128f64.ln();
        let s = ((4.0 / 9.0) * (t_crit + 4.0 * lm - lm.ln()) / 128.0).sqrt();
        assert!((s - 0.26709).abs() < 1e-5);
        assert!((gumbel_max_pvalue(s, 128, 128).unwrap() - 0.05).abs() < 1e-12);
        assert!(gumbel_max_pvalue(1.0, 10_000, 128).unwrap() < 1e-300);
        assert!(matches!(gumbel_max_pvalue(0.5, 10, 2), Err(Error::Domain(_))));
        let mut prev = 1.0;
        for i in 1..100 {
            let p = gumbel_max_pvalue(i as f64 / 100.0, 64, 16).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn null_table_is_deterministic_and_sorted() {
        let id = StatisticId::S(KernelId::Tau);
        let a = montecarlo_null(id, 8, 4, 200, 11).unwrap();
        let b = montecarlo_null(id, 8, 4, 200, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.values.len(), 200);
        assert_ne!(a.values, montecarlo_null(id, 8, 4, 200, 12).unwrap().values);
        assert!(matches!(montecarlo_null(id, 8, 4, 99, 1), Err(Error::Config(_))));
    }

    #[test]
    fn add_one_pvalue() {
        let t = NullTable {
            statistic: StatisticId::SRhoS,
            n: 5,
            m: 2,
            reps: 4,
            seed: 0,
            values: vec![0.1, 0.2, 0.3, 0.4],
        };
        assert_eq!(t.p_value(1.0), 0.2);
        assert_eq!(t.p_value(0.3), 0.6);
        assert_eq!(t.p_value(0.3 - 1e-15), 0.6);
        assert_eq!(t.p_value(-5.0), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let id = StatisticId::SMaxTau;
        let t = montecarlo_null_cached(dir.path(), id, 6, 3, 100, 5).unwrap();
        let path = dir.path().join(NullTable::cache_name(id, 6, 3, 100, 5));
        assert_eq!(NullTable::load_csv(&path).unwrap(), t);
        assert_eq!(montecarlo_null_cached(dir.path(), id, 6, 3, 100, 5).unwrap(), t);
    }

    #[test]
    fn identical_columns_reject() {
        let r = RankMatrix::from_columns(vec![(1..=20).collect(); 4]).unwrap();
        for method in [Method::Asymptotic, Method::MonteCarlo { reps: 199, seed: 3 }] {
            let res = run_test(&r, StatisticId::S(KernelId::Tau), 0.05, method).unwrap();
            assert!(res.reject, "{method:?}");
        }
        let res = run_test(&r, StatisticId::S(KernelId::Tau), 0.05, Method::MonteCarlo { reps: 199, seed: 3 }).unwrap();
        assert_eq!(res.p_value, 1.0 / 200.0);
        assert!(matches!(run_test(&r, StatisticId::SRhoS, 1.0, Method::Asymptotic), Err(Error::Config(_))));
    }
}
