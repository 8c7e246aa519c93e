//! Aggregation of pairwise statistics into test statistics, and rescaling to
//! their null limits.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::constants::{to_f64, Constants};
use crate::error::{Error, Result};
use crate::kernels::{mu_h, KernelId};
use crate::pairwise::{all_pairs, all_pairs_spearman, binomial, Kind, PairStatistics};
use crate::ranks::RankMatrix;
use crate::summation::NeumaierSum;

/// A test statistic of the calibrated surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticId {
    /// Centred sum of squared U-statistics.
    S(KernelId),
    /// Sum of W-statistics, unbiased for the sum of squared pair signals.
    T(KernelId),
    /// Plain sum of U-statistics.
    Z(KernelId),
    /// Centred sum of squared classical Spearman correlations.
    SRhoS,
    /// Maximum absolute Kendall tau.
    SMaxTau,
}

impl StatisticId {
    /// Smallest sample size for which the statistic is defined.
    pub fn min_n(self) -> usize {
        match self {
            StatisticId::S(k) | StatisticId::T(k) => 2 * k.degree(),
            StatisticId::Z(k) => k.degree(),
            StatisticId::SRhoS | StatisticId::SMaxTau => 2,
        }
    }

    pub fn limit(self) -> Limit {
        match self {
            StatisticId::SMaxTau => Limit::Gumbel,
            _ => Limit::StandardNormal,
        }
    }

    /// Every statistic name accepted on the command line.
    pub fn all() -> Vec<StatisticId> {
        let mut out = Vec::new();
        for k in KernelId::ALL {
            out.extend([StatisticId::S(k), StatisticId::T(k), StatisticId::Z(k)]);
        }
        out.extend([StatisticId::SRhoS, StatisticId::SMaxTau]);
        out
    }
}

impl fmt::Display for StatisticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatisticId::S(k) => write!(f, "s_{k}"),
            StatisticId::T(k) => write!(f, "t_{k}"),
            StatisticId::Z(k) => write!(f, "z_{k}"),
            StatisticId::SRhoS => f.write_str("s_rho_s"),
            StatisticId::SMaxTau => f.write_str("s_max_tau"),
        }
    }
}

impl FromStr for StatisticId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s_rho_s" => return Ok(StatisticId::SRhoS),
            "s_max_tau" => return Ok(StatisticId::SMaxTau),
            _ => {}
        }
        let unknown = || Error::Config(format!("unknown statistic '{s}'"));
        let (prefix, kernel) = s.split_once('_').ok_or_else(unknown)?;
        let kernel = KernelId::from_str(kernel).map_err(|_| unknown())?;
        match prefix {
            "s" => Ok(StatisticId::S(kernel)),
            "t" => Ok(StatisticId::T(kernel)),
            "z" => Ok(StatisticId::Z(kernel)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for StatisticId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Null limit of a rescaled statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Limit {
    StandardNormal,
    Gumbel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledStatistic {
    pub id: StatisticId,
    pub raw: f64,
    pub rescaled: f64,
    pub n: usize,
    pub m: usize,
    pub limit: Limit,
}

fn pair_count(m: usize) -> f64 {
    binomial(m, 2) as f64
}

fn expect(pairs: &PairStatistics, kind: Kind) -> Result<()> {
    if pairs.kind != kind {
        return Err(Error::Config(format!("expected {kind:?} pair statistics, got {:?}", pairs.kind)));
    }
    Ok(())
}

/// `sum (U_pq)^2 - C(m,2) mu_h(n)`.
pub fn s_stat(pairs: &PairStatistics, n: usize, m: usize) -> Result<f64> {
    expect(pairs, Kind::U)?;
    let min = 2 * pairs.kernel.degree();
    if n < min {
        return Err(Error::SampleTooSmall { n, min });
    }
    let sq: NeumaierSum = pairs.iter_values().map(|u| u * u).collect();
    Ok(sq.value() - pair_count(m) * mu_h(pairs.kernel, n)?)
}

/// `sum W_pq`.
pub fn t_stat(pairs: &PairStatistics) -> Result<f64> {
    expect(pairs, Kind::W)?;
    Ok(pairs.iter_values().collect::<NeumaierSum>().value())
}

/// `sum U_pq`.
pub fn z_stat(pairs: &PairStatistics) -> Result<f64> {
    expect(pairs, Kind::U)?;
    Ok(pairs.iter_values().collect::<NeumaierSum>().value())
}

/// `sum (rho_s_pq)^2 - C(m,2)/(n-1)`.
pub fn s_rho_s(ranks: &RankMatrix) -> f64 {
    let n = ranks.n();
    let sq: NeumaierSum = all_pairs_spearman(ranks).iter().map(|v| v.value * v.value).collect();
    sq.value() - pair_count(ranks.m()) / (n - 1) as f64
}

/// `max |tau_pq|`.
pub fn s_max_tau(pairs: &PairStatistics) -> Result<f64> {
    expect(pairs, Kind::U)?;
    if pairs.kernel != KernelId::Tau {
        return Err(Error::Config(format!("maximum statistic needs tau, got {}", pairs.kernel)));
    }
    Ok(pairs.iter_values().fold(0.0, |a, v| a.max(v.abs())))
}

/// Raw value of any statistic on a rank matrix.
pub fn compute_raw(ranks: &RankMatrix, id: StatisticId) -> Result<f64> {
    let (n, m) = (ranks.n(), ranks.m());
    if n < id.min_n() {
        return Err(Error::SampleTooSmall { n, min: id.min_n() });
    }
    match id {
        StatisticId::S(k) => s_stat(&all_pairs(ranks, k, Kind::U)?, n, m),
        StatisticId::T(k) => t_stat(&all_pairs(ranks, k, Kind::W)?),
        StatisticId::Z(k) => z_stat(&all_pairs(ranks, k, Kind::U)?),
        StatisticId::SRhoS => Ok(s_rho_s(ranks)),
        StatisticId::SMaxTau => s_max_tau(&all_pairs(ranks, KernelId::Tau, Kind::U)?),
    }
}

/// Multiplier taking the raw statistic to its standard-normal scale, using
/// the given constants. `None` for the maximum statistic.
pub fn scale_factor(id: StatisticId, n: usize, m: usize, constants: &Constants) -> Result<Option<f64>> {
    if n < 2 || m < 2 {
        return Err(Error::Shape { rows: n, cols: m, min_rows: 2 });
    }
    let (nf, mf) = (n as f64, m as f64);
    let kernel = match id {
        StatisticId::SRhoS => return Ok(Some(nf / mf)),
        StatisticId::SMaxTau => return Ok(None),
        StatisticId::S(k) | StatisticId::T(k) | StatisticId::Z(k) => k,
    };
    let c = constants.get(kernel)?;
    let k = kernel.degree() as f64;
    let zeta = to_f64(c.zeta_d());
    let factor = if kernel.degeneracy() == 1 {
        match id {
            StatisticId::Z(_) => (2.0 * nf).sqrt() / (k * mf * zeta.sqrt()),
            _ => nf / (k * k * mf * zeta),
        }
    } else {
        let eta = c
            .eta
            .map(to_f64)
            .ok_or_else(|| Error::UnknownConstant(format!("eta for kernel {kernel}")))?;
        let ck2 = k * (k - 1.0) / 2.0;
        match id {
            StatisticId::S(_) => nf * nf / (ck2 * ck2 * 2.0 * mf * (zeta * zeta + 6.0 * eta).sqrt()),
            StatisticId::T(_) => nf * nf / (ck2 * ck2 * 2.0 * mf * (zeta * zeta + 2.0 * eta).sqrt()),
            _ => nf / (ck2 * mf * zeta.sqrt()),
        }
    };
    Ok(Some(factor))
}

/// Rescales with the stamped constants.
pub fn rescale(id: StatisticId, raw: f64, n: usize, m: usize) -> Result<RescaledStatistic> {
    rescale_with(id, raw, n, m, Constants::embedded())
}

pub fn rescale_with(
    id: StatisticId,
    raw: f64,
    n: usize,
    m: usize,
    constants: &Constants,
) -> Result<RescaledStatistic> {
    let rescaled = match scale_factor(id, n, m, constants)? {
        Some(f) => raw * f,
        None => raw,
    };
    Ok(RescaledStatistic { id, raw, rescaled, n, m, limit: id.limit() })
}
