//! Data generation for size and power studies.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::StatisticId;
use crate::calibrate::{montecarlo_null, run_test, run_test_with_null, Method, NullTable};
use crate::error::{Error, Result};
use crate::pairwise::binomial;
use crate::ranks::{compute_ranks, DataMatrix, TiePolicy};
use crate::rng::{substream, Domain};

/// Shape of the scatter matrix, without its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterShape {
    Identity,
    Equicorrelation,
    Pentadiagonal,
}

impl ScatterShape {
    pub fn name(self) -> &'static str {
        match self {
            ScatterShape::Identity => "identity",
            ScatterShape::Equicorrelation => "equi",
            ScatterShape::Pentadiagonal => "penta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ScatterShape::Identity),
            "equi" | "equicorrelation" => Ok(ScatterShape::Equicorrelation),
            "penta" | "pentadiagonal" => Ok(ScatterShape::Pentadiagonal),
            other => Err(Error::Config(format!("unknown scatter '{other}'"))),
        }
    }

    /// Number of variable pairs with nonzero correlation.
    fn active_pairs(self, m: usize) -> usize {
        match self {
            ScatterShape::Identity => 0,
            ScatterShape::Equicorrelation => binomial(m, 2) as usize,
            ScatterShape::Pentadiagonal => 2 * m - 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScatterKind {
    Identity,
    Equicorrelation(f64),
    /// Correlation `rho` at lags 1 and 2, zero beyond.
    Pentadiagonal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSpec {
    pub kind: ScatterKind,
    pub m: usize,
}

impl ScatterSpec {
    pub fn new(kind: ScatterKind, m: usize) -> Self {
        Self { kind, m }
    }

    pub fn shape(&self) -> ScatterShape {
        match self.kind {
            ScatterKind::Identity => ScatterShape::Identity,
            ScatterKind::Equicorrelation(_) => ScatterShape::Equicorrelation,
            ScatterKind::Pentadiagonal(_) => ScatterShape::Pentadiagonal,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.m;
        DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                return 1.0;
            }
            match self.kind {
                ScatterKind::Identity => 0.0,
                ScatterKind::Equicorrelation(r) => r,
                ScatterKind::Pentadiagonal(r) if i.abs_diff(j) <= 2 => r,
                ScatterKind::Pentadiagonal(_) => 0.0,
            }
        })
    }

    /// Lower Cholesky factor, or `None` for the identity.
    pub fn cholesky(&self) -> Result<Option<DMatrix<f64>>> {
        if let ScatterKind::Equicorrelation(r) = self.kind {
            let lo = -1.0 / (self.m as f64 - 1.0);
            if !(r > lo && r < 1.0) {
                return Err(Error::NotPositiveDefinite);
            }
        }
        match self.kind {
            ScatterKind::Identity => Ok(None),
            _ => self.matrix().cholesky().map(|c| Some(c.l())).ok_or(Error::NotPositiveDefinite),
        }
    }
}

/// Per-pair correlation giving `||Theta_tau||_2^2 = signal` when the signal
/// is spread evenly over the active pairs, through `rho = sin(pi theta / 2)`.
pub fn signal_to_rho(signal: f64, shape: ScatterShape, m: usize) -> Result<f64> {
    if !(signal >= 0.0) || !signal.is_finite() {
        return Err(Error::InfeasibleSignal { signal, reason: "signal must be finite and nonnegative".into() });
    }
    if signal == 0.0 {
        return Ok(0.0);
    }
    let pairs = shape.active_pairs(m);
    if pairs == 0 {
        return Err(Error::InfeasibleSignal { signal, reason: "identity scatter carries no signal".into() });
    }
    let theta = (signal / pairs as f64).sqrt();
    if theta >= 1.0 {
        return Err(Error::InfeasibleSignal { signal, reason: format!("per-pair tau {theta} is not below 1") });
    }
    let rho = (std::f64::consts::FRAC_PI_2 * theta).sin();
    let kind = match shape {
        ScatterShape::Equicorrelation => ScatterKind::Equicorrelation(rho),
        _ => ScatterKind::Pentadiagonal(rho),
    };
    ScatterSpec::new(kind, m).cholesky().map_err(|_| Error::InfeasibleSignal {
        signal,
        reason: "scatter matrix is not positive definite".into(),
    })?;
    Ok(rho)
}

/// Marginal law of i.i.d. null data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    /// Student t with `df` degrees of freedom shifted by `shift`.
    ShiftedT { df: f64, shift: f64 },
    StandardNormal,
}

impl Default for Marginal {
    fn default() -> Self {
        Marginal::ShiftedT { df: 3.0, shift: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Mvn,
    Mvt { df: f64 },
    IidNull(Marginal),
    /// Multivariate normal with `floor(fraction n m)` entries replaced by
    /// `sign * N(loc, sd^2)` with a random sign.
    ContaminatedMvn { fraction: f64, loc: f64, sd: f64 },
}

impl Family {
    /// Contamination used in the robustness study: 5% of entries, N(2.5, 0.2)
    /// read as variance 0.2.
    pub fn default_contamination() -> Self {
        Family::ContaminatedMvn { fraction: 0.05, loc: 2.5, sd: 0.2f64.sqrt() }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Mvn => f.write_str("mvn"),
            Family::Mvt { df } => write!(f, "mvt{df}"),
            Family::IidNull(_) => f.write_str("iid-null"),
            Family::ContaminatedMvn { .. } => f.write_str("contaminated-mvn"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub family: Family,
    pub scatter: ScatterSpec,
    pub n: usize,
    pub m: usize,
    pub signal: Option<f64>,
    pub reps: usize,
    pub seed: u64,
}

impl SimScenario {
    /// Builds a scenario whose scatter carries the requested signal.
    pub fn new(
        family: Family,
        shape: ScatterShape,
        n: usize,
        m: usize,
        signal: Option<f64>,
        reps: usize,
        seed: u64,
    ) -> Result<Self> {
        if reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if n < 2 || m < 2 {
            return Err(Error::Config(format!("need n >= 2 and m >= 2, got n = {n}, m = {m}")));
        }
        let kind = match (shape, signal) {
            (ScatterShape::Identity, None | Some(0.0)) => ScatterKind::Identity,
            (ScatterShape::Identity, Some(s)) => {
                return Err(Error::InfeasibleSignal { signal: s, reason: "identity scatter carries no signal".into() })
            }
            (_, None) => return Err(Error::Config(format!("{} scatter needs a signal", shape.name()))),
            (ScatterShape::Equicorrelation, Some(s)) => ScatterKind::Equicorrelation(signal_to_rho(s, shape, m)?),
            (ScatterShape::Pentadiagonal, Some(s)) => ScatterKind::Pentadiagonal(signal_to_rho(s, shape, m)?),
        };
        if matches!(family, Family::IidNull(_)) && kind != ScatterKind::Identity {
            return Err(Error::Config("i.i.d. null data take the identity scatter".into()));
        }
        if let Family::ContaminatedMvn { fraction, .. } = family {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::Config(format!("contamination fraction {fraction} outside [0, 1]")));
            }
        }
        if let Family::Mvt { df } | Family::IidNull(Marginal::ShiftedT { df, .. }) = family {
            if !(df > 0.0) {
                return Err(Error::Config(format!("degrees of freedom must be positive, got {df}")));
            }
        }
        Ok(Self { family, scatter: ScatterSpec::new(kind, m), n, m, signal, reps, seed })
    }
}

fn gaussian_rows<R: Rng>(rng: &mut R, n: usize, m: usize, chol: Option<&DMatrix<f64>>) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        let z = DVector::<f64>::from_fn(m, |_, _| rng.sample(StandardNormal));
        match chol {
            Some(l) => out.extend((l * z).iter()),
            None => out.extend(z.iter()),
        }
    }
    out
}

/// The uncontaminated multivariate normal draw of a replicate.
fn base_draw(scenario: &SimScenario, rep: usize) -> Result<Vec<f64>> {
    let (n, m) = (scenario.n, scenario.m);
    let mut rng = substream(scenario.seed, Domain::Dataset, &[rep as u64]);
    let chol = scenario.scatter.cholesky()?;
    Ok(match scenario.family {
        Family::Mvn | Family::ContaminatedMvn { .. } => gaussian_rows(&mut rng, n, m, chol.as_ref()),
        Family::Mvt { df } => {
            let chi = ChiSquared::new(df).map_err(|e| Error::Config(e.to_string()))?;
            let mut v = gaussian_rows(&mut rng, n, m, chol.as_ref());
            for row in v.chunks_mut(m) {
                let w = (chi.sample(&mut rng) / df).sqrt();
                row.iter_mut().for_each(|x| *x /= w);
            }
            v
        }
        Family::IidNull(Marginal::StandardNormal) => (0..n * m).map(|_| rng.sample(StandardNormal)).collect(),
        Family::IidNull(Marginal::ShiftedT { df, shift }) => {
            let t = StudentT::new(df).map_err(|e| Error::Config(e.to_string()))?;
            (0..n * m).map(|_| t.sample(&mut rng) + shift).collect()
        }
    })
}

/// Dataset `rep` of a scenario; depends only on `(seed, rep)`.
pub fn gen_dataset(scenario: &SimScenario, rep: usize) -> Result<DataMatrix> {
    let (n, m) = (scenario.n, scenario.m);
    let mut values = base_draw(scenario, rep)?;
    if let Family::ContaminatedMvn { fraction, loc, sd } = scenario.family {
        let count = (fraction * (n * m) as f64).floor() as usize;
        let normal = Normal::new(loc, sd).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = substream(scenario.seed, Domain::Contamination, &[rep as u64]);
        for idx in sample(&mut rng, n * m, count).into_vec() {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            values[idx] = sign * normal.sample(&mut rng);
        }
    }
    DataMatrix::from_row_major(n, m, values)
}

/// Schott's centred sum of squared Pearson correlations,
/// `sum r_pq^2 - C(m,2)/(n-1)`. Uncalibrated; for comparison runs only.
pub fn pearson_sum_sq(data: &DataMatrix) -> f64 {
    let (n, m) = (data.n(), data.m());
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|p| {
            let c = data.column(p);
            let mean = c.iter().sum::<f64>() / n as f64;
            let ss = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
            c.iter().map(|v| (v - mean) / ss).collect()
        })
        .collect();
    let mut total = 0.0;
    for p in 0..m {
        for q in p + 1..m {
            let r: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
            total += r * r;
        }
    }
    total - binomial(m, 2) as f64 / (n - 1) as f64
}

/// One line of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub statistic: String,
    pub n: usize,
    pub m: usize,
    pub family: String,
    pub scatter: String,
    pub signal: f64,
    pub alpha: f64,
    pub method: String,
    pub reps: usize,
    pub reject_rate: f64,
    pub se: f64,
}

/// Rejection frequency of each statistic over the scenario's replicates.
pub fn run_experiment(
    scenario: &SimScenario,
    statistics: &[StatisticId],
    alpha: f64,
    method: Method,
) -> Result<Vec<ExperimentRow>> {
    if statistics.is_empty() {
        return Err(Error::Config("no statistics requested".into()));
    }
    let nulls: Option<Vec<NullTable>> = match method {
        Method::Asymptotic => None,
        Method::MonteCarlo { reps, seed } => Some(
            statistics
                .iter()
                .map(|&s| montecarlo_null(s, scenario.n, scenario.m, reps, seed))
                .collect::<Result<_>>()?,
        ),
    };
    let decisions: Vec<Vec<bool>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let data = gen_dataset(scenario, rep)?;
            let ranks = compute_ranks(&data, TiePolicy::Reject)?;
            statistics
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let res = match &nulls {
                        None => run_test(&ranks, s, alpha, Method::Asymptotic)?,
                        Some(t) => run_test_with_null(&ranks, alpha, &t[i])?,
                    };
                    Ok(res.reject)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let reps = scenario.reps as f64;
    Ok(statistics
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rate = decisions.iter().filter(|d| d[i]).count() as f64 / reps;
            ExperimentRow {
                statistic: s.to_string(),
                n: scenario.n,
                m: scenario.m,
                family: scenario.family.to_string(),
                scatter: scenario.scatter.shape().name().to_string(),
                signal: scenario.signal.unwrap_or(0.0),
                alpha,
                method: method.name().to_string(),
                reps: scenario.reps,
                reject_rate: rate,
                se: (rate * (1.0 - rate) / reps).sqrt(),
            }
        })
        .collect())
}

/// Writes experiment rows as CSV with a header.
pub fn write_experiment_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairwise::kendall_tau_fast;

    #[test]
    fn signal_map() {
        assert_eq!(signal_to_rho(0.0, ScatterShape::Equicorrelation, 64).unwrap(), 0.0);
        let r = signal_to_rho(0.7, ScatterShape::Equicorrelation, 64).unwrap();
        assert!((r - 0.029266).abs() < 1e-6, "{r}");
        let r = signal_to_rho(0.3, ScatterShape::Pentadiagonal, 64).unwrap();
        assert!((r - 0.076877).abs() < 1e-6, "{r}");
        assert!(matches!(
            signal_to_rho(2016.0, ScatterShape::Equicorrelation, 64),
            Err(Error::InfeasibleSignal { .. })
        ));
        // large pentadiagonal correlations lose positive definiteness
        assert!(matches!(
            signal_to_rho(0.5 * 125.0, ScatterShape::Pentadiagonal, 64),
            Err(Error::InfeasibleSignal { .. })
        ));
        assert!(signal_to_rho(-1.0, ScatterShape::Equicorrelation, 4).is_err());
    }

    #[test]
    fn scatter_definiteness() {
        assert!(ScatterSpec::new(ScatterKind::Equicorrelation(-0.5), 4).cholesky().is_err());
        assert!(ScatterSpec::new(ScatterKind::Equicorrelation(-0.3), 4).cholesky().is_ok());
        let m = ScatterSpec::new(ScatterKind::Pentadiagonal(0.2), 6).matrix();
        assert_eq!((m[(0, 2)], m[(0, 3)], m[(5, 4)]), (0.2, 0.0, 0.2));
    }

    #[test]
    fn determinism() {
        let s = SimScenario::new(Family::Mvt { df: 3.0 }, ScatterShape::Equicorrelation, 20, 5, Some(0.5), 3, 9)
            .unwrap();
        assert_eq!(gen_dataset(&s, 1).unwrap(), gen_dataset(&s, 1).unwrap());
        assert_ne!(gen_dataset(&s, 1).unwrap(), gen_dataset(&s, 2).unwrap());
    }

    #[test]
    fn contamination_touches_only_chosen_entries() {
        let clean = SimScenario::new(Family::Mvn, ScatterShape::Equicorrelation, 40, 10, Some(1.0), 1, 4).unwrap();
        let mut dirty = clean.clone();
        dirty.family = Family::default_contamination();
        let a = gen_dataset(&clean, 0).unwrap();
        let b = gen_dataset(&dirty, 0).unwrap();
        let changed = a.values_row_major().iter().zip(b.values_row_major()).filter(|(x, y)| x != y).count();
        assert!(changed <= 20 && changed >= 18, "{changed}");
    }

    #[test]
    fn equicorrelated_tau_recovers_theta() {
        let m = 4;
        let signal = 1.5;
        let theta = (signal / binomial(m, 2) as f64).sqrt();
        let s = SimScenario::new(Family::Mvn, ScatterShape::Equicorrelation, 60, m, Some(signal), 300, 1).unwrap();
        let mut taus = Vec::new();
        for rep in 0..s.reps {
            let r = compute_ranks(&gen_dataset(&s, rep).unwrap(), TiePolicy::Reject).unwrap();
            for p in 0..m {
                for q in p + 1..m {
                    taus.push(kendall_tau_fast(r.column(p), r.column(q)).unwrap());
                }
            }
        }
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / taus.len() as f64).sqrt();
        // pairs within a replicate are correlated; use the replicate count
        let se = sd / (s.reps as f64).sqrt();
        assert!((mean - theta).abs() < 3.0 * se, "{mean} vs {theta} (se {se})");
    }

    #[test]
    fn identity_mvn_is_uncorrelated() {
        let s = SimScenario::new(Family::Mvn, ScatterShape::Identity, 2000, 3, None, 1, 2).unwrap();
        let d = gen_dataset(&s, 0).unwrap();
        assert!(pearson_sum_sq(&d).abs() < 0.01);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(SimScenario::new(Family::Mvn, ScatterShape::Identity, 10, 3, None, 0, 1).is_err());
        assert!(SimScenario::new(Family::Mvn, ScatterShape::Equicorrelation, 10, 3, None, 5, 1).is_err());
        assert!(SimScenario::new(Family::IidNull(Marginal::default()), ScatterShape::Equicorrelation, 10, 3, Some(0.1), 5, 1).is_err());
    }
}
