//! The four rank-based kernels and their null constants.
//!
//! Each kernel is evaluated from its permutation-sum definition on the
//! within-tuple ranks of its k bivariate points. Kernel values are rationals
//! with a fixed denominator per kernel ([`KernelId::scale`]), so every
//! U-statistic in the crate is accumulated exactly as an integer numerator.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Kendall's tau, the U-statistic part of Spearman's rho, Hoeffding's D and
/// the Bergsma-Dassios sign covariance t*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelId {
    Tau,
    RhoHat,
    HoeffD,
    TStar,
}

impl KernelId {
    pub const ALL: [KernelId; 4] = [KernelId::Tau, KernelId::RhoHat, KernelId::HoeffD, KernelId::TStar];

    /// Kernel degree k.
    pub fn degree(self) -> usize {
        match self {
            KernelId::Tau => 2,
            KernelId::RhoHat => 3,
            KernelId::TStar => 4,
            KernelId::HoeffD => 5,
        }
    }

    /// Order of degeneracy under independence.
    pub fn degeneracy(self) -> usize {
        match self {
            KernelId::Tau | KernelId::RhoHat => 1,
            KernelId::HoeffD | KernelId::TStar => 2,
        }
    }

    /// Common denominator of all kernel values: `h * scale` is always an integer.
    pub fn scale(self) -> i64 {
        match self {
            KernelId::Tau => 1,
            KernelId::RhoHat => 2,
            KernelId::TStar => 24,
            KernelId::HoeffD => 480,
        }
    }

    /// Short lowercase name used on the command line and in files.
    pub fn name(self) -> &'static str {
        match self {
            KernelId::Tau => "tau",
            KernelId::RhoHat => "rho_hat",
            KernelId::HoeffD => "d",
            KernelId::TStar => "tstar",
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(KernelId::Tau),
            "rho_hat" => Ok(KernelId::RhoHat),
            "d" | "hoeffd" => Ok(KernelId::HoeffD),
            "tstar" => Ok(KernelId::TStar),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Degree, degeneracy and published null constants of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub id: KernelId,
    pub k: usize,
    pub d: usize,
    pub zeta_d: Ratio<i64>,
    /// Absent for non-degenerate kernels.
    pub eta: Option<Ratio<i64>>,
}

/// Tabulated constants. The HoeffD `eta` entry is the published value and is
/// not used for calibration; see [`crate::constants`].
pub fn kernel_spec(id: KernelId) -> KernelSpec {
    let r = Ratio::new;
    let (zeta_d, eta) = match id {
        KernelId::Tau => (r(1, 9), None),
        KernelId::RhoHat => (r(1, 9), None),
        KernelId::HoeffD => (r(1, 810_000), Some(r(7, 864_000) * r(7, 864_000))),
        KernelId::TStar => (r(1, 225), Some(r(2, 525) * r(2, 525))),
    };
    KernelSpec { id, k: id.degree(), d: id.degeneracy(), zeta_d, eta }
}

/// One bivariate rank observation `(r_x, r_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RankPoint {
    pub x: u32,
    pub y: u32,
}

impl RankPoint {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl From<(u32, u32)> for RankPoint {
    fn from((x, y): (u32, u32)) -> Self {
        Self { x, y }
    }
}

/// All permutations of `0..k`, in lexicographic order.
pub(crate) fn permutations(k: usize) -> &'static [Vec<usize>] {
    static CACHE: [OnceLock<Vec<Vec<usize>>>; 6] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CACHE[k].get_or_init(|| {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            out.push(cur.clone());
            // next lexicographic permutation
            let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
            let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    })
}

#[inline]
fn sgn(a: u32, b: u32) -> i64 {
    debug_assert_ne!(a, b, "ties are excluded by construction");
    if a > b {
        1
    } else {
        -1
    }
}

#[inline]
fn ge(a: u32, b: u32) -> i64 {
    (a >= b) as i64
}

fn phi_hoeffding(r: [u32; 5]) -> i64 {
    (ge(r[0], r[1]) - ge(r[0], r[2])) * (ge(r[0], r[3]) - ge(r[0], r[4]))
}

fn phi_tstar(r: [u32; 4]) -> i64 {
    let below = |a: u32, b: u32, c: u32, d: u32| (a.max(b) < c.min(d)) as i64;
    below(r[0], r[2], r[1], r[3]) + below(r[1], r[3], r[0], r[2])
        - below(r[0], r[1], r[2], r[3])
        - below(r[2], r[3], r[0], r[1])
}

/// Scaled kernel value `h * scale` from the permutation-sum definition.
/// Inputs must already hold distinct values per coordinate.
pub(crate) fn definitional_scaled(id: KernelId, xs: &[u32], ys: &[u32]) -> i64 {
    let k = id.degree();
    debug_assert!(xs.len() == k && ys.len() == k);
    let perms = permutations(k);
    match id {
        KernelId::Tau => sgn(xs[0], xs[1]) * sgn(ys[0], ys[1]),
        KernelId::RhoHat => perms
            .iter()
            .map(|p| sgn(xs[p[0]], xs[p[1]]) * sgn(ys[p[0]], ys[p[2]]))
            .sum(),
        KernelId::TStar => perms
            .iter()
            .map(|p| {
                let px = phi_tstar([xs[p[0]], xs[p[1]], xs[p[2]], xs[p[3]]]);
                if px == 0 {
                    return 0;
                }
                px * phi_tstar([ys[p[0]], ys[p[1]], ys[p[2]], ys[p[3]]])
            })
            .sum(),
        KernelId::HoeffD => perms
            .iter()
            .map(|p| {
                let px = phi_hoeffding([xs[p[0]], xs[p[1]], xs[p[2]], xs[p[3]], xs[p[4]]]);
                if px == 0 {
                    return 0;
                }
                px * phi_hoeffding([ys[p[0]], ys[p[1]], ys[p[2]], ys[p[3]], ys[p[4]]])
            })
            .sum(),
    }
}

/// Ranks of `values` within the slice (1-based). Values must be distinct.
pub(crate) fn within_ranks(values: &[u32]) -> Vec<u32> {
    values
        .iter()
        .map(|&v| 1 + values.iter().filter(|&&w| w < v).count() as u32)
        .collect()
}

fn rerank(id: KernelId, points: &[RankPoint]) -> Result<(Vec<u32>, Vec<u32>)> {
    let k = id.degree();
    if points.len() != k {
        return Err(Error::WrongArity { expected: k, got: points.len() });
    }
    let xs: Vec<u32> = points.iter().map(|p| p.x).collect();
    let ys: Vec<u32> = points.iter().map(|p| p.y).collect();
    for v in [&xs, &ys] {
        for i in 0..k {
            if v[i + 1..].contains(&v[i]) {
                return Err(Error::TiesPresent { col: 0, value: v[i] as f64 });
            }
        }
    }
    Ok((within_ranks(&xs), within_ranks(&ys)))
}

/// Exact kernel value as a rational.
pub fn eval_kernel_exact(id: KernelId, points: &[RankPoint]) -> Result<Ratio<i64>> {
    let (xs, ys) = rerank(id, points)?;
    Ok(Ratio::new(definitional_scaled(id, &xs, &ys), id.scale()))
}

/// Kernel value on `k` bivariate points. Absolute ranks are accepted; the
/// points are re-ranked within the tuple first.
pub fn eval_kernel(id: KernelId, points: &[RankPoint]) -> Result<f64> {
    let (xs, ys) = rerank(id, points)?;
    Ok(definitional_scaled(id, &xs, &ys) as f64 / id.scale() as f64)
}

/// Lookup of scaled kernel values indexed by the Lehmer code of the y-ranks
/// after sorting the tuple by x. Built once from the definitions.
pub(crate) struct KernelTable {
    k: usize,
    values: Vec<i64>,
}

impl KernelTable {
    pub(crate) fn get(id: KernelId) -> &'static KernelTable {
        static TABLES: [OnceLock<KernelTable>; 4] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let slot = KernelId::ALL.iter().position(|&i| i == id).unwrap();
        TABLES[slot].get_or_init(|| {
            let k = id.degree();
            let xs: Vec<u32> = (1..=k as u32).collect();
            let mut values = vec![0; permutations(k).len()];
            for p in permutations(k) {
                let ys: Vec<u32> = p.iter().map(|&v| v as u32 + 1).collect();
                values[lehmer_code(&ys)] = definitional_scaled(id, &xs, &ys);
            }
            KernelTable { k, values }
        })
    }

    /// Scaled kernel value for a tuple given as `(x, y)` pairs with distinct
    /// coordinates; the tuple need not be sorted.
    #[inline]
    pub(crate) fn eval(&self, pts: &mut [(u32, u32)]) -> i64 {
        debug_assert_eq!(pts.len(), self.k);
        pts.sort_unstable_by_key(|p| p.0);
        let mut code = 0usize;
        for i in 0..self.k {
            let smaller = pts[i + 1..].iter().filter(|q| q.1 < pts[i].1).count();
            code = code * (self.k - i) + smaller;
        }
        self.values[code]
    }
}

/// Lehmer code in mixed radix, matching [`KernelTable::eval`].
fn lehmer_code(ys: &[u32]) -> usize {
    let k = ys.len();
    let mut code = 0usize;
    for i in 0..k {
        let smaller = ys[i + 1..].iter().filter(|&&q| q < ys[i]).count();
        code = code * (k - i) + smaller;
    }
    code
}

/// Hoeffding's closed form for the second moment of 30 * D under independence.
fn hoeffding_30d_second_moment(n: i128) -> Ratio<i128> {
    Ratio::new(2 * (n * n + 5 * n - 32), 9 * n * (n - 1) * (n - 3) * (n - 4))
}

/// Normalisation between Hoeffding's classical D (maximum 1) and the
/// U-statistic with kernel `h_D` (maximum 1/30): `D_classical = 30 * U_D`.
pub const HOEFFDING_D_NORMALISATION: i128 = 30;

/// Exact null second moment `E0[U_h^2]` for sample size `n`.
///
/// The closed forms hold for every `n >= k`; this is checked against
/// exhaustive enumeration for `n = k..2k` in [`crate::constants`].
pub fn mu_h_exact(id: KernelId, n: usize) -> Result<Ratio<i128>> {
    let k = id.degree();
    if n < k {
        return Err(Error::SampleTooSmall { n, min: k });
    }
    let n = n as i128;
    let r = Ratio::new;
    Ok(match id {
        KernelId::Tau => r(2 * (2 * n + 5), 9 * n * (n - 1)),
        KernelId::RhoHat => r(n * n - 3, n * (n - 1) * (n - 2)),
        KernelId::TStar => r(8, 75) * r(3 * n * n + 5 * n - 18, n * (n - 1) * (n - 2) * (n - 3)),
        KernelId::HoeffD => {
            hoeffding_30d_second_moment(n)
                / (HOEFFDING_D_NORMALISATION * HOEFFDING_D_NORMALISATION)
        }
    })
}

/// `E0[U_h^2]` as a float; see [`mu_h_exact`].
pub fn mu_h(id: KernelId, n: usize) -> Result<f64> {
    let q = mu_h_exact(id, n)?;
    Ok(*q.numer() as f64 / *q.denom() as f64)
}

/// Hoeffding's published closed form, in the classical (30 * D) scale.
pub fn mu_hoeffding_classical(n: usize) -> Result<Ratio<i128>> {
    if n < 5 {
        return Err(Error::SampleTooSmall { n, min: 5 });
    }
    Ok(hoeffding_30d_second_moment(n as i128))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(k: u32) -> Vec<RankPoint> {
        (1..=k).map(|i| RankPoint::new(i, i)).collect()
    }

    #[test]
    fn monotone_tuples() {
        assert_eq!(eval_kernel(KernelId::Tau, &diag(2)).unwrap(), 1.0);
        assert_eq!(eval_kernel(KernelId::RhoHat, &diag(3)).unwrap(), 1.0);
        assert_eq!(eval_kernel_exact(KernelId::TStar, &diag(4)).unwrap(), Ratio::new(2, 3));
        assert_eq!(eval_kernel_exact(KernelId::HoeffD, &diag(5)).unwrap(), Ratio::new(1, 30));
    }

    #[test]
    fn absolute_ranks_are_reranked() {
        let pts = [RankPoint::new(10, 40), RankPoint::new(3, 7), RankPoint::new(25, 90)];
        let local = [RankPoint::new(2, 2), RankPoint::new(1, 1), RankPoint::new(3, 3)];
        assert_eq!(
            eval_kernel(KernelId::RhoHat, &pts).unwrap(),
            eval_kernel(KernelId::RhoHat, &local).unwrap()
        );
    }

    #[test]
    fn wrong_arity_and_ties() {
        assert_eq!(
            eval_kernel(KernelId::TStar, &diag(3)),
            Err(Error::WrongArity { expected: 4, got: 3 })
        );
        let tied = [RankPoint::new(1, 1), RankPoint::new(1, 2)];
        assert!(matches!(eval_kernel(KernelId::Tau, &tied), Err(Error::TiesPresent { .. })));
    }

    #[test]
    fn table_constants() {
        let t = kernel_spec(KernelId::Tau);
        assert_eq!((t.k, t.d, t.zeta_d, t.eta), (2, 1, Ratio::new(1, 9), None));
        let r = kernel_spec(KernelId::RhoHat);
        assert_eq!((r.k, r.d, r.zeta_d), (3, 1, Ratio::new(1, 9)));
        let s = kernel_spec(KernelId::TStar);
        assert_eq!((s.k, s.d, s.zeta_d), (4, 2, Ratio::new(1, 225)));
        assert_eq!(s.eta, Some(Ratio::new(4, 275_625)));
        let d = kernel_spec(KernelId::HoeffD);
        assert_eq!((d.k, d.d, d.zeta_d), (5, 2, Ratio::new(1, 810_000)));
        assert_eq!(d.eta, Some(Ratio::new(49, 746_496_000_000)));
    }

    #[test]
    fn mu_values() {
        assert_eq!(mu_h_exact(KernelId::Tau, 5).unwrap(), Ratio::new(1, 6));
        assert_eq!(mu_h_exact(KernelId::RhoHat, 5).unwrap(), Ratio::new(11, 30));
        assert_eq!(mu_h_exact(KernelId::TStar, 5).unwrap(), Ratio::new(656, 9000));
        // classical scale at n = 10, then the U-statistic scale
        assert_eq!(mu_hoeffding_classical(10).unwrap(), Ratio::new(236, 34_020));
        assert_eq!(mu_h_exact(KernelId::HoeffD, 10).unwrap(), Ratio::new(59, 7_654_500));
        assert_eq!(mu_h_exact(KernelId::HoeffD, 5).unwrap(), Ratio::new(1, 9000));
        assert!(matches!(mu_h(KernelId::HoeffD, 4), Err(Error::SampleTooSmall { n: 4, min: 5 })));
        assert!(matches!(mu_h(KernelId::Tau, 1), Err(Error::SampleTooSmall { n: 1, min: 2 })));
        assert!((mu_h(KernelId::Tau, 10).unwrap() - 50.0 / 810.0).abs() < 1e-15);
    }

    #[test]
    fn lookup_table_matches_definition_exhaustively() {
        for id in KernelId::ALL {
            let k = id.degree();
            let table = KernelTable::get(id);
            for px in permutations(k) {
                for py in permutations(k) {
                    let xs: Vec<u32> = px.iter().map(|&v| v as u32 + 1).collect();
                    let ys: Vec<u32> = py.iter().map(|&v| v as u32 + 1).collect();
                    let mut pts: Vec<(u32, u32)> = xs.iter().copied().zip(ys.iter().copied()).collect();
                    assert_eq!(table.eval(&mut pts), definitional_scaled(id, &xs, &ys));
                }
            }
        }
    }

    #[test]
    fn permutation_symmetry_exhaustive() {
        // every ordering of every relative configuration gives the same value
        for id in KernelId::ALL {
            let k = id.degree();
            for py in permutations(k).iter().step_by(7) {
                let base: Vec<RankPoint> =
                    (0..k).map(|i| RankPoint::new(i as u32 + 1, py[i] as u32 + 1)).collect();
                let v0 = eval_kernel_exact(id, &base).unwrap();
                for sigma in permutations(k) {
                    let shuffled: Vec<RankPoint> = sigma.iter().map(|&i| base[i]).collect();
                    assert_eq!(eval_kernel_exact(id, &shuffled).unwrap(), v0);
                }
            }
        }
    }

    #[test]
    fn bounded_and_null_mean_zero_at_tuple_scale() {
        for id in KernelId::ALL {
            let k = id.degree();
            let xs: Vec<u32> = (1..=k as u32).collect();
            let mut sum = 0i64;
            let mut max_abs = 0i64;
            for py in permutations(k) {
                let ys: Vec<u32> = py.iter().map(|&v| v as u32 + 1).collect();
                let v = definitional_scaled(id, &xs, &ys);
                sum += v;
                max_abs = max_abs.max(v.abs());
            }
            assert_eq!(sum, 0, "{id}: nonzero null mean");
            let bound = if id == KernelId::RhoHat { 3 } else { 1 };
            assert!(max_abs <= bound * id.scale(), "{id}: |h| = {max_abs}/{}", id.scale());
            // the observed maximum is 1 for every kernel except t* and D
            let expected_max = match id {
                KernelId::TStar => 16,
                KernelId::HoeffD => 16,
                _ => id.scale(),
            };
            assert_eq!(max_abs, expected_max, "{id}");
        }
    }
}
