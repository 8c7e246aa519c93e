//! Per-pair rank statistics: fast paths and enumeration oracles.
//!
//! Internally a pair of rank columns is reduced to one sequence `seq`, the
//! y-ranks listed in increasing x order. Every fast path works on `seq` and
//! accumulates an exact integer numerator, so results do not depend on
//! summation order or thread count.

use num_rational::Ratio;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{definitional_scaled, within_ranks, KernelId, KernelTable};
use crate::ranks::RankMatrix;

/// Which per-pair estimator to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// The U-statistic of the kernel, unbiased for theta.
    U,
    /// The degree-2k statistic unbiased for theta squared.
    W,
}

/// Statistic for the column pair `(p, q)`, zero-based with `p < q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValue {
    pub p: usize,
    pub q: usize,
    pub value: f64,
}

/// One value per column pair, in lexicographic pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStatistics {
    pub kernel: KernelId,
    pub kind: Kind,
    pub n: usize,
    pub m: usize,
    pub values: Vec<PairValue>,
}

impl PairStatistics {
    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|v| v.value)
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn validate(rx: &[u32], ry: &[u32], min: usize) -> Result<Vec<u32>> {
    if rx.len() != ry.len() {
        return Err(Error::LengthMismatch { left: rx.len(), right: ry.len() });
    }
    let n = rx.len();
    if n < min {
        return Err(Error::SampleTooSmall { n, min });
    }
    for (col, r) in [rx, ry].into_iter().enumerate() {
        let mut seen = vec![false; n];
        for &v in r {
            let i = v as usize;
            if i == 0 || i > n || std::mem::replace(&mut seen[i - 1], true) {
                return Err(Error::NotAPermutation { col, n });
            }
        }
    }
    Ok(ordered_by_x(&inverse(rx), ry))
}

/// `inv[r - 1]` is the row holding rank `r`.
fn inverse(r: &[u32]) -> Vec<u32> {
    let mut inv = vec![0; r.len()];
    for (i, &v) in r.iter().enumerate() {
        inv[v as usize - 1] = i as u32;
    }
    inv
}

fn ordered_by_x(inv_x: &[u32], ry: &[u32]) -> Vec<u32> {
    inv_x.iter().map(|&i| ry[i as usize]).collect()
}

fn count_inversions(seq: &[u32]) -> u64 {
    fn sort(a: &mut [u32], buf: &mut [u32]) -> u64 {
        let n = a.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = sort(&mut a[..mid], &mut buf[..mid]) + sort(&mut a[mid..], &mut buf[mid..]);
        let (mut i, mut j, mut k) = (0, mid, 0);
        while i < mid && j < n {
            if a[i] < a[j] {
                buf[k] = a[i];
                i += 1;
            } else {
                buf[k] = a[j];
                inv += (mid - i) as u64;
                j += 1;
            }
            k += 1;
        }
        buf[k..k + mid - i].copy_from_slice(&a[i..mid]);
        k += mid - i;
        buf[k..k + n - j].copy_from_slice(&a[j..n]);
        a.copy_from_slice(&buf[..n]);
        inv
    }
    let mut a = seq.to_vec();
    let mut buf = vec![0; a.len()];
    sort(&mut a, &mut buf)
}

/// For each position in x order, the number of earlier points with smaller y.
fn lower_left_counts(seq: &[u32]) -> Vec<u32> {
    let n = seq.len();
    let mut tree = vec![0u32; n + 1];
    let mut out = Vec::with_capacity(n);
    for &y in seq {
        let mut c = 0;
        let mut i = y as usize - 1;
        while i > 0 {
            c += tree[i];
            i &= i - 1;
        }
        out.push(c);
        let mut i = y as usize;
        while i <= n {
            tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    out
}

fn ratio(num: i128, den: i128) -> f64 {
    num as f64 / den as f64
}

fn tau_seq(seq: &[u32]) -> f64 {
    let n = seq.len() as i128;
    let inv = count_inversions(seq) as i128;
    ratio(n * (n - 1) - 4 * inv, n * (n - 1))
}

fn sum_sq_diff(seq: &[u32]) -> i128 {
    seq.iter()
        .enumerate()
        .map(|(i, &y)| {
            let d = (i as i128 + 1) - y as i128;
            d * d
        })
        .sum()
}

fn spearman_seq(seq: &[u32]) -> f64 {
    let n = seq.len() as i128;
    let den = n * (n * n - 1);
    ratio(den - 6 * sum_sq_diff(seq), den)
}

fn rho_hat_seq(seq: &[u32]) -> f64 {
    let n = seq.len() as i128;
    let den = n * (n - 1) * (n - 2);
    let inv = count_inversions(seq) as i128;
    ratio(den + 12 * inv - 6 * sum_sq_diff(seq), den)
}

/// Numerator and denominator of the Hoeffding U-statistic.
fn hoeffding_parts(seq: &[u32]) -> (i128, i128) {
    let n = seq.len() as i128;
    let below = lower_left_counts(seq);
    let (mut d1, mut d2, mut d3) = (0i128, 0i128, 0i128);
    for (i, (&y, &c)) in seq.iter().zip(&below).enumerate() {
        let r = i as i128 + 1;
        let s = y as i128;
        let q = c as i128 + 1;
        d1 += (q - 1) * (q - 2);
        d2 += (r - 1) * (r - 2) * (s - 1) * (s - 2);
        d3 += (r - 2) * (s - 2) * (q - 1);
    }
    let num = (n - 2) * (n - 3) * d1 + d2 - 2 * (n - 2) * d3;
    (num, n * (n - 1) * (n - 2) * (n - 3) * (n - 4))
}

fn hoeffding_seq(seq: &[u32]) -> f64 {
    let (num, den) = hoeffding_parts(seq);
    ratio(num, den)
}

fn tstar_seq(seq: &[u32]) -> f64 {
    let n = seq.len();
    let w = n + 1;
    let below = prefix_counts(seq);
    let choose2 = |c: u64| c * c.saturating_sub(1) / 2;
    let mut matched: u64 = 0;
    for j in 1..n {
        let x = j + 1;
        let yj = seq[j] as usize;
        for &yi in &seq[..j] {
            let (lo, hi) = if (yi as usize) < yj { (yi as usize, yj) } else { (yj, yi as usize) };
            let upper = (below[x * w + hi] as usize + n - x - hi) as u64;
            let lower_right = (lo - 1) as u64 - below[x * w + lo - 1] as u64;
            matched += choose2(upper) + choose2(lower_right);
        }
    }
    let total = binomial(n, 4) as i128;
    ratio(3 * matched as i128 - total, 3 * total)
}

/// Kendall's tau by merge-sort inversion counting, O(n log n).
pub fn kendall_tau_fast(rx: &[u32], ry: &[u32]) -> Result<f64> {
    Ok(tau_seq(&validate(rx, ry, 2)?))
}

/// Classical Spearman rank correlation.
pub fn spearman_rho(rx: &[u32], ry: &[u32]) -> Result<f64> {
    Ok(spearman_seq(&validate(rx, ry, 2)?))
}

/// The degree-3 U-statistic part of Spearman's rho, through
/// `rho_hat = ((n + 1) rho_s - 3 tau) / (n - 2)`.
pub fn rho_hat(rx: &[u32], ry: &[u32]) -> Result<f64> {
    Ok(rho_hat_seq(&validate(rx, ry, 3)?))
}

/// U-statistic of the Hoeffding D kernel from bivariate rank counts,
/// O(n log n). Equals Hoeffding's classical D divided by 30.
pub fn hoeffding_d(rx: &[u32], ry: &[u32]) -> Result<f64> {
    Ok(hoeffding_seq(&validate(rx, ry, 5)?))
}

/// [`hoeffding_d`] as an exact rational.
pub fn hoeffding_d_exact(rx: &[u32], ry: &[u32]) -> Result<Ratio<i128>> {
    let (num, den) = hoeffding_parts(&validate(rx, ry, 5)?);
    Ok(Ratio::new(num, den))
}

/// U-statistic of the t* kernel, O(n^2).
///
/// A 4-tuple scores 2/3 when splitting it into its two lowest and two highest
/// points gives the same partition in x and in y, and -1/3 otherwise.
pub fn tstar(rx: &[u32], ry: &[u32]) -> Result<f64> {
    Ok(tstar_seq(&validate(rx, ry, 4)?))
}

/// Calls `f` on every k-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(t) = (0..k).rev().find(|&t| idx[t] < n - k + t) else { return };
        idx[t] += 1;
        for u in t + 1..k {
            idx[u] = idx[u - 1] + 1;
        }
    }
}

fn naive_kernel(id: KernelId, seq: &[u32], tuple: &[usize]) -> i64 {
    let xs: Vec<u32> = tuple.iter().map(|&i| i as u32).collect();
    let ys: Vec<u32> = tuple.iter().map(|&i| seq[i]).collect();
    definitional_scaled(id, &within_ranks(&xs), &within_ranks(&ys))
}

/// U-statistic by enumerating every k-subset of rows. Oracle use only.
pub fn u_stat_naive(id: KernelId, rx: &[u32], ry: &[u32]) -> Result<f64> {
    let k = id.degree();
    let seq = validate(rx, ry, k)?;
    let mut sum: i128 = 0;
    for_each_subset(seq.len(), k, |t| sum += naive_kernel(id, &seq, t) as i128);
    Ok(ratio(sum, binomial(seq.len(), k) as i128 * id.scale() as i128))
}

/// W-statistic by enumerating every 2k-subset and all of its k-splits.
/// Oracle use only.
pub fn w_stat_naive(id: KernelId, rx: &[u32], ry: &[u32]) -> Result<f64> {
    let k = id.degree();
    let seq = validate(rx, ry, 2 * k)?;
    let n = seq.len();
    let mut sum: i128 = 0;
    let mut left = Vec::with_capacity(k);
    let mut right = Vec::with_capacity(k);
    for_each_subset(n, 2 * k, |big| {
        for mask in 0u32..(1 << (2 * k)) {
            if mask.count_ones() as usize != k {
                continue;
            }
            left.clear();
            right.clear();
            for (b, &i) in big.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            sum += naive_kernel(id, &seq, &left) as i128 * naive_kernel(id, &seq, &right) as i128;
        }
    });
    let s = id.scale() as i128;
    let den = binomial(n, 2 * k) as i128 * binomial(2 * k, k) as i128 * s * s;
    Ok(ratio(sum, den))
}

/// Kendall W from per-point concordance scores in O(n log n).
fn w_tau_seq(seq: &[u32]) -> f64 {
    let n = seq.len() as i128;
    let below = lower_left_counts(seq);
    let mut total = 0i128;
    let mut sum_r2 = 0i128;
    for (i, (&y, &sw)) in seq.iter().zip(&below).enumerate() {
        let sw = sw as i128;
        let nw = i as i128 - sw;
        let se = y as i128 - 1 - sw;
        let ne = n - 1 - sw - nw - se;
        let r = ne + sw - nw - se;
        total += r;
        sum_r2 += r * r;
    }
    let s_tot = total / 2;
    let pairs = n * (n - 1) / 2;
    let num = s_tot * s_tot - sum_r2 + pairs;
    ratio(num, pairs * (n - 2) * (n - 3) / 2)
}

/// Colex rank of a sorted subset.
#[inline]
fn colex_rank(binom: &[Vec<usize>], subset: impl Iterator<Item = usize>) -> usize {
    subset.enumerate().map(|(t, c)| binom[c][t + 1]).sum()
}

/// Generic W by inclusion-exclusion over partial sums, O(2^k C(n, k)).
///
/// With `H_l[A]` the sum of `h` over k-tuples containing the l-set `A`,
/// `sum_i h_i hbar_i = sum_l (-1)^l sum_A H_l[A]^2`.
fn w_generic_seq(id: KernelId, seq: &[u32]) -> f64 {
    let n = seq.len();
    let k = id.degree();
    let table = KernelTable::get(id);
    let binom: Vec<Vec<usize>> =
        (0..=n).map(|a| (0..=k).map(|b| binomial(a, b) as usize).collect()).collect();
    let mut partial: Vec<Vec<i64>> = (0..k).map(|l| vec![0i64; binom[n][l]]).collect();
    let mut pts = vec![(0u32, 0u32); k];
    let mut sum_sq: i128 = 0;
    for_each_subset(n, k, |t| {
        for (p, &i) in pts.iter_mut().zip(t) {
            *p = (i as u32, seq[i]);
        }
        let v = table.eval(&mut pts);
        if v == 0 {
            return;
        }
        sum_sq += (v as i128) * (v as i128);
        partial[0][0] += v;
        for mask in 1u32..(1 << k) - 1 {
            let sub = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| t[b]);
            partial[mask.count_ones() as usize][colex_rank(&binom, sub)] += v;
        }
    });
    let mut acc: i128 = if k % 2 == 0 { sum_sq } else { -sum_sq };
    for (l, h) in partial.iter().enumerate() {
        let norm: i128 = h.iter().map(|&v| (v as i128) * (v as i128)).sum();
        acc += if l % 2 == 0 { norm } else { -norm };
    }
    let s = id.scale() as i128;
    ratio(acc, binomial(n, k) as i128 * binomial(n - k, k) as i128 * s * s)
}

/// `below[x * (n + 1) + y] = #{points with x-rank <= x and y-rank <= y}`.
fn prefix_counts(seq: &[u32]) -> Vec<u32> {
    let n = seq.len();
    let w = n + 1;
    let mut below = vec![0u32; w * w];
    for x in 1..=n {
        let yx = seq[x - 1] as usize;
        for y in 0..=n {
            below[x * w + y] = below[(x - 1) * w + y] + (y >= yx) as u32;
        }
    }
    below
}

/// W for the rho-hat kernel in O(n^2).
///
/// Every triple has `h = +-1`, and the pair sums `H_2[a, b]` follow from
/// quadrant counts around `(x_a, y_b)` and `(x_b, y_a)`.
fn w_rho_hat_seq(seq: &[u32]) -> f64 {
    let n = seq.len();
    let w = n + 1;
    let ni = n as i64;
    let below = prefix_counts(seq);
    let cnt = |x: usize, y: usize| below[x * w + y] as i64;
    // sum over all points c of sgn(x_c - x) sgn(y_c - y), points on either line excluded
    let quad = |x: usize, y: usize| {
        let (xi, yi) = (x as i64, y as i64);
        let sw = cnt(x - 1, y - 1);
        let nw = (xi - 1) - cnt(x - 1, y);
        let se = (yi - 1) - cnt(x, y - 1);
        let ne = ni - xi - yi + cnt(x, y);
        ne + sw - nw - se
    };
    let sg = |a: i64, b: i64| (a > b) as i64 - (a < b) as i64;
    let mut h1 = vec![0i64; n];
    let mut norm2: i128 = 0;
    for a in 0..n {
        let (xa, ya) = (a as i64 + 1, seq[a] as i64);
        for b in a + 1..n {
            let (xb, yb) = (b as i64 + 1, seq[b] as i64);
            let (sx, sy) = (sg(xa, xb), sg(ya, yb));
            // sum over c outside {a, b} of sgn(v - v_c), for v a rank of a or b
            let rest = |v: i64, s: i64| (2 * v - ni - 1) - s;
            let h2 = sx * rest(ya, sy) + sy * rest(xa, sx) - sx * rest(yb, -sy) - sy * rest(xb, -sx)
                + quad(a + 1, yb as usize)
                + quad(b + 1, ya as usize);
            h1[a] += h2;
            h1[b] += h2;
            norm2 += (h2 as i128) * (h2 as i128);
        }
    }
    // each triple is counted twice in h1 and three times in the total
    let h1: Vec<i128> = h1.iter().map(|&v| (v / 2) as i128).collect();
    let total: i128 = h1.iter().sum::<i128>() / 3;
    let norm1: i128 = h1.iter().map(|v| v * v).sum();
    let triples = binomial(n, 3) as i128;
    let acc = total * total - norm1 + norm2 - 4 * triples;
    ratio(acc, triples * binomial(n - 3, 3) as i128 * 4)
}

/// W-statistic, the unbiased estimator of theta squared built from products
/// of kernels on disjoint tuples.
///
/// Kendall's tau uses an O(n log n) closed form and rho-hat an O(n^2) one.
/// t* and D use the generic O(2^k C(n, k)) inclusion-exclusion, which becomes
/// expensive above n of about 60.
pub fn w_stat(id: KernelId, rx: &[u32], ry: &[u32]) -> Result<f64> {
    let seq = validate(rx, ry, 2 * id.degree())?;
    Ok(w_seq(id, &seq))
}

/// Generic inclusion-exclusion W for any kernel, including tau.
pub fn w_stat_generic(id: KernelId, rx: &[u32], ry: &[u32]) -> Result<f64> {
    let seq = validate(rx, ry, 2 * id.degree())?;
    Ok(w_generic_seq(id, &seq))
}

fn w_seq(id: KernelId, seq: &[u32]) -> f64 {
    match id {
        KernelId::Tau => w_tau_seq(seq),
        KernelId::RhoHat => w_rho_hat_seq(seq),
        _ => w_generic_seq(id, seq),
    }
}

fn u_seq(id: KernelId, seq: &[u32]) -> f64 {
    match id {
        KernelId::Tau => tau_seq(seq),
        KernelId::RhoHat => rho_hat_seq(seq),
        KernelId::HoeffD => hoeffding_seq(seq),
        KernelId::TStar => tstar_seq(seq),
    }
}

/// Fast-path U-statistic of any kernel.
pub fn u_stat(id: KernelId, rx: &[u32], ry: &[u32]) -> Result<f64> {
    Ok(u_seq(id, &validate(rx, ry, id.degree())?))
}

/// Applies `f` to the ordered sequence of every column pair, in parallel,
/// returning values in lexicographic pair order.
pub(crate) fn map_pairs<F>(ranks: &RankMatrix, f: F) -> Vec<PairValue>
where
    F: Fn(&[u32]) -> f64 + Sync,
{
    let m = ranks.m();
    let inverses: Vec<Vec<u32>> = ranks.columns().map(inverse).collect();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|p| (p + 1..m).map(move |q| (p, q))).collect();
    pairs
        .into_par_iter()
        .map(|(p, q)| {
            let seq = ordered_by_x(&inverses[p], ranks.column(q));
            PairValue { p, q, value: f(&seq) }
        })
        .collect()
}

/// Minimum sample size for a per-pair statistic.
pub fn min_n(id: KernelId, kind: Kind) -> usize {
    match kind {
        Kind::U => id.degree(),
        Kind::W => 2 * id.degree(),
    }
}

/// Per-pair U or W statistics for every pair of columns.
pub fn all_pairs(ranks: &RankMatrix, id: KernelId, kind: Kind) -> Result<PairStatistics> {
    let n = ranks.n();
    let min = min_n(id, kind);
    if n < min {
        return Err(Error::SampleTooSmall { n, min });
    }
    let values = match kind {
        Kind::U => map_pairs(ranks, |s| u_seq(id, s)),
        Kind::W => map_pairs(ranks, |s| w_seq(id, s)),
    };
    Ok(PairStatistics { kernel: id, kind, n, m: ranks.m(), values })
}

/// Spearman's rho for every pair of columns.
pub fn all_pairs_spearman(ranks: &RankMatrix) -> Vec<PairValue> {
    map_pairs(ranks, spearman_seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_permutation, substream, Domain};

    fn rand_pair(n: usize, key: u64) -> (Vec<u32>, Vec<u32>) {
        let mut rng = substream(key, Domain::Oracle, &[n as u64]);
        (random_permutation(&mut rng, n), random_permutation(&mut rng, n))
    }

    #[test]
    fn kendall_examples() {
        let id = [1, 2, 3, 4];
        assert_eq!(kendall_tau_fast(&id, &[1, 2, 3, 4]).unwrap(), 1.0);
        assert_eq!(kendall_tau_fast(&id, &[4, 3, 2, 1]).unwrap(), -1.0);
        assert!((kendall_tau_fast(&id, &[2, 1, 4, 3]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(kendall_tau_fast(&id, &[1, 2]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(kendall_tau_fast(&id, &[1, 1, 3, 4]), Err(Error::NotAPermutation { col: 1, .. })));
    }

    #[test]
    fn spearman_and_rho_hat_examples() {
        assert_eq!(spearman_rho(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1, 2, 3], &[1, 3, 2]).unwrap(), 0.5);
        assert_eq!(spearman_rho(&[1, 2, 3], &[3, 2, 1]).unwrap(), -1.0);
        assert_eq!(rho_hat(&[1, 2, 3], &[1, 3, 2]).unwrap(), 1.0);
        assert_eq!(u_stat_naive(KernelId::RhoHat, &[1, 2, 3], &[1, 3, 2]).unwrap(), 1.0);
        for n in 3..9u32 {
            let up: Vec<u32> = (1..=n).collect();
            let down: Vec<u32> = (1..=n).rev().collect();
            assert_eq!(rho_hat(&up, &up).unwrap(), 1.0);
            assert_eq!(rho_hat(&up, &down).unwrap(), -1.0);
        }
        assert!(matches!(rho_hat(&[1, 2], &[2, 1]), Err(Error::SampleTooSmall { n: 2, min: 3 })));
    }

    #[test]
    fn hoeffding_examples() {
        let up = [1, 2, 3, 4, 5];
        assert_eq!(hoeffding_d(&up, &up).unwrap(), 1.0 / 30.0);
        // reversing one coordinate leaves D unchanged
        assert_eq!(hoeffding_d(&up, &[5, 4, 3, 2, 1]).unwrap(), 1.0 / 30.0);
        assert_eq!(u_stat_naive(KernelId::HoeffD, &up, &[5, 4, 3, 2, 1]).unwrap(), 1.0 / 30.0);
        assert!(matches!(hoeffding_d(&[1, 2, 3, 4], &[1, 2, 3, 4]), Err(Error::SampleTooSmall { .. })));
    }

    #[test]
    fn tstar_examples() {
        assert_eq!(tstar(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 2.0 / 3.0);
        // averaging over every pairing at n = 4 gives zero
        let x = [1, 2, 3, 4];
        let mut sum = 0.0;
        for p in crate::kernels::permutations(4) {
            let y: Vec<u32> = p.iter().map(|&v| v as u32 + 1).collect();
            sum += tstar(&x, &y).unwrap();
        }
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn naive_examples() {
        assert!((u_stat_naive(KernelId::Tau, &[1, 2, 3], &[1, 3, 2]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(u_stat_naive(KernelId::RhoHat, &[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 1.0);
        assert_eq!(u_stat_naive(KernelId::TStar, &[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn fast_paths_match_enumeration() {
        for id in KernelId::ALL {
            for n in id.degree()..=9 {
                for key in 0..6 {
                    let (x, y) = rand_pair(n, key * 31 + id.degree() as u64);
                    let fast = u_stat(id, &x, &y).unwrap();
                    let naive = u_stat_naive(id, &x, &y).unwrap();
                    assert!((fast - naive).abs() <= 1e-12 * naive.abs().max(1e-3), "{id} n={n}: {fast} vs {naive}");
                }
            }
        }
    }

    #[test]
    fn w_examples() {
        let id = [1, 2, 3, 4];
        assert_eq!(w_stat(KernelId::Tau, &id, &id).unwrap(), 1.0);
        assert_eq!(w_stat(KernelId::Tau, &id, &[2, 1, 4, 3]).unwrap(), 1.0);
        assert_eq!(w_stat_naive(KernelId::Tau, &id, &id).unwrap(), 1.0);
        assert_eq!(w_stat_naive(KernelId::Tau, &id, &[2, 1, 4, 3]).unwrap(), 1.0);
        assert_eq!(w_stat_generic(KernelId::Tau, &id, &[2, 1, 4, 3]).unwrap(), 1.0);
        assert!(matches!(w_stat(KernelId::Tau, &[1, 2, 3], &[1, 2, 3]), Err(Error::SampleTooSmall { n: 3, min: 4 })));
    }

    #[test]
    fn w_matches_enumeration() {
        for (id, max_n) in [(KernelId::Tau, 9), (KernelId::RhoHat, 9), (KernelId::TStar, 9), (KernelId::HoeffD, 11)] {
            for n in 2 * id.degree()..=max_n {
                for key in 0..3 {
                    let (x, y) = rand_pair(n, 1000 + key);
                    let naive = w_stat_naive(id, &x, &y).unwrap();
                    let fast = w_stat(id, &x, &y).unwrap();
                    let generic = w_stat_generic(id, &x, &y).unwrap();
                    let tol = 1e-12 * naive.abs().max(1e-6);
                    assert!((fast - naive).abs() <= tol, "{id} n={n}: {fast} vs {naive}");
                    assert!((generic - naive).abs() <= tol, "{id} n={n}: {generic} vs {naive}");
                }
            }
        }
    }

    #[test]
    fn w_tau_is_unbiased_for_zero_at_n4() {
        let x = [1, 2, 3, 4];
        let sum: f64 = crate::kernels::permutations(4)
            .iter()
            .map(|p| {
                let y: Vec<u32> = p.iter().map(|&v| v as u32 + 1).collect();
                w_stat(KernelId::Tau, &x, &y).unwrap()
            })
            .sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_arguments() {
        for id in KernelId::ALL {
            for n in id.degree()..=8 {
                let (x, y) = rand_pair(n, 77);
                assert_eq!(u_stat_naive(id, &x, &y).unwrap(), u_stat_naive(id, &y, &x).unwrap());
                assert!((u_stat(id, &x, &y).unwrap() - u_stat(id, &y, &x).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn all_pairs_layout() {
        let cols = vec![vec![1, 2, 3, 4, 5], vec![1, 2, 3, 4, 5], vec![1, 2, 3, 4, 5]];
        let r = RankMatrix::from_columns(cols).unwrap();
        let ps = all_pairs(&r, KernelId::Tau, Kind::U).unwrap();
        assert_eq!(ps.values.len(), 3);
        assert!(ps.values.iter().all(|v| v.value == 1.0));
        assert_eq!(
            ps.values.iter().map(|v| (v.p, v.q)).collect::<Vec<_>>(),
            vec![(0, 1), (0, 2), (1, 2)]
        );
        let mut rng = substream(5, Domain::Oracle, &[]);
        let cols: Vec<Vec<u32>> = (0..4).map(|_| random_permutation(&mut rng, 7)).collect();
        let r = RankMatrix::from_columns(cols.clone()).unwrap();
        let ps = all_pairs(&r, KernelId::Tau, Kind::U).unwrap();
        for v in &ps.values {
            assert_eq!(v.value, u_stat_naive(KernelId::Tau, &cols[v.p], &cols[v.q]).unwrap());
        }
    }
}
