//! Data ingestion into per-column ranks.
//!
//! Every statistic in the crate is a function of the rank matrix alone. Rank 1
//! is the smallest observation in a column. Column and row indices in this
//! module are zero-based.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{mix, Domain};

/// An n x m matrix of observations, rows are samples and columns are variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    n: usize,
    m: usize,
}

impl DataMatrix {
    /// Builds a matrix from row-major values.
    pub fn from_row_major(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(Error::Shape { rows: n, cols: m, min_rows: 2 });
        }
        if values.len() != n * m {
            return Err(Error::LengthMismatch { left: values.len(), right: n * m });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / m, col: pos % m });
        }
        Ok(Self { values, n, m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::RaggedRow { row: i, expected: m, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(n, m, values)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if let Some((p, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::RaggedRow { row: p, expected: n, got: c.len() });
        }
        let mut values = vec![0.0; n * m];
        for (p, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * m + p] = v;
            }
        }
        Self::from_row_major(n, m, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.m + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.m..(row + 1) * self.m]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, col)).collect()
    }

    /// Applies `f` to every entry of column `col`.
    pub fn map_column(&mut self, col: usize, f: impl Fn(f64) -> f64) {
        for i in 0..self.n {
            let v = &mut self.values[i * self.m + col];
            *v = f(*v);
        }
    }

    pub fn values_row_major(&self) -> &[f64] {
        &self.values
    }
}

/// Per-column ranks; every column is a permutation of `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    // column-major
    ranks: Vec<u32>,
    n: usize,
    m: usize,
}

impl RankMatrix {
    /// Wraps rank columns after checking that each is a permutation of `1..=n`.
    pub fn from_columns(columns: Vec<Vec<u32>>) -> Result<Self> {
        let m = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 || m < 2 {
            return Err(Error::Shape { rows: n, cols: m, min_rows: 2 });
        }
        let mut ranks = Vec::with_capacity(n * m);
        let mut seen = vec![false; n + 1];
        for (p, col) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::LengthMismatch { left: col.len(), right: n });
            }
            seen.iter_mut().for_each(|s| *s = false);
            for &r in &col {
                let r = r as usize;
                if r == 0 || r > n || seen[r] {
                    return Err(Error::NotAPermutation { col: p, n });
                }
                seen[r] = true;
            }
            ranks.extend(col);
        }
        Ok(Self { ranks, n, m })
    }

    pub(crate) fn from_columns_unchecked(columns: Vec<Vec<u32>>) -> Self {
        let m = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        Self { ranks: columns.into_iter().flatten().collect(), n, m }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn column(&self, col: usize) -> &[u32] {
        &self.ranks[col * self.n..(col + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[u32]> {
        self.ranks.chunks_exact(self.n)
    }

    /// The ranks as real-valued data, for round trips through [`compute_ranks`].
    pub fn to_data(&self) -> DataMatrix {
        let cols: Vec<Vec<f64>> = self
            .columns()
            .map(|c| c.iter().map(|&r| r as f64).collect())
            .collect();
        DataMatrix::from_columns(&cols).expect("rank matrix has valid shape")
    }
}

/// How to treat tied observations within a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    #[default]
    Reject,
    /// Break ties by a keyed hash of `(seed, column, row)`.
    JitterWithSeed(u64),
}

/// Ranks every column of `data` (rank 1 = smallest).
pub fn compute_ranks(data: &DataMatrix, tie_policy: TiePolicy) -> Result<RankMatrix> {
    let columns: Vec<Result<Vec<u32>>> = (0..data.m())
        .into_par_iter()
        .map(|p| rank_column(&data.column(p), p, tie_policy))
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RankMatrix::from_columns_unchecked(columns))
}

fn rank_column(values: &[f64], col: usize, tie_policy: TiePolicy) -> Result<Vec<u32>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    match tie_policy {
        TiePolicy::Reject => {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            if let Some(w) = order.windows(2).find(|w| values[w[0]] == values[w[1]]) {
                return Err(Error::TiesPresent { col, value: values[w[0]] });
            }
        }
        TiePolicy::JitterWithSeed(seed) => {
            let key = |row: usize| mix(seed, Domain::TieBreak, &[col as u64, row as u64]);
            order.sort_by(|&a, &b| {
                values[a]
                    .total_cmp(&values[b])
                    .then_with(|| key(a).cmp(&key(b)))
                    .then_with(|| a.cmp(&b))
            });
        }
    }
    let mut ranks = vec![0u32; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as u32 + 1;
    }
    Ok(ranks)
}

/// Lists `(column, value)` for every value occurring more than once in its column.
pub fn detect_ties(data: &DataMatrix) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for p in 0..data.m() {
        let mut col = data.column(p);
        col.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < col.len() {
            let mut j = i + 1;
            while j < col.len() && col[j] == col[i] {
                j += 1;
            }
            if j - i > 1 {
                out.push((p, col[i]));
            }
            i = j;
        }
    }
    out
}
