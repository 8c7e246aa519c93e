//! Null constants used for rescaling, resolved by exact enumeration.
//!
//! For a kernel of degree k, `E0[U^2]` at `n = k..2k-1` is computed by
//! enumerating every relative ordering of the sample; the covariances
//! `zeta_c` then follow from a triangular solve of
//! `C(n,k) E0[U^2] = sum_c C(k,c) C(n-k,k-c) zeta_c`.
//!
//! For the degenerate kernels the second-order projection
//! `g(a, b) = E[h(a, b, X_3, ..., X_k)]` is computed exactly at rational
//! points. For both t* and D it equals `c * K(u1,u2) * K(v1,v2)` with
//! `K(u,u') = 1/3 - max(u,u') + (u^2 + u'^2)/2`, whose eigenvalues are
//! `1/(pi^2 j^2)`. Hence `zeta_2 = c^2 / 90^2` and
//! `eta = E[g12 g23 g34 g41] = c^4 / 9450^2`.
//!
//! The resolved values are stamped into a JSON file. A copy is embedded in
//! the crate and checked against a fresh resolution by the test suite.

use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use num_rational::Ratio;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{mu_h_exact, permutations, KernelId, KernelTable};
use crate::pairwise::{binomial, for_each_subset};

pub type Q = Ratio<i128>;

const EMBEDDED: &str = include_str!("../constants.json");

/// Resolved constants of one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstants {
    pub kernel: KernelId,
    /// `zeta[c - 1] = zeta_c` for `c = 1..=k`.
    pub zeta: Vec<Q>,
    /// Coefficient `c` of the rank-one second-order projection (degenerate kernels).
    pub projection: Option<Q>,
    /// Fourth-moment constant (degenerate kernels).
    pub eta: Option<Q>,
}

impl KernelConstants {
    /// `zeta_d` at the kernel's degeneracy order.
    pub fn zeta_d(&self) -> Q {
        self.zeta[self.kernel.degeneracy() - 1]
    }

    /// `E0[U^2]` at sample size `n` implied by the `zeta_c`.
    pub fn second_moment(&self, n: usize) -> Result<Q> {
        let k = self.kernel.degree();
        if n < k {
            return Err(Error::SampleTooSmall { n, min: k });
        }
        let mut sum = Q::zero();
        for c in 1..=k {
            let w = binomial(k, c) * binomial(n - k, k - c);
            sum += self.zeta[c - 1] * Q::from_integer(w as i128);
        }
        Ok(sum / Q::from_integer(binomial(n, k) as i128))
    }
}

/// Constants for all four kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    kernels: Vec<KernelConstants>,
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Exact `E0[U^2]` by enumerating all `n!` relative orderings.
pub fn exhaustive_second_moment(id: KernelId, n: usize) -> Result<Q> {
    let k = id.degree();
    if n < k {
        return Err(Error::SampleTooSmall { n, min: k });
    }
    if n > 10 {
        return Err(Error::Domain(format!("exhaustive enumeration limited to n <= 10, got {n}")));
    }
    let table = KernelTable::get(id);
    let mut subsets = Vec::new();
    for_each_subset(n, k, |t| subsets.push(t.to_vec()));
    // split the n! orderings by the y-rank of the first point
    let total: i128 = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut rest: Vec<u32> = (1..=n as u32).filter(|&v| v != first as u32 + 1).collect();
            let mut seq = vec![0u32; n];
            let mut pts = vec![(0u32, 0u32); k];
            let mut acc: i128 = 0;
            loop {
                seq[0] = first as u32 + 1;
                seq[1..].copy_from_slice(&rest);
                let mut u: i64 = 0;
                for t in &subsets {
                    for (p, &i) in pts.iter_mut().zip(t) {
                        *p = (i as u32, seq[i]);
                    }
                    u += table.eval(&mut pts);
                }
                acc += (u as i128) * (u as i128);
                if !next_permutation(&mut rest) {
                    break;
                }
            }
            acc
        })
        .sum();
    let orderings: i128 = (1..=n as i128).product();
    let norm = binomial(n, k) as i128 * id.scale() as i128;
    Ok(Q::new(total, orderings * norm * norm))
}

fn next_permutation(v: &mut [u32]) -> bool {
    let n = v.len();
    let Some(i) = (1..n).rev().find(|&i| v[i - 1] < v[i]) else { return false };
    let j = (i..n).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `zeta_1..zeta_k` from exhaustive second moments at `n = k..2k-1`.
pub fn resolve_zetas(id: KernelId) -> Result<Vec<Q>> {
    let k = id.degree();
    let mut zeta = vec![Q::zero(); k];
    for j in 0..k {
        let n = k + j;
        let c0 = k - j;
        let mut rhs = exhaustive_second_moment(id, n)? * Q::from_integer(binomial(n, k) as i128);
        for c in c0 + 1..=k {
            rhs -= zeta[c - 1] * Q::from_integer((binomial(k, c) * binomial(n - k, k - c)) as i128);
        }
        zeta[c0 - 1] = rhs / Q::from_integer((binomial(k, c0) * binomial(n - k, k - c0)) as i128);
    }
    Ok(zeta)
}

/// The one-dimensional Cramer-von Mises kernel on `[0,1]`.
pub fn cvm_kernel(u: Q, v: Q) -> Q {
    Q::new(1, 3) - u.max(v) + (u * u + v * v) / Q::from_integer(2)
}

/// Distribution of the ordering of `k - 2` uniform points relative to two
/// fixed coordinates `lo < hi`: returns `(keys, probability)` where `keys[i]`
/// sorts all k points, the fixed ones at indices 0 and 1.
fn orderings(fixed: [Q; 2], k: usize) -> Vec<(Vec<(u32, u32)>, Q)> {
    let lo = fixed[0].min(fixed[1]);
    let hi = fixed[0].max(fixed[1]);
    let probs = [lo, hi - lo, Q::one() - hi];
    let others = k - 2;
    let fact: i128 = (1..=others as i128).product();
    let mut out = Vec::new();
    for code in 0..3usize.pow(others as u32) {
        let mut cells = Vec::with_capacity(others);
        let mut c = code;
        let mut p = Q::one();
        for _ in 0..others {
            cells.push(c % 3);
            p *= probs[c % 3];
            c /= 3;
        }
        if p.is_zero() {
            continue;
        }
        for perm in permutations(others) {
            let mut keys = vec![(0u32, 0u32); k];
            keys[0] = (if fixed[0] < fixed[1] { 1 } else { 3 }, 0);
            keys[1] = (if fixed[0] < fixed[1] { 3 } else { 1 }, 0);
            for i in 0..others {
                keys[i + 2] = (2 * cells[i] as u32, perm[i] as u32);
            }
            out.push((keys, p / Q::from_integer(fact)));
        }
    }
    out
}

fn keys_to_ranks(keys: &[(u32, u32)]) -> Vec<u32> {
    keys.iter().map(|a| 1 + keys.iter().filter(|b| *b < a).count() as u32).collect()
}

/// Exact second-order projection `E[h(a, b, X_3..X_k)]` for `a = (u1, v1)`,
/// `b = (u2, v2)` with distinct coordinates in `(0, 1)`.
pub fn projection_two(id: KernelId, a: (Q, Q), b: (Q, Q)) -> Q {
    let k = id.degree();
    let table = KernelTable::get(id);
    let xs = orderings([a.0, b.0], k);
    let ys = orderings([a.1, b.1], k);
    let x_ranks: Vec<(Vec<u32>, Q)> = xs.iter().map(|(kk, p)| (keys_to_ranks(kk), *p)).collect();
    let y_ranks: Vec<(Vec<u32>, Q)> = ys.iter().map(|(kk, p)| (keys_to_ranks(kk), *p)).collect();
    let mut sum = Q::zero();
    let mut pts = vec![(0u32, 0u32); k];
    for (rx, px) in &x_ranks {
        for (ry, py) in &y_ranks {
            for i in 0..k {
                pts[i] = (rx[i], ry[i]);
            }
            let v = table.eval(&mut pts);
            if v != 0 {
                sum += *px * *py * Q::from_integer(v as i128);
            }
        }
    }
    sum / Q::from_integer(id.scale() as i128)
}

fn probe_points() -> [((Q, Q), (Q, Q)); 3] {
    let q = |a, b| Q::new(a, b);
    [
        ((q(1, 3), q(1, 5)), (q(3, 4), q(2, 7))),
        ((q(1, 2), q(5, 6)), (q(1, 7), q(2, 5))),
        ((q(2, 9), q(3, 8)), (q(5, 8), q(7, 9))),
    ]
}

/// Coefficient `c` with `g = c * K (x) K`, checked at several points.
pub fn resolve_projection(id: KernelId) -> Result<Q> {
    let mut coef: Option<Q> = None;
    for (a, b) in probe_points() {
        let g = projection_two(id, a, b);
        let c = g / (cvm_kernel(a.0, b.0) * cvm_kernel(a.1, b.1));
        match coef {
            None => coef = Some(c),
            Some(c0) if c0 == c => {}
            Some(c0) => {
                return Err(Error::Domain(format!(
                    "second-order projection of {id} is not rank one ({c0} vs {c})"
                )))
            }
        }
    }
    Ok(coef.unwrap())
}

/// `sum_j lambda_j^2` and `sum_j lambda_j^4` for the eigenvalues
/// `lambda_j = 1/(pi^2 j^2)` of [`cvm_kernel`].
pub const CVM_TRACE_2: (i128, i128) = (1, 90);
pub const CVM_TRACE_4: (i128, i128) = (1, 9450);

impl Constants {
    /// Runs the full resolution for all four kernels.
    pub fn resolve() -> Result<Self> {
        let kernels = KernelId::ALL
            .iter()
            .map(|&id| {
                let zeta = resolve_zetas(id)?;
                let (projection, eta) = if id.degeneracy() == 2 {
                    let c = resolve_projection(id)?;
                    let t2 = Q::new(CVM_TRACE_2.0, CVM_TRACE_2.1);
                    let t4 = Q::new(CVM_TRACE_4.0, CVM_TRACE_4.1);
                    if c * c * t2 * t2 != zeta[1] {
                        return Err(Error::Domain(format!(
                            "{id}: projection gives zeta_2 = {}, enumeration gives {}",
                            c * c * t2 * t2,
                            zeta[1]
                        )));
                    }
                    (Some(c), Some(c * c * c * c * t4 * t4))
                } else {
                    (None, None)
                };
                Ok(KernelConstants { kernel: id, zeta, projection, eta })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernels })
    }

    /// The constants stamped into the crate.
    pub fn embedded() -> &'static Constants {
        static CELL: OnceLock<Constants> = OnceLock::new();
        CELL.get_or_init(|| Constants::from_json(EMBEDDED).expect("embedded constants parse"))
    }

    /// Constants holding only the tabulated values, for which the HoeffD
    /// `eta` is left unresolved.
    pub fn tabulated_only() -> Self {
        let kernels = KernelId::ALL
            .iter()
            .filter(|&&id| id != KernelId::HoeffD)
            .map(|&id| {
                let spec = crate::kernels::kernel_spec(id);
                let widen = |r: Ratio<i64>| Q::new(*r.numer() as i128, *r.denom() as i128);
                let mut zeta = vec![Q::zero(); id.degree()];
                zeta[spec.d - 1] = widen(spec.zeta_d);
                KernelConstants { kernel: id, zeta, projection: None, eta: spec.eta.map(widen) }
            })
            .collect();
        Self { kernels }
    }

    pub fn get(&self, id: KernelId) -> Result<&KernelConstants> {
        self.kernels
            .iter()
            .find(|c| c.kernel == id)
            .ok_or_else(|| Error::UnknownConstant(format!("zeta/eta for kernel {id}")))
    }

    pub fn kernels(&self) -> &[KernelConstants] {
        &self.kernels
    }

    pub fn to_json(&self) -> String {
        let file = ConstantsFile {
            schema: 1,
            kernels: self
                .kernels
                .iter()
                .map(|c| KernelEntry {
                    kernel: c.kernel.name().to_string(),
                    zeta: c.zeta.iter().map(|z| z.to_string()).collect(),
                    projection: c.projection.map(|p| p.to_string()),
                    eta: c.eta.map(|e| e.to_string()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("constants serialise") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConstantsFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("constants file: {e}")))?;
        if file.schema != 1 {
            return Err(Error::Config(format!("constants file schema {} unsupported", file.schema)));
        }
        let parse = |s: &str| {
            Q::from_str(s.trim()).map_err(|_| Error::Config(format!("constants file: bad rational '{s}'")))
        };
        let kernels = file
            .kernels
            .iter()
            .map(|e| {
                let kernel = KernelId::from_str(&e.kernel)?;
                let zeta = e.zeta.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
                if zeta.len() != kernel.degree() {
                    return Err(Error::Config(format!(
                        "constants file: {kernel} needs {} zeta values",
                        kernel.degree()
                    )));
                }
                let projection = e.projection.as_deref().map(parse).transpose()?;
                let eta = e.eta.as_deref().map(parse).transpose()?;
                if kernel.degeneracy() == 2 && eta.is_none() {
                    return Err(Error::Config(format!("constants file: {kernel} needs eta")));
                }
                Ok(KernelConstants { kernel, zeta, projection, eta })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernels })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Loads `path`, or resolves and writes it when it does not exist.
    /// The flag reports whether the file was generated.
    pub fn load_or_generate(path: &Path) -> Result<(Self, bool)> {
        if path.exists() {
            return Ok((Self::load(path)?, false));
        }
        let c = Self::resolve()?;
        c.save(path)?;
        Ok((c, true))
    }

    /// Compares these constants with a fresh resolution and with the
    /// closed-form second moments.
    pub fn verify(&self, fresh: &Constants) -> Vec<Check> {
        let mut checks = Vec::new();
        for id in KernelId::ALL {
            let label = match id {
                KernelId::HoeffD => "D",
                other => other.name(),
            };
            let Ok(mine) = self.get(id) else {
                checks.push(Check::fail(format!("constants_{label}"), "missing from file".into()));
                continue;
            };
            let theirs = fresh.get(id).expect("fresh resolution covers every kernel");
            checks.push(Check::new(
                format!("zeta_{label}"),
                mine.zeta == theirs.zeta,
                format!("file {:?} vs oracle {:?}", strs(&mine.zeta), strs(&theirs.zeta)),
            ));
            checks.push(Check::new(
                format!("eta_{label}"),
                mine.eta == theirs.eta,
                format!("file {:?} vs oracle {:?}", mine.eta.map(|q| q.to_string()), theirs.eta.map(|q| q.to_string())),
            ));
            let k = id.degree();
            let mut ok = true;
            let mut detail = String::from("closed form matches at n = k..=2k+4");
            for n in k..=2 * k + 4 {
                let closed = mu_h_exact(id, n).expect("n >= k");
                match mine.second_moment(n) {
                    Ok(v) if v == closed => {}
                    Ok(v) => {
                        ok = false;
                        detail = format!("n = {n}: file constants give {v}, closed form {closed}");
                        break;
                    }
                    Err(e) => {
                        ok = false;
                        detail = e.to_string();
                        break;
                    }
                }
            }
            checks.push(Check::new(format!("mu_{label}"), ok, detail));
        }
        checks
    }
}

fn strs(v: &[Q]) -> Vec<String> {
    v.iter().map(|q| q.to_string()).collect()
}

/// Outcome of one named self-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: String, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn fail(name: String, detail: String) -> Self {
        Self { name, passed: false, detail }
    }
}

#[derive(Serialize, Deserialize)]
struct ConstantsFile {
    schema: u32,
    kernels: Vec<KernelEntry>,
}

#[derive(Serialize, Deserialize)]
struct KernelEntry {
    kernel: String,
    zeta: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    projection: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    eta: Option<String>,
}

/// Constants resolved once per process.
pub fn resolved() -> Result<&'static Constants> {
    static CELL: OnceLock<std::result::Result<Constants, Error>> = OnceLock::new();
    CELL.get_or_init(Constants::resolve).as_ref().map_err(Clone::clone)
}
