//! Shared vocabulary: projection parameters, sampled matrices, unit vectors
//! and moment estimates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SjlError};

/// How the `s` nonzero rows of each column are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// A uniformly random `s`-subset of `[m]`.
    Uniform,
    /// One uniformly random row inside each of the `s` contiguous blocks of height `m / s`.
    Block,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flavor::Uniform => f.write_str("uniform"),
            Flavor::Block => f.write_str("block"),
        }
    }
}

impl FromStr for Flavor {
    type Err = SjlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Flavor::Uniform),
            "block" => Ok(Flavor::Block),
            other => Err(SjlError::InvalidParams(format!(
                "unknown flavor '{other}' (expected uniform or block)"
            ))),
        }
    }
}

/// Ambient dimension `n`, target dimension `m`, column sparsity `s` and flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SjlParams {
    n: usize,
    m: usize,
    s: usize,
    flavor: Flavor,
}

impl SjlParams {
    pub fn new(n: usize, m: usize, s: usize, flavor: Flavor) -> Result<Self> {
        if n == 0 || m == 0 || s == 0 {
            return Err(SjlError::InvalidParams(format!(
                "n, m, s must be positive (n = {n}, m = {m}, s = {s})"
            )));
        }
        if s > m {
            return Err(SjlError::SparsityExceedsDimension { s, m });
        }
        if flavor == Flavor::Block && m % s != 0 {
            return Err(SjlError::BlockIndivisible { s, m });
        }
        Ok(SjlParams { n, m, s, flavor })
    }

    pub fn uniform(n: usize, m: usize, s: usize) -> Result<Self> {
        Self::new(n, m, s, Flavor::Uniform)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// Same `m`, `s` and flavor with a different ambient dimension.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.m, self.s, self.flavor)
    }

    /// Height of one block in the block flavor.
    pub fn block_height(&self) -> usize {
        self.m / self.s
    }
}

/// One nonzero of a column: its row and its sign. The magnitude `1/sqrt(s)`
/// is applied when projecting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub row: u32,
    pub negative: bool,
}

impl Entry {
    pub fn sign(&self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }
}

/// A sampled sparse projection in column-compressed form. Column `i` owns
/// `entries[i*s .. (i+1)*s]`, sorted by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SjlMatrix {
    params: SjlParams,
    entries: Vec<Entry>,
}

impl SjlMatrix {
    /// Builds a matrix from explicit columns, checking the sparsity and block
    /// layout invariants.
    pub fn from_columns(params: SjlParams, columns: Vec<Vec<Entry>>) -> Result<Self> {
        if columns.len() != params.n() {
            return Err(SjlError::DimensionMismatch {
                expected: params.n(),
                got: columns.len(),
            });
        }
        let mut entries = Vec::with_capacity(params.n() * params.s());
        for (i, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(|e| e.row);
            check_column(&params, i, &col)?;
            entries.extend(col);
        }
        Ok(SjlMatrix { params, entries })
    }

    pub(crate) fn from_raw(params: SjlParams, entries: Vec<Entry>) -> Self {
        debug_assert_eq!(entries.len(), params.n() * params.s());
        SjlMatrix { params, entries }
    }

    pub fn params(&self) -> &SjlParams {
        &self.params
    }

    pub fn column(&self, i: usize) -> &[Entry] {
        let s = self.params.s();
        &self.entries[i * s..(i + 1) * s]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Entry]> {
        self.entries.chunks_exact(self.params.s())
    }

    /// Re-checks every column against the sparsity (and block layout) invariant.
    pub fn validate(&self) -> Result<()> {
        for (i, col) in self.columns().enumerate() {
            check_column(&self.params, i, col)?;
        }
        Ok(())
    }
}

fn check_column(params: &SjlParams, i: usize, col: &[Entry]) -> Result<()> {
    if col.len() != params.s() {
        return Err(SjlError::InvalidParams(format!(
            "column {i} has {} entries, expected {}",
            col.len(),
            params.s()
        )));
    }
    for (k, e) in col.iter().enumerate() {
        if e.row as usize >= params.m() {
            return Err(SjlError::InvalidParams(format!(
                "column {i} row {} out of range for m = {}",
                e.row,
                params.m()
            )));
        }
        if k > 0 && col[k - 1].row >= e.row {
            return Err(SjlError::InvalidParams(format!(
                "column {i} has repeated row {}",
                e.row
            )));
        }
        if params.flavor() == Flavor::Block {
            let h = params.block_height();
            let row = e.row as usize;
            if row < k * h || row >= (k + 1) * h {
                return Err(SjlError::InvalidParams(format!(
                    "column {i} entry {k} (row {row}) is outside block [{}, {})",
                    k * h,
                    (k + 1) * h
                )));
            }
        }
    }
    Ok(())
}

/// A unit-norm vector together with its recorded l-infinity to l2 ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitVector {
    values: Vec<f64>,
    linf_ratio: f64,
}

impl UnitVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn linf_ratio(&self) -> f64 {
        self.linf_ratio
    }

    /// Nonzero coordinates as `(index, value)` pairs.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, x)| x != 0.0)
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&x| x != 0.0).count()
    }

    /// `sum_i x_i^4`.
    pub fn fourth_power_sum(&self) -> f64 {
        self.values.iter().map(|x| x.powi(4)).sum()
    }

    /// Number of coordinates of the hard vector with the same ratio, `1/linf_ratio^2`.
    pub fn hard_count(&self) -> usize {
        (1.0 / (self.linf_ratio * self.linf_ratio)).round() as usize
    }
}

/// Scales `raw` to unit l2 norm.
pub fn make_unit_vector(raw: &[f64]) -> Result<UnitVector> {
    if let Some(i) = raw.iter().position(|x| !x.is_finite()) {
        return Err(SjlError::NonFinite(i));
    }
    // scale by the max first so huge or tiny inputs do not overflow the norm
    let peak = raw.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if peak == 0.0 {
        return Err(SjlError::ZeroVector);
    }
    let norm = peak * raw.iter().map(|x| (x / peak).powi(2)).sum::<f64>().sqrt();
    let values: Vec<f64> = raw.iter().map(|x| x / norm).collect();
    let linf_ratio = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(UnitVector { values, linf_ratio })
}

/// The standard basis vector `e_index` in dimension `n`.
pub fn basis_vector(n: usize, index: usize) -> Result<UnitVector> {
    if index >= n {
        return Err(SjlError::DimensionMismatch {
            expected: n,
            got: index + 1,
        });
    }
    let mut values = vec![0.0; n];
    values[index] = 1.0;
    Ok(UnitVector {
        values,
        linf_ratio: 1.0,
    })
}

/// Flat vector with `count` leading entries `1/sqrt(count)` and zeros after.
pub fn flat_vector(count: usize, n: usize) -> Result<UnitVector> {
    if count == 0 {
        return Err(SjlError::ZeroVector);
    }
    if count > n {
        return Err(SjlError::DimensionTooSmall { needed: count, n });
    }
    let level = 1.0 / (count as f64).sqrt();
    let mut values = vec![0.0; n];
    values[..count].fill(level);
    Ok(UnitVector {
        values,
        linf_ratio: level,
    })
}

/// The vector `[v, ..., v, 0, ..., 0]` with `N = round(1/v^2)` equal leading
/// entries. The recorded ratio is the effective `1/sqrt(N)`.
pub fn hard_vector(v: f64, n: usize) -> Result<UnitVector> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(SjlError::InvalidParams(format!(
            "hard vector level must lie in (0, 1], got {v}"
        )));
    }
    let count = (1.0 / (v * v)).round() as usize;
    flat_vector(count.max(1), n)
}

/// Whether a moment was computed exactly or sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// An estimate of `||X||_q = (E|X|^q)^(1/q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub q: u32,
    pub value: f64,
    pub method: Method,
    pub std_error: f64,
    pub trials: u64,
}

impl MomentEstimate {
    pub fn exact(q: u32, value: f64) -> Self {
        MomentEstimate {
            q,
            value,
            method: Method::Exact,
            std_error: 0.0,
            trials: 0,
        }
    }

    /// `E|X|^q`, i.e. `value^q`.
    pub fn raw(&self) -> f64 {
        self.value.powi(self.q as i32)
    }
}
