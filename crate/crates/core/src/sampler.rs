//! Sampling sparse JL matrices and evaluating the error variable
//! `R(x) = ||Ax||^2 - 1`.
//!
//! Column `i` of a matrix sampled under `seed` is drawn from `seed.rng(i)`
//! alone, so sampling only the columns on a vector's support gives exactly
//! the same columns as sampling the full matrix.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Result, SjlError};
use crate::seed::{Rng, Seed};
use crate::types::{make_unit_vector, Entry, Flavor, SjlMatrix, SjlParams, UnitVector};

/// Stream tag for Gaussian coefficients, kept apart from the support/sign stream.
const GAUSSIAN_STREAM: u64 = 0x6761_7573_7369_616e;

/// Draws one column into `out` (cleared first), sorted by row.
pub fn sample_column(params: &SjlParams, rng: &mut Rng, out: &mut Vec<Entry>) {
    out.clear();
    let m = params.m();
    let s = params.s();
    match params.flavor() {
        Flavor::Uniform => {
            // partial Fisher-Yates over a virtual [0, m); only swapped slots are stored
            let mut swapped: Vec<(usize, usize)> = Vec::with_capacity(2 * s);
            let lookup = |swapped: &Vec<(usize, usize)>, k: usize| {
                swapped
                    .iter()
                    .rev()
                    .find(|&&(slot, _)| slot == k)
                    .map_or(k, |&(_, v)| v)
            };
            for j in 0..s {
                let t = rng.gen_range(j..m);
                let at_t = lookup(&swapped, t);
                let at_j = lookup(&swapped, j);
                swapped.push((t, at_j));
                swapped.push((j, at_t));
                out.push(Entry {
                    row: at_t as u32,
                    negative: false,
                });
            }
        }
        Flavor::Block => {
            let h = params.block_height();
            for k in 0..s {
                out.push(Entry {
                    row: (k * h + rng.gen_range(0..h)) as u32,
                    negative: false,
                });
            }
        }
    }
    out.sort_unstable_by_key(|e| e.row);
    for e in out.iter_mut() {
        e.negative = rng.gen::<bool>();
    }
}

/// Samples a full `m x n` matrix.
pub fn sample_matrix(params: &SjlParams, seed: Seed) -> SjlMatrix {
    let mut entries = Vec::with_capacity(params.n() * params.s());
    let mut col = Vec::with_capacity(params.s());
    for i in 0..params.n() {
        let mut rng = seed.rng(i as u64);
        sample_column(params, &mut rng, &mut col);
        entries.extend_from_slice(&col);
    }
    SjlMatrix::from_raw(*params, entries)
}

fn check_dims(a: &SjlMatrix, x: &UnitVector) -> Result<()> {
    if a.params().n() != x.dim() {
        return Err(SjlError::DimensionMismatch {
            expected: a.params().n(),
            got: x.dim(),
        });
    }
    Ok(())
}

/// `Ax` with nonzeros `sign / sqrt(s)`. Only the support of `x` is visited.
pub fn project(a: &SjlMatrix, x: &UnitVector) -> Result<Vec<f64>> {
    check_dims(a, x)?;
    let scale = 1.0 / (a.params().s() as f64).sqrt();
    let mut y = vec![0.0; a.params().m()];
    for (i, xi) in x.support() {
        for e in a.column(i) {
            y[e.row as usize] += e.sign() * xi;
        }
    }
    y.iter_mut().for_each(|v| *v *= scale);
    Ok(y)
}

/// Per-row accumulators for `sum_i c_{r,i} x_i` and `sum_i c_{r,i}^2 x_i^2`.
///
/// `R = (1/s) sum_r (lin_r^2 - diag_r)`, which is exactly the off-diagonal
/// double sum, so single-coordinate vectors give 0 with no rounding.
#[derive(Debug, Clone)]
struct RowAccumulator {
    lin: Vec<f64>,
    diag: Vec<f64>,
    touched: Vec<u32>,
}

impl RowAccumulator {
    fn new(m: usize) -> Self {
        RowAccumulator {
            lin: vec![0.0; m],
            diag: vec![0.0; m],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn add(&mut self, row: u32, coef: f64, xi: f64) {
        let r = row as usize;
        if self.lin[r] == 0.0 && self.diag[r] == 0.0 {
            self.touched.push(row);
        }
        let t = coef * xi;
        self.lin[r] += t;
        self.diag[r] += t * t;
    }

    /// Returns `sum_r (lin_r^2 - diag_r) / s` and resets the touched rows.
    fn finish(&mut self, s: usize) -> f64 {
        let mut acc = 0.0;
        for &row in &self.touched {
            let r = row as usize;
            acc += self.lin[r] * self.lin[r] - self.diag[r];
            self.lin[r] = 0.0;
            self.diag[r] = 0.0;
        }
        self.touched.clear();
        acc / s as f64
    }
}

/// `R(x) = ||Ax||_2^2 - 1` for unit `x`, evaluated as the cross-term sum.
pub fn error_sample(a: &SjlMatrix, x: &UnitVector) -> Result<f64> {
    check_dims(a, x)?;
    let mut acc = RowAccumulator::new(a.params().m());
    for (i, xi) in x.support() {
        for e in a.column(i) {
            acc.add(e.row, e.sign(), xi);
        }
    }
    Ok(acc.finish(a.params().s()))
}

/// A uniformly random unit vector in dimension `n` (normalized Gaussian).
pub fn random_unit_vector(n: usize, seed: Seed) -> Result<UnitVector> {
    if n == 0 {
        return Err(SjlError::InvalidParams("n must be at least 1".into()));
    }
    let mut rng = seed.rng(0);
    let raw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    make_unit_vector(&raw)
}

/// The Gaussian-coefficient variant: signs replaced by fresh standard normals
/// on the same support. Coefficients for column `i` come from `seed.rng(i)`.
pub fn error_sample_gaussian(a: &SjlMatrix, x: &UnitVector, seed: Seed) -> Result<f64> {
    check_dims(a, x)?;
    let gseed = seed.derive(GAUSSIAN_STREAM);
    let mut acc = RowAccumulator::new(a.params().m());
    for (i, xi) in x.support() {
        let mut rng = gseed.rng(i as u64);
        for e in a.column(i) {
            let g: f64 = rng.sample(StandardNormal);
            acc.add(e.row, g, xi);
        }
    }
    Ok(acc.finish(a.params().s()))
}

/// Reusable evaluator for Monte Carlo: samples only the columns on the
/// support of `x` and keeps its buffers between trials.
#[derive(Debug, Clone)]
pub struct ErrorKernel {
    params: SjlParams,
    support: Vec<(usize, f64)>,
    column: Vec<Entry>,
    acc: RowAccumulator,
    gacc: RowAccumulator,
}

impl ErrorKernel {
    pub fn new(params: &SjlParams, x: &UnitVector) -> Result<Self> {
        if params.n() != x.dim() {
            return Err(SjlError::DimensionMismatch {
                expected: params.n(),
                got: x.dim(),
            });
        }
        Ok(ErrorKernel {
            params: *params,
            support: x.support().collect(),
            column: Vec::with_capacity(params.s()),
            acc: RowAccumulator::new(params.m()),
            gacc: RowAccumulator::new(params.m()),
        })
    }

    /// `R(x)` for the matrix sampled under `seed`. Bit-identical to
    /// `error_sample(&sample_matrix(params, seed), x)`.
    pub fn rademacher(&mut self, seed: Seed) -> f64 {
        for &(i, xi) in &self.support {
            let mut rng = seed.rng(i as u64);
            sample_column(&self.params, &mut rng, &mut self.column);
            for e in &self.column {
                self.acc.add(e.row, e.sign(), xi);
            }
        }
        self.acc.finish(self.params.s())
    }

    /// `(R(x), R~(x))` on the common support sampled under `seed`, with the
    /// Gaussian coefficients drawn as in [`error_sample_gaussian`].
    pub fn paired(&mut self, seed: Seed) -> (f64, f64) {
        let gseed = seed.derive(GAUSSIAN_STREAM);
        for &(i, xi) in &self.support {
            let mut rng = seed.rng(i as u64);
            sample_column(&self.params, &mut rng, &mut self.column);
            let mut grng = gseed.rng(i as u64);
            for e in &self.column {
                self.acc.add(e.row, e.sign(), xi);
                let g: f64 = grng.sample(StandardNormal);
                self.gacc.add(e.row, g, xi);
            }
        }
        let s = self.params.s();
        (self.acc.finish(s), self.gacc.finish(s))
    }
}
