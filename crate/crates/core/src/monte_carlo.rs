//! Monte Carlo estimates of moments, failure rates and the empirical
//! l-infinity threshold, plus the Markov and Paley-Zygmund tail bounds.
//!
//! Trials are split into fixed-size chunks; chunk results are merged in chunk
//! order, so estimates are bit-identical for any number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::even_order;
use crate::error::{Result, SjlError};
use crate::numeric::{wilson_interval, CompensatedSum, Z95};
use crate::sampler::ErrorKernel;
use crate::seed::Seed;
use crate::types::{flat_vector, Method, MomentEstimate, SjlParams, UnitVector};

pub const MIN_TRIALS: u64 = 1_000;
pub const MAX_MC_ORDER: u32 = 16;
const CHUNK: u64 = 2_048;

fn chunked<A, F>(trials: u64, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(std::ops::Range<u64>) -> A + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| work(c * CHUNK..((c + 1) * CHUNK).min(trials)))
        .collect()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(SjlError::Precondition(format!(
            "Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

fn check_order(q: u32) -> Result<()> {
    if q == 0 || q > MAX_MC_ORDER {
        return Err(SjlError::Precondition(format!(
            "Monte Carlo moment order must lie in 1..={MAX_MC_ORDER}, got {q}"
        )));
    }
    Ok(())
}

/// Running first and second moments of `|R|^q` (and cross products when paired).
#[derive(Debug, Clone, Default)]
struct PowerSums {
    s1: CompensatedSum,
    s2: CompensatedSum,
}

impl PowerSums {
    fn add(&mut self, y: f64) {
        self.s1.add(y);
        self.s2.add(y * y);
    }

    fn merge(&mut self, o: &PowerSums) {
        self.s1.merge(&o.s1);
        self.s2.merge(&o.s2);
    }

    /// Sample mean and unbiased sample variance.
    fn mean_var(&self, n: u64) -> (f64, f64) {
        let nf = n as f64;
        let mean = self.s1.value() / nf;
        let var = ((self.s2.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (mean, var)
    }
}

/// `||.||_q` estimate from the mean of `|R|^q`, with a delta-method standard error.
fn moment_from_sums(q: u32, sums: &PowerSums, trials: u64) -> MomentEstimate {
    let (mean, var) = sums.mean_var(trials);
    let qf = q as f64;
    let value = mean.powf(1.0 / qf);
    let std_error = if mean > 0.0 {
        value / (qf * mean) * (var / trials as f64).sqrt()
    } else {
        0.0
    };
    MomentEstimate {
        q,
        value,
        method: Method::MonteCarlo,
        std_error,
        trials,
    }
}

/// Estimates `||R(x)||_q` from `trials` independent matrices; trial `t` uses `seed.derive(t)`.
pub fn mc_moment(
    params: &SjlParams,
    x: &UnitVector,
    q: u32,
    trials: u64,
    seed: Seed,
) -> Result<MomentEstimate> {
    check_trials(trials)?;
    check_order(q)?;
    let proto = ErrorKernel::new(params, x)?;
    let parts = chunked(trials, |range| {
        let mut kernel = proto.clone();
        let mut sums = PowerSums::default();
        for t in range {
            sums.add(kernel.rademacher(seed.derive(t)).abs().powi(q as i32));
        }
        sums
    });
    let mut sums = PowerSums::default();
    parts.iter().for_each(|p| sums.merge(p));
    Ok(moment_from_sums(q, &sums, trials))
}

/// Empirical failure rate with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub failure_rate: f64,
    pub failures: u64,
    pub trials: u64,
    pub wilson_ci_95: (f64, f64),
}

impl TailEstimate {
    pub fn from_counts(failures: u64, trials: u64) -> Self {
        TailEstimate {
            failure_rate: failures as f64 / trials as f64,
            failures,
            trials,
            wilson_ci_95: wilson_interval(failures, trials, Z95),
        }
    }
}

/// Fraction of trials with `|R(x)| > eps`.
pub fn mc_tail(
    params: &SjlParams,
    x: &UnitVector,
    eps: f64,
    trials: u64,
    seed: Seed,
) -> Result<TailEstimate> {
    check_trials(trials)?;
    let proto = ErrorKernel::new(params, x)?;
    let parts = chunked(trials, |range| {
        let mut kernel = proto.clone();
        range
            .filter(|&t| kernel.rademacher(seed.derive(t)).abs() > eps)
            .count() as u64
    });
    Ok(TailEstimate::from_counts(parts.iter().sum(), trials))
}

/// Snaps a nominal level `v` to a flat vector length: `N = 1` for `v` near 1,
/// otherwise the even integer nearest `1/v^2`.
pub fn snap_even_count(v: f64) -> usize {
    let inv = 1.0 / (v * v);
    if inv < 1.5 {
        1
    } else {
        (2.0 * (inv / 2.0).round()).max(2.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub v_nominal: f64,
    pub v_effective: f64,
    /// Number of equal nonzero coordinates, `1 / v_effective^2`.
    pub count: usize,
    pub tail: TailEstimate,
}

/// Failure rates along a grid of hard vectors and the largest passing level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub points: Vec<ThresholdPoint>,
    /// Largest tested level `v` such that every tested level up to and
    /// including `v` has an upper 95% bound on its failure rate of at most
    /// `delta`; 0 if the smallest level already fails. A failing witness at
    /// a smaller level lies in every larger `S_v`, so it caps the threshold.
    pub v_hat: f64,
    /// Largest passing `v_effective` considered on its own, ignoring failures
    /// at smaller levels; 0 if none passes.
    pub v_hat_pointwise: f64,
    pub delta: f64,
    /// Grid levels dropped because `1/v^2` exceeds `n`.
    pub skipped: Vec<f64>,
}

/// Sweeps hard vectors over `v_grid` and reports the empirical threshold.
///
/// Every level is tested; failure rates are not assumed monotone in `v`.
/// Points with the same coordinate count share the seed `seed.derive(count)`,
/// so curves for different `s` or `delta` are run on matched seeds. The
/// result only witnesses the hard-vector family, so `v_hat` is an upper bound
/// on the true threshold up to sampling error.
pub fn empirical_threshold(
    params: &SjlParams,
    eps: f64,
    delta: f64,
    v_grid: &[f64],
    trials: u64,
    seed: Seed,
) -> Result<ThresholdCurve> {
    check_trials(trials)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SjlError::Precondition(format!("delta must lie in (0, 1), got {delta}")));
    }
    if delta * (trials as f64) < 50.0 {
        return Err(SjlError::Precondition(format!(
            "delta * trials = {} < 50; too few trials to resolve failure rate {delta}",
            delta * trials as f64
        )));
    }
    if let Some(bad) = v_grid.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(SjlError::Precondition(format!("grid level {bad} outside (0, 1]")));
    }
    let mut grid: Vec<f64> = v_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &v in &grid {
        let count = snap_even_count(v);
        if count > params.n() {
            skipped.push(v);
            continue;
        }
        let x = flat_vector(count, params.n())?;
        let tail = mc_tail(params, &x, eps, trials, seed.derive(count as u64))?;
        points.push(ThresholdPoint {
            v_nominal: v,
            v_effective: x.linf_ratio(),
            count,
            tail,
        });
    }
    if points.is_empty() {
        return Err(SjlError::Precondition(format!(
            "every grid level needs more than n = {} coordinates",
            params.n()
        )));
    }
    points.sort_by(|a, b| a.v_effective.total_cmp(&b.v_effective));
    let passes = |p: &ThresholdPoint| p.tail.wilson_ci_95.1 <= delta;
    let v_hat = points
        .iter()
        .take_while(|p| passes(p))
        .last()
        .map_or(0.0, |p| p.v_effective);
    let v_hat_pointwise = points
        .iter()
        .filter(|p| passes(p))
        .map(|p| p.v_effective)
        .fold(0.0, f64::max);
    Ok(ThresholdCurve {
        points,
        v_hat,
        v_hat_pointwise,
        delta,
        skipped,
    })
}

/// Markov's inequality on `q`-th powers: `P[|R| >= eps] <= (||R||_q / eps)^q`.
pub fn markov_bound(moment: &MomentEstimate, eps: f64) -> f64 {
    (moment.value / eps).powi(moment.q as i32)
}

/// Outcome of the Paley-Zygmund tail lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum PzBound {
    Bound(f64),
    /// `||Z||_q < 2K`, so the inequality says nothing.
    NotApplicable,
}

/// `P[|R| > K] >= 0.25 (||R||_q / ||R||_{2q})^{2q}` whenever `||R||_q >= 2K`.
pub fn paley_zygmund_bound(norm_q: f64, norm_2q: f64, q: u32, k: f64) -> Result<PzBound> {
    if !(k > 0.0) || q == 0 {
        return Err(SjlError::Precondition("need K > 0 and q >= 1".into()));
    }
    if norm_q < 2.0 * k {
        return Ok(PzBound::NotApplicable);
    }
    if norm_2q < norm_q * (1.0 - 1e-12) {
        return Err(SjlError::Precondition(format!(
            "||R||_2q = {norm_2q} is below ||R||_q = {norm_q}"
        )));
    }
    let ratio = (norm_q / norm_2q).min(1.0);
    Ok(PzBound::Bound(0.25 * ratio.powi(2 * q as i32)))
}

/// Paired Rademacher and Gaussian-coefficient moment estimates on common supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedMoments {
    pub rademacher: MomentEstimate,
    pub gaussian: MomentEstimate,
    /// `||R~||_p / ||R||_p`; 1 when both vanish.
    pub ratio: f64,
    /// Delta-method standard error of `ratio`, using the paired covariance.
    pub ratio_std_error: f64,
}

/// Estimates `(||R||_p, ||R~||_p)` where each trial shares one sampled support.
pub fn gaussian_vs_rademacher(
    params: &SjlParams,
    x: &UnitVector,
    p: u32,
    trials: u64,
    seed: Seed,
) -> Result<PairedMoments> {
    check_trials(trials)?;
    check_order(p)?;
    let proto = ErrorKernel::new(params, x)?;
    let parts = chunked(trials, |range| {
        let mut kernel = proto.clone();
        let mut rs = PowerSums::default();
        let mut gs = PowerSums::default();
        let mut cross = CompensatedSum::new();
        for t in range {
            let (r, g) = kernel.paired(seed.derive(t));
            let (a, b) = (r.abs().powi(p as i32), g.abs().powi(p as i32));
            rs.add(a);
            gs.add(b);
            cross.add(a * b);
        }
        (rs, gs, cross)
    });
    let mut rs = PowerSums::default();
    let mut gs = PowerSums::default();
    let mut cross = CompensatedSum::new();
    for (a, b, c) in &parts {
        rs.merge(a);
        gs.merge(b);
        cross.merge(c);
    }
    let rademacher = moment_from_sums(p, &rs, trials);
    let gaussian = moment_from_sums(p, &gs, trials);
    let (mr, vr) = rs.mean_var(trials);
    let (mg, vg) = gs.mean_var(trials);
    let nf = trials as f64;
    let cov = (cross.value() - nf * mr * mg) / (nf - 1.0);
    let (ratio, ratio_std_error) = if mr > 0.0 && mg > 0.0 {
        let ratio = (mg / mr).powf(1.0 / p as f64);
        let var_log = (vg / (mg * mg) + vr / (mr * mr) - 2.0 * cov / (mg * mr)).max(0.0)
            / (nf * (p as f64).powi(2));
        (ratio, ratio * var_log.sqrt())
    } else {
        (1.0, 0.0)
    };
    Ok(PairedMoments {
        rademacher,
        gaussian,
        ratio,
        ratio_std_error,
    })
}

/// One point of the Gaussian-versus-Rademacher comparison at `s = 1` on the
/// hard vector of level `sqrt(eps) ln(m eps / p) / p`, with `p` the even
/// rounding of `ln(1/delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationPoint {
    pub m: usize,
    pub eps: f64,
    pub delta: f64,
    pub p: u32,
    pub v_nominal: f64,
    pub v_effective: f64,
    pub count: usize,
    /// `ln(m eps / p) <= sqrt(p)` and `p >= e / (m v^2)`.
    pub in_regime: bool,
    pub moments: PairedMoments,
}

/// The level `sqrt(eps) ln(m eps / p) / p` and whether `(m, eps, p)` lies in
/// the regime where the Gaussian moment is predicted to outgrow `eps`.
pub fn separation_level(m: usize, eps: f64, p: u32) -> (f64, bool) {
    let pf = p as f64;
    let l = (m as f64 * eps / pf).ln();
    let v = eps.sqrt() * l / pf;
    let in_regime = l <= pf.sqrt() && v > 0.0 && pf >= std::f64::consts::E / (m as f64 * v * v);
    (v, in_regime)
}

/// Runs the paired comparison at one dimension `m`.
pub fn separation_point(
    m: usize,
    eps: f64,
    delta: f64,
    trials: u64,
    seed: Seed,
) -> Result<SeparationPoint> {
    if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(SjlError::Precondition(format!(
            "eps and delta must lie in (0, 1), got eps = {eps}, delta = {delta}"
        )));
    }
    let p = even_order(delta);
    let (v, in_regime) = separation_level(m, eps, p);
    if !(v > 0.0 && v <= 1.0) {
        return Err(SjlError::Precondition(format!(
            "level sqrt(eps) ln(m eps / p) / p = {v} is outside (0, 1] at m = {m}"
        )));
    }
    let count = snap_even_count(v);
    let params = SjlParams::uniform(count, m, 1)?;
    let x = flat_vector(count, count)?;
    let moments = gaussian_vs_rademacher(&params, &x, p, trials, seed)?;
    Ok(SeparationPoint {
        m,
        eps,
        delta,
        p,
        v_nominal: v,
        v_effective: x.linf_ratio(),
        count,
        in_regime,
        moments,
    })
}
