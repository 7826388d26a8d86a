//! Closed-form threshold, moment and dimension formulas with regime reporting.
//!
//! Every piecewise formula returns a [`RegimeReport`] naming the branch that
//! fired. Guards follow the inequalities as written; when guards of two
//! branches both hold the earlier branch wins and [`Flag::GuardOverlap`] is
//! raised. Logarithms are natural. A logarithm of an argument below 1 where
//! the formula needs a nonnegative value yields [`Branch::NotApplicable`]
//! with [`Flag::LogDomain`] instead of a NaN.

use serde::{Deserialize, Serialize};

use crate::constants::BoundConstants;
use crate::error::{Result, SjlError};

/// Which case of a piecewise formula produced the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Threshold equals 1: the guarantee holds on all of R^n.
    Full,
    /// Threshold equals 0.
    Zero,
    /// `C_v sqrt(eps s) sqrt(ln(m eps^2 / p)) / sqrt(p)`.
    SqrtLog,
    /// `C_v sqrt(eps s) min(ln(m eps / p) / p, sqrt(ln(m eps^2 / p)) / sqrt(p))`.
    MinForm,
    /// Between the two dimension constants, where neither bound speaks.
    Indeterminate,
    /// Dimension below the domain of the lower threshold.
    BelowDomain,
    NotApplicable,
    /// `sqrt(2) / sqrt(m)` for `q = 2`.
    SecondMoment,
    /// `sqrt(q) / sqrt(m)` when `s e / (m v^2) >= q`.
    SmallLevel,
    UpperCase1,
    UpperCase2,
    UpperCase3,
    UpperCase4,
    /// `sqrt(q) / sqrt(m)` lower bound.
    LowerSqrtQ,
    /// `q v^2 / (s ln(q m v^4 / s^2))` lower bound.
    LowerLog,
    /// `q^2 v^2 / (s ln^2(q m v^2 / s))` lower bound.
    LowerLogSquared,
    /// No lower-bound branch has its side conditions met.
    NoBranch,
    /// `T s / m`.
    RowLinear,
    /// `min(T^2 v^2 / ln^2(T m v^2 / s), T / ln(m / s))`.
    RowLogMin,
    /// `v^2 (s / (m T v^2))^{2/T}`.
    RowPower,
    /// `s / m` for `T = 2`.
    RowLowerSecond,
    /// `T^2 v^2 / ln^2(m v^2 T / s)`.
    RowLowerLogSquared,
    /// `v^2 (s / (m T v^2))^{2/T}`.
    RowLowerPower,
    /// Same value, for the row restricted to exactly two colliding coordinates.
    RowLowerIndicator,
    /// `2 eps^-2 / delta` arm of the sufficient dimension.
    Chebyshev,
    /// `C eps^-2 p e^{C' p / (eps s)}` arm of a dimension formula.
    SparsityExponential,
    /// `eps^-2 e^{C_T p}` arm of the dimension lower bound.
    DeltaPower,
}

impl Branch {
    /// Stable snake-case identifier, as used in serialized output.
    pub fn name(&self) -> &'static str {
        match self {
            Branch::Full => "full",
            Branch::Zero => "zero",
            Branch::SqrtLog => "sqrt_log",
            Branch::MinForm => "min_form",
            Branch::Indeterminate => "indeterminate",
            Branch::BelowDomain => "below_domain",
            Branch::NotApplicable => "not_applicable",
            Branch::SecondMoment => "second_moment",
            Branch::SmallLevel => "small_level",
            Branch::UpperCase1 => "upper_case1",
            Branch::UpperCase2 => "upper_case2",
            Branch::UpperCase3 => "upper_case3",
            Branch::UpperCase4 => "upper_case4",
            Branch::LowerSqrtQ => "lower_sqrt_q",
            Branch::LowerLog => "lower_log",
            Branch::LowerLogSquared => "lower_log_squared",
            Branch::NoBranch => "no_branch",
            Branch::RowLinear => "row_linear",
            Branch::RowLogMin => "row_log_min",
            Branch::RowPower => "row_power",
            Branch::RowLowerSecond => "row_lower_second",
            Branch::RowLowerLogSquared => "row_lower_log_squared",
            Branch::RowLowerPower => "row_lower_power",
            Branch::RowLowerIndicator => "row_lower_indicator",
            Branch::Chebyshev => "chebyshev",
            Branch::SparsityExponential => "sparsity_exponential",
            Branch::DeltaPower => "delta_power",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "flag", content = "detail")]
pub enum Flag {
    GuardOverlap,
    IndeterminateGap,
    LogDomain,
    /// Threshold capped at 1.
    Capped,
    /// Upper threshold above 0.5, where its validity gate fails.
    GateExceeded,
    /// `1 / v^2` is not an even integer.
    OddCount,
    SparsityOutOfRange,
    HypothesisUnmet(String),
}

impl std::fmt::Display for Flag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flag::GuardOverlap => f.write_str("guard_overlap"),
            Flag::IndeterminateGap => f.write_str("indeterminate_gap"),
            Flag::LogDomain => f.write_str("log_domain"),
            Flag::Capped => f.write_str("capped"),
            Flag::GateExceeded => f.write_str("gate_exceeded"),
            Flag::OddCount => f.write_str("odd_count"),
            Flag::SparsityOutOfRange => f.write_str("sparsity_out_of_range"),
            Flag::HypothesisUnmet(h) => write!(f, "hypothesis_unmet({h})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchValue {
    pub branch: Branch,
    pub value: f64,
}

/// Inputs a report was computed from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub branch: Branch,
    pub value: f64,
    /// Every branch whose conditions held, for formulas that take a maximum over branches.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub candidates: Vec<BranchValue>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<Flag>,
    pub inputs: ReportInputs,
    pub constants: BoundConstants,
}

impl RegimeReport {
    fn new(branch: Branch, value: f64, inputs: ReportInputs, constants: BoundConstants) -> Self {
        RegimeReport {
            branch,
            value,
            candidates: Vec::new(),
            flags: Vec::new(),
            inputs,
            constants,
        }
    }

    pub fn has_flag(&self, flag: &Flag) -> bool {
        self.flags.contains(flag)
    }

    /// The formula's hypotheses hold and some branch produced a value.
    pub fn is_applicable(&self) -> bool {
        !matches!(
            self.branch,
            Branch::NotApplicable | Branch::NoBranch | Branch::BelowDomain | Branch::Indeterminate
        ) && !self.flags.iter().any(|f| {
            matches!(
                f,
                Flag::HypothesisUnmet(_) | Flag::OddCount | Flag::SparsityOutOfRange | Flag::LogDomain
            )
        })
    }

    fn flag(&mut self, flag: Flag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }
}

/// `(m, eps, delta, s)` with `p = ln(1/delta)` and the bound constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdQuery {
    pub m: f64,
    pub eps: f64,
    pub delta: f64,
    pub s: f64,
    pub p: f64,
    /// `p` rounded up to the nearest even integer, the moment order used
    /// when connecting thresholds to moments.
    pub p_even: u32,
    pub constants: BoundConstants,
}

/// `ln(1/delta)`.
pub fn log_inverse(delta: f64) -> f64 {
    -delta.ln()
}

/// `ln(1/delta)` rounded up to the nearest even integer (at least 2).
pub fn even_order(delta: f64) -> u32 {
    let p = log_inverse(delta).ceil().max(2.0) as u32;
    p + p % 2
}

impl ThresholdQuery {
    pub fn new(m: f64, eps: f64, delta: f64, s: f64, constants: BoundConstants) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(SjlError::InvalidParams(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SjlError::InvalidParams(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(m >= 1.0 && m.is_finite()) || !(s >= 1.0 && s.is_finite()) {
            return Err(SjlError::InvalidParams(format!(
                "m and s must be at least 1, got m = {m}, s = {s}"
            )));
        }
        constants.validate()?;
        Ok(ThresholdQuery {
            m,
            eps,
            delta,
            s,
            p: log_inverse(delta),
            p_even: even_order(delta),
            constants,
        })
    }

    fn inputs(&self) -> ReportInputs {
        ReportInputs {
            m: Some(self.m),
            eps: Some(self.eps),
            delta: Some(self.delta),
            p: Some(self.p),
            s: Some(self.s),
            ..Default::default()
        }
    }

    fn inv_eps2(&self) -> f64 {
        1.0 / (self.eps * self.eps)
    }

    /// `sqrt(ln(m eps^2 / p)) / sqrt(p)`, or `None` when the log is negative.
    fn sqrt_log_term(&self) -> Option<f64> {
        let l = (self.m * self.eps * self.eps / self.p).ln();
        (l >= 0.0).then(|| l.sqrt() / self.p.sqrt())
    }

    /// `min(ln(m eps / p) / p, sqrt_log_term)`.
    fn min_term(&self) -> Option<f64> {
        let l = (self.m * self.eps / self.p).ln();
        let a = (l >= 0.0).then(|| l / self.p)?;
        Some(a.min(self.sqrt_log_term()?))
    }

    fn sparsity_hypotheses(&self, report: &mut RegimeReport) {
        let c = &self.constants;
        if self.s > c.c_s * self.p / self.eps {
            report.flag(Flag::SparsityOutOfRange);
        }
        if self.eps >= c.c_eps {
            report.flag(Flag::HypothesisUnmet("eps < C_eps".into()));
        }
        if self.delta >= c.c_delta {
            report.flag(Flag::HypothesisUnmet("delta < C_delta".into()));
        }
    }
}

fn log_domain(report: &mut RegimeReport) {
    report.branch = Branch::NotApplicable;
    report.value = 0.0;
    report.flag(Flag::LogDomain);
}

/// Lower threshold `min(1, g(m, eps, p, s))`: below it every vector in
/// `S_v` meets the distortion guarantee.
pub fn eval_g(q: &ThresholdQuery) -> RegimeReport {
    let c = &q.constants;
    let e2 = q.inv_eps2();
    let mut report = RegimeReport::new(Branch::NotApplicable, 0.0, q.inputs(), *c);
    q.sparsity_hypotheses(&mut report);

    let full = (2.0 * e2 * q.p.exp()).min(e2 * q.p * (c.c_u * q.p / (q.eps * q.s)).exp());
    let floor = c.c_m * e2 * q.p;
    let middle = q.s * (c.c_s * q.p / (q.eps * q.s)).exp();
    let scale = c.c_v * (q.eps * q.s).sqrt();

    if q.m >= full {
        report.branch = Branch::Full;
        report.value = 1.0;
        if q.m >= middle.max(floor) {
            report.flag(Flag::GuardOverlap);
        }
        return report;
    }
    if q.m < floor {
        report.branch = Branch::BelowDomain;
        report.value = 0.0;
        return report;
    }
    let raw = if q.m >= middle {
        report.branch = Branch::SqrtLog;
        q.sqrt_log_term().map(|t| scale * t)
    } else {
        report.branch = Branch::MinForm;
        q.min_term().map(|t| scale * t)
    };
    match raw {
        Some(v) => {
            if v > 1.0 {
                report.flag(Flag::Capped);
            }
            report.value = v.min(1.0);
        }
        None => log_domain(&mut report),
    }
    report
}

/// Upper threshold `h(m, eps, p, s)` for the uniform flavor. Values above
/// 0.5 are reported with [`Flag::GateExceeded`]; the bound is only claimed
/// when `h <= 0.5`.
pub fn eval_h(q: &ThresholdQuery) -> RegimeReport {
    let c = &q.constants;
    let e2 = q.inv_eps2();
    let mut report = RegimeReport::new(Branch::NotApplicable, 0.0, q.inputs(), *c);
    q.sparsity_hypotheses(&mut report);
    if q.m > e2 * (c.c_e2 * q.p).exp() {
        report.flag(Flag::HypothesisUnmet("m <= eps^-2 e^{C_E2 p}".into()));
    }

    let zero = c.c_m1 * e2 * q.p;
    let floor = c.c_m2 * e2 * q.p;
    let middle = q.s * (c.c_e1 * q.p / (q.eps * q.s)).exp();
    let scale = c.c_v * (q.eps * q.s).sqrt();

    if q.m <= zero {
        report.branch = Branch::Zero;
        report.value = 0.0;
        if q.m >= middle.max(floor) {
            report.flag(Flag::GuardOverlap);
        }
        return report;
    }
    let raw = if q.m >= middle.max(floor) {
        report.branch = Branch::SqrtLog;
        q.sqrt_log_term().map(|t| scale * t)
    } else {
        if q.m >= floor {
            report.branch = Branch::MinForm;
        } else {
            report.branch = Branch::Indeterminate;
            report.flag(Flag::IndeterminateGap);
        }
        q.min_term().map(|t| scale * t)
    };
    match raw {
        Some(v) => {
            report.value = v;
            if v > 0.5 {
                report.flag(Flag::GateExceeded);
            }
        }
        None => log_domain(&mut report),
    }
    report
}

/// The `s = 1` threshold `f(m, eps, delta)`.
pub fn eval_f_fkl(m: f64, eps: f64, delta: f64, constants: &BoundConstants) -> Result<RegimeReport> {
    let q = ThresholdQuery::new(m, eps, delta, 1.0, *constants)?;
    let e2 = q.inv_eps2();
    let mut report = RegimeReport::new(Branch::NotApplicable, 0.0, q.inputs(), *constants);
    let full = 2.0 * e2 * q.p.exp();
    let zero = constants.c_m1 * e2 * q.p;
    let floor = constants.c_m2 * e2 * q.p;

    if m >= full {
        report.branch = Branch::Full;
        report.value = 1.0;
        if m <= zero {
            report.flag(Flag::GuardOverlap);
        }
        return Ok(report);
    }
    if m <= zero {
        report.branch = Branch::Zero;
        return Ok(report);
    }
    if m >= floor {
        report.branch = Branch::MinForm;
    } else {
        report.branch = Branch::Indeterminate;
        report.flag(Flag::IndeterminateGap);
    }
    match q.min_term() {
        Some(t) => report.value = eps.sqrt() * t,
        None => log_domain(&mut report),
    }
    Ok(report)
}

fn moment_inputs(m: f64, s: f64, v: f64, q: u32) -> ReportInputs {
    ReportInputs {
        m: Some(m),
        s: Some(s),
        v: Some(v),
        q: Some(q),
        ..Default::default()
    }
}

fn check_level(v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(SjlError::Precondition(format!("v must lie in (0, 1], got {v}")));
    }
    Ok(())
}

/// Upper bound on `||R(x)||_q` over unit `x` with `||x||_inf <= v`.
pub fn eval_moment_upper(
    m: f64,
    s: f64,
    v: f64,
    q: u32,
    constants: &BoundConstants,
) -> Result<RegimeReport> {
    check_level(v)?;
    if q < 2 || q % 2 != 0 || q as f64 > m {
        return Err(SjlError::Precondition(format!(
            "moment upper bound needs even q with 2 <= q <= m, got q = {q}, m = {m}"
        )));
    }
    let mut report = RegimeReport::new(
        Branch::SecondMoment,
        0.0,
        moment_inputs(m, s, v, q),
        *constants,
    );
    let qf = q as f64;
    let base = (qf / m).sqrt();
    if q == 2 {
        report.value = (2.0 / m).sqrt();
        return Ok(report);
    }
    let k = constants.k_upper;
    let v2 = v * v;
    if s * std::f64::consts::E / (m * v2) >= qf {
        report.branch = Branch::SmallLevel;
        report.value = k * base;
        return Ok(report);
    }
    let c2 = constants.c_2;
    if c2 * qf.powi(3) * m * v2 * v2 < s * s {
        report.branch = Branch::NotApplicable;
        report.flag(Flag::HypothesisUnmet("C_2 q^3 m v^4 >= s^2".into()));
        return Ok(report);
    }
    let a = (qf * m * v2 * v2 / (s * s)).ln();
    let b = (qf * m * v2 / s).ln();
    let log_sq = c2.cbrt() * qf * qf * v2 / (s * b * b);
    let value = match (a <= 2.0, b <= qf) {
        (true, true) => {
            report.branch = Branch::UpperCase1;
            base.max(log_sq)
        }
        (true, false) => {
            report.branch = Branch::UpperCase2;
            base
        }
        (false, true) => {
            report.branch = Branch::UpperCase3;
            let cap = qf / (s * (m / s).ln());
            base.max(qf * v2 / (s * a)).max(log_sq.min(cap))
        }
        (false, false) => {
            report.branch = Branch::UpperCase4;
            base.max(qf * v2 / (s * a))
        }
    };
    report.value = k * value;
    Ok(report)
}

/// Lower bounds on `||R||_q` at the hard vector `[v, ..., v, 0, ..., 0]`
/// for the uniform flavor. Lists every branch whose side conditions hold and
/// reports their maximum.
pub fn eval_moment_lower(
    m: f64,
    s: f64,
    v: f64,
    q: u32,
    constants: &BoundConstants,
) -> Result<RegimeReport> {
    check_level(v)?;
    if q < 2 || !q.is_power_of_two() || q as f64 > m {
        return Err(SjlError::Precondition(format!(
            "moment lower bound needs q a power of 2 with 2 <= q <= m, got q = {q}, m = {m}"
        )));
    }
    let mut report = RegimeReport::new(Branch::NoBranch, 0.0, moment_inputs(m, s, v, q), *constants);
    if v > 0.5 {
        report.flag(Flag::HypothesisUnmet("v <= 0.5".into()));
    }
    if !is_even_count(v) {
        report.flag(Flag::OddCount);
    }
    let qf = q as f64;
    let v2 = v * v;
    let k = constants.k_lower;
    let a = (qf * m * v2 * v2 / (s * s)).ln();
    let b = (qf * m * v2 / s).ln();
    let half_m = s <= m / 2.0;

    if qf * v2 <= s {
        report.candidates.push(BranchValue {
            branch: Branch::LowerSqrtQ,
            value: k * (qf / m).sqrt(),
        });
    }
    if m >= qf && (2.0..=qf).contains(&a) && 2.0 * qf * v2 <= 0.5 * s * a && half_m {
        report.candidates.push(BranchValue {
            branch: Branch::LowerLog,
            value: k * qf * v2 / (s * a),
        });
    }
    if v <= ((m / s).ln() / qf).sqrt() && (1.0..=qf).contains(&b) && half_m {
        report.candidates.push(BranchValue {
            branch: Branch::LowerLogSquared,
            value: k * qf * qf * v2 / (s * b * b),
        });
    }
    if let Some(best) = report
        .candidates
        .iter()
        .copied()
        .reduce(|x, y| if y.value > x.value { y } else { x })
    {
        report.branch = best.branch;
        report.value = best.value;
    }
    Ok(report)
}

/// Whether `1/v^2` is an even integer (to 1e-9).
pub fn is_even_count(v: f64) -> bool {
    let inv = 1.0 / (v * v);
    let r = inv.round();
    (inv - r).abs() < 1e-9 * inv.max(1.0) && r as u64 % 2 == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

/// Bounds on the single-row moment `||Z_1(x)||_T`: the upper bound over all
/// unit `x` with `||x||_inf <= v`, or the lower bound at the hard vector.
pub fn eval_row_bounds(
    m: f64,
    s: f64,
    v: f64,
    order: u32,
    direction: Direction,
    constants: &BoundConstants,
) -> Result<RegimeReport> {
    check_level(v)?;
    if order < 2 {
        return Err(SjlError::Precondition(format!("row bounds need T >= 2, got {order}")));
    }
    let t = order as f64;
    let v2 = v * v;
    let threshold = s * std::f64::consts::E / (m * v2);
    let mut report = RegimeReport::new(
        Branch::NotApplicable,
        0.0,
        moment_inputs(m, s, v, order),
        *constants,
    );
    let power = v2 * (s / (m * t * v2)).powf(2.0 / t);
    let log_arg = (t * m * v2 / s).ln();

    match direction {
        Direction::Upper => {
            let k = constants.k_row_upper;
            if order == 2 || t <= threshold {
                report.branch = Branch::RowLinear;
                report.value = k * t * s / m;
                if order > 2 && t >= threshold {
                    report.flag(Flag::GuardOverlap);
                }
            } else if log_arg <= t {
                report.branch = Branch::RowLogMin;
                let cap = t / (m / s).ln();
                report.value = k * (t * t * v2 / (log_arg * log_arg)).min(cap);
                if log_arg >= t {
                    report.flag(Flag::GuardOverlap);
                }
            } else {
                report.branch = Branch::RowPower;
                report.value = k * power;
            }
        }
        Direction::Lower => {
            let k = constants.k_row_lower;
            if !is_even_count(v) {
                report.flag(Flag::OddCount);
            }
            if order == 2 {
                if v2 > 0.5 {
                    report.flag(Flag::HypothesisUnmet("at least two coordinates".into()));
                }
                report.branch = Branch::RowLowerSecond;
                report.value = k * s / m;
                return Ok(report);
            }
            if order % 2 != 0 || s > m / 2.0 || t < threshold {
                report.flag(Flag::HypothesisUnmet(
                    "T even, s <= m/2 and T >= s e / (m v^2)".into(),
                ));
                return Ok(report);
            }
            if (1.0..=t).contains(&log_arg) && v <= ((m / s).ln() / t).sqrt() {
                report.candidates.push(BranchValue {
                    branch: Branch::RowLowerLogSquared,
                    value: k * t * t * v2 / (log_arg * log_arg),
                });
            }
            if log_arg > t {
                report.candidates.push(BranchValue {
                    branch: Branch::RowLowerPower,
                    value: k * power,
                });
            }
            report.candidates.push(BranchValue {
                branch: Branch::RowLowerIndicator,
                value: k * power,
            });
            let best = report
                .candidates
                .iter()
                .copied()
                .reduce(|x, y| if y.value > x.value { y } else { x })
                .expect("indicator branch always present");
            report.branch = best.branch;
            report.value = best.value;
        }
    }
    Ok(report)
}

fn dimension_inputs(eps: f64, delta: f64, s: f64) -> ReportInputs {
    ReportInputs {
        eps: Some(eps),
        delta: Some(delta),
        p: Some(log_inverse(delta)),
        s: Some(s),
        ..Default::default()
    }
}

fn check_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(SjlError::InvalidParams(format!(
            "eps and delta must lie in (0, 1), got eps = {eps}, delta = {delta}"
        )));
    }
    Ok(())
}

/// Sufficient dimension for the distortion guarantee on all of R^n:
/// `min(2 eps^-2 / delta, C_M eps^-2 p e^{C_S p / (eps s)})`.
pub fn kn_dimension(eps: f64, delta: f64, s: f64, constants: &BoundConstants) -> Result<RegimeReport> {
    check_eps_delta(eps, delta)?;
    constants.validate()?;
    let p = log_inverse(delta);
    let e2 = 1.0 / (eps * eps);
    let mut report = RegimeReport::new(Branch::Chebyshev, 0.0, dimension_inputs(eps, delta, s), *constants);
    if !(1.0..=constants.c_s * p / eps).contains(&s) {
        report.flag(Flag::SparsityOutOfRange);
    }
    let chebyshev = 2.0 * e2 / delta;
    let sparse = constants.c_m * e2 * p * (constants.c_s * p / (eps * s)).exp();
    if chebyshev <= sparse {
        report.value = chebyshev;
    } else {
        report.branch = Branch::SparsityExponential;
        report.value = sparse;
    }
    Ok(report)
}

/// Dimension at or below which the threshold stays at most 1/2:
/// `min(eps^-2 e^{C_T p}, eps^-2 p e^{C_L p / (eps s)})`.
pub fn dimension_lower(eps: f64, delta: f64, s: f64, constants: &BoundConstants) -> Result<RegimeReport> {
    check_eps_delta(eps, delta)?;
    constants.validate()?;
    let p = log_inverse(delta);
    let e2 = 1.0 / (eps * eps);
    let mut report = RegimeReport::new(Branch::DeltaPower, 0.0, dimension_inputs(eps, delta, s), *constants);
    if !(constants.c_floor..=constants.c_s * p / eps).contains(&s) {
        report.flag(Flag::SparsityOutOfRange);
    }
    let delta_arm = e2 * (constants.c_t * p).exp();
    let sparse = e2 * p * (constants.c_l * p / (eps * s)).exp();
    if delta_arm <= sparse {
        report.value = delta_arm;
    } else {
        report.branch = Branch::SparsityExponential;
        report.value = sparse;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones() -> BoundConstants {
        BoundConstants::default()
    }

    fn query(m: f64, eps: f64, delta: f64, s: f64) -> ThresholdQuery {
        ThresholdQuery::new(m, eps, delta, s, ones()).unwrap()
    }

    #[test]
    fn names_match_serialization() {
        assert_eq!(Branch::UpperCase3.name(), "upper_case3");
        assert_eq!(Branch::SqrtLog.to_string(), "sqrt_log");
        assert_eq!(Flag::OddCount.to_string(), "odd_count");
        for b in [Branch::Full, Branch::UpperCase1, Branch::LowerLogSquared, Branch::RowLowerIndicator] {
            let json = serde_json::to_string(&b).unwrap();
            assert_eq!(json, format!("\"{}\"", b.name()));
        }
    }

    #[test]
    fn query_logs_are_natural() {
        let q = query(100.0, 0.5, (-4.0f64).exp(), 2.0);
        assert!((q.p - 4.0).abs() < 1e-12);
        assert_eq!(q.p_even, 4);
        assert_eq!(even_order(0.05), 4); // ln 20 = 3.0 -> 4
        assert_eq!(even_order(0.3), 2);
        assert_eq!(even_order((-4.5f64).exp()), 6);
        assert!(ThresholdQuery::new(10.0, 1.0, 0.1, 1.0, ones()).is_err());
        assert!(ThresholdQuery::new(10.0, 0.1, 0.0, 1.0, ones()).is_err());
    }

    #[test]
    fn g_full_branch_at_chebyshev_dimension() {
        let (eps, p) = (0.3, 3.0);
        let m = 2.0 / (eps * eps) * f64::exp(p);
        let r = eval_g(&query(m, eps, (-p).exp(), 1.0));
        assert_eq!(r.branch, Branch::Full);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn g_worked_example_is_full() {
        // eps = 0.5, p = 4, s = 4, m = 4096: the full-space guard
        // m >= min(8 e^4, 16 e^2) = 118.2 already holds
        let r = eval_g(&query(4096.0, 0.5, (-4.0f64).exp(), 4.0));
        assert_eq!(r.branch, Branch::Full);
        assert_eq!(r.value, 1.0);
        assert!(r.has_flag(&Flag::GuardOverlap));
        // the square-root formula alone would give sqrt(2) sqrt(ln 256) / 2 = 1.6651
        let q = query(4096.0, 0.5, (-4.0f64).exp(), 4.0);
        let t = q.sqrt_log_term().unwrap() * 2f64.sqrt();
        assert!((t - 1.665_109_222_315_395_5).abs() < 1e-12);
    }

    #[test]
    fn g_and_h_share_square_root_branch() {
        // eps = 0.1, p = 10, s = 20, m = 10^4: full guard min(4.4e6, 1.48e5) fails,
        // middle guard max(20 e^5, 1000) = 2968 holds
        let q = query(1e4, 0.1, (-10.0f64).exp(), 20.0);
        let g = eval_g(&q);
        let h = eval_h(&q);
        assert_eq!(g.branch, Branch::SqrtLog);
        assert_eq!(h.branch, Branch::SqrtLog);
        let expected = 2f64.sqrt() * 10f64.ln().sqrt() / 10f64.sqrt();
        assert!((g.value - expected).abs() < 1e-12);
        assert_eq!(g.value, h.value);
        assert!(h.has_flag(&Flag::GateExceeded));
    }

    #[test]
    fn square_root_branch_scales_with_sqrt_s() {
        // hold guards fixed by picking m large enough for both sparsities
        let mut c = ones();
        c.c_u = 1e3;
        c.c_s = 1e-3;
        let (eps, delta) = (0.05, (-12.0f64).exp());
        let m = 2e6;
        let a = eval_g(&ThresholdQuery::new(m, eps, delta, 1.0, c).unwrap());
        let b = eval_g(&ThresholdQuery::new(m, eps, delta, 4.0, c).unwrap());
        assert_eq!(a.branch, Branch::SqrtLog);
        assert_eq!(b.branch, Branch::SqrtLog);
        assert!(b.value < 1.0);
        assert!((b.value / a.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn g_below_domain_and_min_form() {
        let r = eval_g(&query(10.0, 0.5, (-4.0f64).exp(), 1.0));
        assert_eq!(r.branch, Branch::BelowDomain);
        assert_eq!(r.value, 0.0);
        // s = 1, eps = 0.1, p = 5: floor 500, middle e^50, full min(2e2 e^5, 500 e^50) = 29682
        let q = query(5000.0, 0.1, (-5.0f64).exp(), 1.0);
        let g = eval_g(&q);
        assert_eq!(g.branch, Branch::MinForm);
        let expected = 0.1f64.sqrt() * (100f64.ln() / 5.0).min((10f64.ln() / 5.0).sqrt());
        assert!((g.value - expected).abs() < 1e-12);
        let f = eval_f_fkl(5000.0, 0.1, (-5.0f64).exp(), &ones()).unwrap();
        assert_eq!(f.branch, Branch::MinForm);
        assert_eq!(f.value, g.value);
    }

    #[test]
    fn f_cases() {
        let (eps, p) = (0.2f64, 3.0f64);
        let delta = (-p).exp();
        let full = 2.0 / (eps * eps) * p.exp();
        assert_eq!(eval_f_fkl(full, eps, delta, &ones()).unwrap().value, 1.0);
        let zero = p / (eps * eps);
        let r = eval_f_fkl(zero, eps, delta, &ones()).unwrap();
        assert_eq!(r.branch, Branch::Zero);
        assert_eq!(r.value, 0.0);
        let mut c = ones();
        c.c_m2 = 4.0;
        let r = eval_f_fkl(2.0 * zero, eps, delta, &c).unwrap();
        assert_eq!(r.branch, Branch::Indeterminate);
        assert!(r.has_flag(&Flag::IndeterminateGap));
    }

    #[test]
    fn h_cases() {
        let (eps, p) = (0.2f64, 3.0f64);
        let delta = (-p).exp();
        let zero = p / (eps * eps);
        let r = eval_h(&query(zero, eps, delta, 2.0));
        assert_eq!(r.branch, Branch::Zero);
        assert_eq!(r.value, 0.0);
        let mut c = ones();
        c.c_m2 = 3.0;
        let r = eval_h(&ThresholdQuery::new(2.0 * zero, eps, delta, 2.0, c).unwrap());
        assert_eq!(r.branch, Branch::Indeterminate);
        assert!(r.has_flag(&Flag::IndeterminateGap));
        // min form: s = 1 so the middle guard e^15 is out of reach
        let r = eval_h(&query(200.0, eps, delta, 1.0));
        assert_eq!(r.branch, Branch::MinForm);
        let expected = 0.2f64.sqrt() * ((200.0 * 0.2 / 3.0f64).ln() / 3.0).min(((200.0 * 0.04 / 3.0f64).ln() / 3.0).sqrt());
        assert!((r.value - expected).abs() < 1e-12);
    }

    #[test]
    fn negative_logs_are_flagged_not_nan() {
        let mut c = ones();
        c.c_m = 1e-3;
        // m eps^2 / p < 1
        let r = eval_g(&ThresholdQuery::new(10.0, 0.5, (-4.0f64).exp(), 1.0, c).unwrap());
        assert_eq!(r.branch, Branch::NotApplicable);
        assert!(r.has_flag(&Flag::LogDomain));
        assert!(!r.value.is_nan());
    }

    #[test]
    fn delta_power_rescales_p() {
        let base = query(1e4, 0.1, 0.01, 3.0);
        let cubed = query(1e4, 0.1, 0.01f64.powi(3), 3.0);
        assert!((cubed.p / base.p - 3.0).abs() < 1e-12);
        let a = dimension_lower(0.1, 0.01, 3.0, &ones()).unwrap();
        assert_eq!(a.inputs.p, Some(base.p));
    }

    #[test]
    fn moment_upper_cases() {
        let c = ones();
        for v in [0.01, 0.3, 1.0] {
            let r = eval_moment_upper(64.0, 2.0, v, 2, &c).unwrap();
            assert_eq!(r.branch, Branch::SecondMoment);
            assert!((r.value - (2.0f64 / 64.0).sqrt()).abs() < 1e-15);
        }
        // s e / (m v^2) = 2e / (100 * 0.0004) = 135.9 >= 8
        let r = eval_moment_upper(100.0, 2.0, 0.02, 8, &c).unwrap();
        assert_eq!(r.branch, Branch::SmallLevel);
        assert!((r.value - (8.0f64 / 100.0).sqrt()).abs() < 1e-15);

        // m = 1024, s = 2, v = 0.25, q = 8: ln(q m v^4 / s^2) = ln 8 > 2,
        // ln(q m v^2 / s) = ln 256 <= 8
        let r = eval_moment_upper(1024.0, 2.0, 0.25, 8, &c).unwrap();
        assert_eq!(r.branch, Branch::UpperCase3);
        let expected = (8.0 * 0.0625 / (2.0 * 8f64.ln()))
            .max((8.0f64 / 1024.0).sqrt())
            .max((64.0 * 0.0625 / (2.0 * 256f64.ln().powi(2))).min(8.0 / (2.0 * 512f64.ln())));
        assert!((r.value - expected).abs() < 1e-15);
        assert!((r.value - 0.120_224_586_740_747_6).abs() < 1e-12);
    }

    #[test]
    fn moment_upper_remaining_cases() {
        let c = ones();
        // case 1: a <= 2, b <= q
        let r = eval_moment_upper(64.0, 1.0, 0.25, 4, &c).unwrap();
        // a = ln(4*64/256) = 0, b = ln(16) = 2.77 <= 4
        assert_eq!(r.branch, Branch::UpperCase1);
        let expected = 0.25f64.max(16.0 * 0.0625 / 16f64.ln().powi(2));
        assert!((r.value - expected).abs() < 1e-15);
        // case 2: a <= 2, b > q
        let r = eval_moment_upper(4096.0, 4.0, 0.1, 4, &c).unwrap();
        // a = ln(4*4096*1e-4/16) = ln 0.1024 < 2, b = ln(4*4096*0.01/4) = ln 40.96 = 3.71 <= 4 -> case 1
        assert_eq!(r.branch, Branch::UpperCase1);
        let r = eval_moment_upper(1e6, 4.0, 0.1, 4, &c).unwrap();
        // a = ln(4e6 * 1e-4 / 16) = ln 25 = 3.2 > 2, b = ln(1e4) = 9.2 > 4
        assert_eq!(r.branch, Branch::UpperCase4);
        let expected = (4.0f64 / 1e6).sqrt().max(4.0 * 0.01 / (4.0 * 25f64.ln()));
        assert!((r.value - expected).abs() < 1e-15);
        let r = eval_moment_upper(1e5, 20.0, 0.3, 4, &c).unwrap();
        // a = ln(4e5 * 0.0081 / 400) = ln 8.1 = 2.09 > 2 ... b = ln(4e5*0.09/20) = ln 1800 = 7.5 > 4
        assert_eq!(r.branch, Branch::UpperCase4);
        // case 2 proper: a <= 2 and b > q
        let r = eval_moment_upper(1e5, 40.0, 0.3, 4, &c).unwrap();
        // a = ln(4e5*0.0081/1600) = ln 2.025 = 0.7, b = ln(4e5*0.09/40) = ln 900 = 6.8 > 4
        assert_eq!(r.branch, Branch::UpperCase2);
        assert!((r.value - (4.0f64 / 1e5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn moment_upper_applicability() {
        let c = ones();
        // q^3 m v^4 = 64 * 48 / 256 = 12 < s^2 = 16 while s e / (m v^2) = 4e / 3 = 3.6 < q = 4
        let r = eval_moment_upper(48.0, 4.0, 0.25, 4, &c).unwrap();
        assert_eq!(r.branch, Branch::NotApplicable);
        assert!(!r.is_applicable());
        assert!(eval_moment_upper(16.0, 3.0, 0.25, 3, &c).is_err());
        assert!(eval_moment_upper(4.0, 1.0, 0.25, 8, &c).is_err());
    }

    #[test]
    fn moment_lower_branches() {
        let c = ones();
        // q v^2 <= s
        let r = eval_moment_lower(16.0, 2.0, 0.5, 4, &c).unwrap();
        assert!(r.candidates.iter().any(|b| b.branch == Branch::LowerSqrtQ && (b.value - 0.5).abs() < 1e-15));
        assert!(r.is_applicable());
        // 1/v^2 = 9 is odd
        let r = eval_moment_lower(16.0, 2.0, 1.0 / 3.0, 4, &c).unwrap();
        assert!(r.has_flag(&Flag::OddCount));
        assert!(!r.is_applicable());
        // v > 0.5
        let r = eval_moment_lower(16.0, 2.0, 1.0 / 2f64.sqrt(), 2, &c).unwrap();
        assert!(!r.is_applicable());
        // log branch: m = 2^20, s = 1, v^2 = 1/16, q = 4:
        // a = ln(4 * 2^20 / 256) = ln 16384 = 9.7 > q -> not in [2, q]; use q = 16:
        // a = ln(16 * 2^20 / 256) = ln 65536 = 11.09 in [2, 16], 2 q v^2 = 2 <= 0.5 a
        let r = eval_moment_lower(1048576.0, 1.0, 0.25, 16, &c).unwrap();
        let a = 65536f64.ln();
        assert!(r.candidates.iter().any(|b| b.branch == Branch::LowerLog && (b.value - 1.0 / a).abs() < 1e-15));
        // log-squared: v <= sqrt(ln(m/s)/q) = sqrt(13.86/16) = 0.93, b = ln(16 * 2^20/16) = 13.86 in [1, 16]
        let b = (1048576f64).ln();
        assert!(r
            .candidates
            .iter()
            .any(|c| c.branch == Branch::LowerLogSquared && (c.value - 16.0 / (b * b)).abs() < 1e-15));
        let best = r.candidates.iter().map(|c| c.value).fold(0.0, f64::max);
        assert_eq!(r.value, best);
        assert!(eval_moment_lower(16.0, 2.0, 0.5, 6, &c).is_err());
    }

    #[test]
    fn moment_lower_no_branch() {
        // q v^2 = 1 > s = 0.5 is impossible for integer s; use s = 1, q = 8, v = 0.5:
        // q v^2 = 2 > 1; a = ln(8*8*0.0625) = ln 4 = 1.39 < 2; b = ln(8*8*0.25) = ln 16 = 2.77,
        // v <= sqrt(ln 8 / 8) = 0.51 holds, s <= m/2 holds -> log-squared applies
        let r = eval_moment_lower(8.0, 1.0, 0.5, 8, &BoundConstants::default()).unwrap();
        assert_eq!(r.branch, Branch::LowerLogSquared);
        // shrink m so no branch holds: m = 8, s = 4, q = 8, v = 0.5: q v^2 = 2 <= 4 -> sqrt(q/m)
        let r = eval_moment_lower(8.0, 4.0, 0.5, 8, &BoundConstants::default()).unwrap();
        assert_eq!(r.branch, Branch::LowerSqrtQ);
        // m = 8, s = 1, q = 8, v^2 = 1/4 -> above; v^2 = 1/2 -> v > 0.5 but evaluate:
        // q v^2 = 4 > 1, a = ln(8*8*0.25) = ln 16 = 2.77 in [2, 8], 2 q v^2 = 8 > 0.5 a,
        // b = ln 32 = 3.47, v = 0.707 <= sqrt(ln 8/8) = 0.51 fails
        let r = eval_moment_lower(8.0, 1.0, 1.0 / 2f64.sqrt(), 8, &BoundConstants::default()).unwrap();
        assert_eq!(r.branch, Branch::NoBranch);
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn row_bounds() {
        let c = ones();
        let r = eval_row_bounds(8.0, 2.0, 0.5, 2, Direction::Upper, &c).unwrap();
        assert_eq!(r.branch, Branch::RowLinear);
        assert!((r.value - 0.5).abs() < 1e-15);
        let r = eval_row_bounds(8.0, 2.0, 0.5, 2, Direction::Lower, &c).unwrap();
        assert_eq!(r.branch, Branch::RowLowerSecond);
        assert!((r.value - 0.25).abs() < 1e-15);
        // T = 4 <= s e / (m v^2) = 2e/(16*0.0625) = 5.4
        let r = eval_row_bounds(16.0, 2.0, 0.25, 4, Direction::Upper, &c).unwrap();
        assert_eq!(r.branch, Branch::RowLinear);
        assert!((r.value - 0.5).abs() < 1e-15);
        // T = 8: ln(8*16*0.0625/2) = ln 4 <= 8 -> log-min
        let r = eval_row_bounds(16.0, 2.0, 0.25, 8, Direction::Upper, &c).unwrap();
        assert_eq!(r.branch, Branch::RowLogMin);
        let expected = (64.0 * 0.0625 / 4f64.ln().powi(2)).min(8.0 / 8f64.ln());
        assert!((r.value - expected).abs() < 1e-15);
        // power branch: ln(T m v^2 / s) > T: T = 3, m = 1e4, s = 1, v = 0.5 -> ln 7500 = 8.9 > 3
        let r = eval_row_bounds(1e4, 1.0, 0.5, 3, Direction::Upper, &c).unwrap();
        assert_eq!(r.branch, Branch::RowPower);
        let expected = 0.25 * (1.0f64 / (1e4 * 3.0 * 0.25)).powf(2.0 / 3.0);
        assert!((r.value - expected).abs() < 1e-15);
        // lower with T = 4, m = 1e4, s = 1, v = 0.5: ln(1e4*0.25*4) = ln 1e4 = 9.2 > 4 -> power
        let r = eval_row_bounds(1e4, 1.0, 0.5, 4, Direction::Lower, &c).unwrap();
        assert!(r.candidates.iter().any(|b| b.branch == Branch::RowLowerPower));
        assert!(r.candidates.iter().any(|b| b.branch == Branch::RowLowerIndicator));
        let expected = 0.25 * (1.0f64 / 1e4).powf(0.5);
        assert!((r.value - expected).abs() < 1e-15);
        // odd T for the lower bound is not covered
        let r = eval_row_bounds(1e4, 1.0, 0.5, 3, Direction::Lower, &c).unwrap();
        assert_eq!(r.branch, Branch::NotApplicable);
    }

    #[test]
    fn dimensions() {
        let c = ones();
        // eps = 0.5, delta = e^-4, s = 1: min(8 e^4, 16 e^8) = 8 e^4
        let k = kn_dimension(0.5, (-4.0f64).exp(), 1.0, &c).unwrap();
        assert_eq!(k.branch, Branch::Chebyshev);
        assert!((k.value - 8.0 * 4f64.exp()).abs() < 1e-9);
        assert!((k.value - 436.785).abs() < 1e-3);
        // s = C_S p / eps: second arm is e eps^-2 p
        let (eps, delta) = (0.1, 1e-6);
        let p = log_inverse(delta);
        let k = kn_dimension(eps, delta, p / eps, &c).unwrap();
        assert_eq!(k.branch, Branch::SparsityExponential);
        assert!((k.value - std::f64::consts::E * p / (eps * eps)).abs() < 1e-8);
        assert!(k.flags.is_empty());
        // out of range sparsity is flagged
        let k = kn_dimension(0.5, 0.1, 100.0, &c).unwrap();
        assert!(k.has_flag(&Flag::SparsityOutOfRange));

        // eps = 0.5, delta = e^-4, s = 2: min(4 e^4, 16 e^4) = 4 e^4
        let d = dimension_lower(0.5, (-4.0f64).exp(), 2.0, &c).unwrap();
        assert_eq!(d.branch, Branch::DeltaPower);
        assert!((d.value - 4.0 * 4f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn dimension_lower_is_continuous_at_crossover() {
        // with unit constants the arms cross where p e^{p/(eps s)} = e^p,
        // i.e. s = p / (eps (p - ln p))
        let (eps, delta) = (0.25, 1e-3);
        let p = log_inverse(delta);
        let s = p / (eps * (p - p.ln()));
        let c = ones();
        let at = dimension_lower(eps, delta, s, &c).unwrap().value;
        let arm = (p.exp()) / (eps * eps);
        assert!((at - arm).abs() / arm < 1e-12);
        let below = dimension_lower(eps, delta, s * (1.0 - 1e-9), &c).unwrap().value;
        let above = dimension_lower(eps, delta, s * (1.0 + 1e-9), &c).unwrap().value;
        assert!((below - at).abs() / at < 1e-6 && (above - at).abs() / at < 1e-6);
    }

    #[test]
    fn lower_dimension_never_exceeds_sufficient() {
        let c = ones();
        for (k, (eps, delta)) in [(0.5, 0.1), (0.3, 0.05), (0.2, 0.01), (0.1, 1e-3), (0.05, 1e-4)]
            .into_iter()
            .enumerate()
        {
            for s in [1.0, 2.0 + k as f64] {
                let lo = dimension_lower(eps, delta, s, &c).unwrap().value;
                let hi = kn_dimension(eps, delta, s, &c).unwrap().value;
                assert!(lo <= hi, "eps {eps} delta {delta} s {s}: {lo} > {hi}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn g_and_h_always_pick_one_branch(
            m in 1.0f64..1e7, eps in 0.01f64..0.99, lnd in 0.1f64..20.0, s in 1.0f64..64.0
        ) {
            let q = query(m, eps, (-lnd).exp(), s);
            for r in [eval_g(&q), eval_h(&q), eval_f_fkl(m, eps, (-lnd).exp(), &ones()).unwrap()] {
                proptest::prop_assert!(r.value.is_finite());
                proptest::prop_assert!(r.value >= 0.0);
            }
            proptest::prop_assert!(eval_g(&q).value <= 1.0);
        }

        #[test]
        fn s_one_g_min_form_equals_f(m in 1.0f64..1e8, eps in 0.01f64..0.99, lnd in 0.5f64..20.0) {
            let delta = (-lnd).exp();
            let g = eval_g(&query(m, eps, delta, 1.0));
            let f = eval_f_fkl(m, eps, delta, &ones()).unwrap();
            if g.branch == Branch::MinForm && f.branch == Branch::MinForm {
                proptest::prop_assert_eq!(g.value, f.value.min(1.0));
            }
        }
    }
}
