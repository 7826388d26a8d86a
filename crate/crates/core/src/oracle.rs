//! Exact laws of `R(x)` and of a single row `Z_1(x)` by full enumeration.
//!
//! Only columns on the support of `x` influence `R(x)`. Permuting rows (within
//! blocks for the block flavor) and flipping the sign of a whole row preserve
//! both the matrix distribution and `R(x)`, and together act transitively on
//! the configurations of one column. The first support column is therefore
//! pinned to a canonical configuration and only the remaining columns are
//! enumerated; every configuration carries the same weight.

use rayon::prelude::*;

use crate::error::{Result, SjlError};
use crate::numeric::{binomial, CompensatedSum};
use crate::types::{Entry, Flavor, MomentEstimate, SjlParams, UnitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_configs: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_configs: 100_000_000,
        }
    }
}

/// Every (support, signs) configuration of one column, each sorted by row.
pub fn column_configs(params: &SjlParams) -> Vec<Vec<Entry>> {
    let s = params.s();
    let supports: Vec<Vec<u32>> = match params.flavor() {
        Flavor::Uniform => subsets(params.m(), s),
        Flavor::Block => {
            let h = params.block_height();
            let mut out = vec![Vec::new()];
            for k in 0..s {
                out = out
                    .into_iter()
                    .flat_map(|prefix: Vec<u32>| {
                        (0..h).map(move |j| {
                            let mut p = prefix.clone();
                            p.push((k * h + j) as u32);
                            p
                        })
                    })
                    .collect();
            }
            out
        }
    };
    let mut configs = Vec::with_capacity(supports.len() << s);
    for rows in supports {
        for mask in 0u32..(1 << s) {
            configs.push(
                rows.iter()
                    .enumerate()
                    .map(|(k, &row)| Entry {
                        row,
                        negative: mask >> k & 1 == 1,
                    })
                    .collect(),
            );
        }
    }
    configs
}

fn subsets(m: usize, s: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (0..s as u32).collect();
    loop {
        out.push(cur.clone());
        // next combination in lexicographic order
        let mut k = s;
        while k > 0 && cur[k - 1] as usize == m - s + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return out;
        }
        cur[k - 1] += 1;
        for j in k..s {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Number of configurations of one column.
pub fn configs_per_column(params: &SjlParams) -> u128 {
    let supports = match params.flavor() {
        Flavor::Uniform => binomial(params.m() as u64, params.s() as u64),
        Flavor::Block => (params.block_height() as u128).saturating_pow(params.s() as u32),
    };
    supports.saturating_mul(1u128 << params.s())
}

/// Configurations the enumeration of `R(x)` will visit.
pub fn enumeration_size(params: &SjlParams, x: &UnitVector) -> u128 {
    let k = x.nnz();
    configs_per_column(params).saturating_pow(k.saturating_sub(1) as u32)
}

fn check_budget(needed: u128, budget: EnumerationBudget) -> Result<()> {
    if needed > budget.max_configs as u128 {
        return Err(SjlError::BudgetExceeded {
            needed,
            budget: budget.max_configs,
        });
    }
    Ok(())
}

fn check_dim(params: &SjlParams, x: &UnitVector) -> Result<()> {
    if params.n() != x.dim() {
        return Err(SjlError::DimensionMismatch {
            expected: params.n(),
            got: x.dim(),
        });
    }
    Ok(())
}

/// Exact statistics of `R(x)` gathered in a single enumeration pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactProfile {
    /// Orders requested, in the same order as the moment vectors.
    pub orders: Vec<u32>,
    /// `E|R|^q` per requested order.
    pub abs_moments: Vec<f64>,
    /// `E[R^q]` per requested order.
    pub signed_moments: Vec<f64>,
    /// Thresholds requested for tail probabilities.
    pub thresholds: Vec<f64>,
    /// `P[|R| > eps]` per requested threshold.
    pub tails: Vec<f64>,
    /// Largest attainable `|R|`.
    pub max_abs: f64,
    /// Configurations visited (each equally likely).
    pub configs: u64,
}

impl ExactProfile {
    /// `||R||_q` for a requested order.
    pub fn norm(&self, q: u32) -> Option<f64> {
        let k = self.orders.iter().position(|&o| o == q)?;
        Some(self.abs_moments[k].powf(1.0 / q as f64))
    }

    pub fn tail(&self, eps: f64) -> Option<f64> {
        let k = self.thresholds.iter().position(|&t| t == eps)?;
        Some(self.tails[k])
    }
}

#[derive(Clone)]
struct Partial {
    abs: Vec<CompensatedSum>,
    signed: Vec<CompensatedSum>,
    exceed: Vec<u64>,
    max_abs: f64,
    count: u64,
}

impl Partial {
    fn new(orders: usize, thresholds: usize) -> Self {
        Partial {
            abs: vec![CompensatedSum::new(); orders],
            signed: vec![CompensatedSum::new(); orders],
            exceed: vec![0; thresholds],
            max_abs: 0.0,
            count: 0,
        }
    }
}

/// Enumerates the law of `R(x)` and returns the requested moments and tails.
pub fn exact_profile(
    params: &SjlParams,
    x: &UnitVector,
    orders: &[u32],
    thresholds: &[f64],
    budget: EnumerationBudget,
) -> Result<ExactProfile> {
    check_dim(params, x)?;
    if orders.iter().any(|&q| q == 0) {
        return Err(SjlError::Precondition("moment order must be >= 1".into()));
    }
    check_budget(enumeration_size(params, x), budget)?;

    let support: Vec<(usize, f64)> = x.support().collect();
    let configs = column_configs(params);
    let m = params.m();
    let s = params.s() as f64;
    let canonical = &configs[0];
    let rest = &support[1..];

    let visit = |part: &mut Partial, r: f64| {
        let a = r.abs();
        for (k, &q) in orders.iter().enumerate() {
            let rq = r.powi(q as i32);
            part.signed[k].add(rq);
            part.abs[k].add(rq.abs());
        }
        for (k, &eps) in thresholds.iter().enumerate() {
            if a > eps {
                part.exceed[k] += 1;
            }
        }
        part.max_abs = part.max_abs.max(a);
        part.count += 1;
    };

    // one piece per configuration of the second support column (or a single
    // piece when the support has one coordinate); each piece runs the odometer
    // over the remaining columns sequentially
    let first_choices: Vec<Option<usize>> = if rest.is_empty() {
        vec![None]
    } else {
        (0..configs.len()).map(Some).collect()
    };

    let parts: Vec<Partial> = first_choices
        .par_iter()
        .map(|&first| {
            let mut part = Partial::new(orders.len(), thresholds.len());
            let mut lin = vec![0.0f64; m];
            let mut diag = vec![0.0f64; m];
            let tail = if rest.len() > 1 { &rest[1..] } else { &[][..] };
            let mut odo = vec![0usize; tail.len()];
            loop {
                lin.iter_mut().for_each(|v| *v = 0.0);
                diag.iter_mut().for_each(|v| *v = 0.0);
                let mut add = |cfg: &[Entry], xi: f64| {
                    for e in cfg {
                        let t = e.sign() * xi;
                        lin[e.row as usize] += t;
                        diag[e.row as usize] += t * t;
                    }
                };
                add(canonical, support[0].1);
                if let Some(c) = first {
                    add(&configs[c], rest[0].1);
                }
                for (slot, &(_, xi)) in odo.iter().zip(tail) {
                    add(&configs[*slot], xi);
                }
                let r = lin
                    .iter()
                    .zip(&diag)
                    .map(|(l, d)| l * l - d)
                    .sum::<f64>()
                    / s;
                visit(&mut part, r);

                // advance odometer
                let mut k = 0;
                loop {
                    if k == odo.len() {
                        return part;
                    }
                    odo[k] += 1;
                    if odo[k] < configs.len() {
                        break;
                    }
                    odo[k] = 0;
                    k += 1;
                }
            }
        })
        .collect();

    let mut total = Partial::new(orders.len(), thresholds.len());
    for p in &parts {
        for k in 0..orders.len() {
            total.abs[k].merge(&p.abs[k]);
            total.signed[k].merge(&p.signed[k]);
        }
        for k in 0..thresholds.len() {
            total.exceed[k] += p.exceed[k];
        }
        total.max_abs = total.max_abs.max(p.max_abs);
        total.count += p.count;
    }
    let count = total.count as f64;
    Ok(ExactProfile {
        orders: orders.to_vec(),
        abs_moments: total.abs.iter().map(|a| a.value() / count).collect(),
        signed_moments: total.signed.iter().map(|a| a.value() / count).collect(),
        thresholds: thresholds.to_vec(),
        tails: total.exceed.iter().map(|&e| e as f64 / count).collect(),
        max_abs: total.max_abs,
        configs: total.count,
    })
}

/// Exact `||R(x)||_q`.
pub fn exact_moment(
    params: &SjlParams,
    x: &UnitVector,
    q: u32,
    budget: EnumerationBudget,
) -> Result<MomentEstimate> {
    let prof = exact_profile(params, x, &[q], &[], budget)?;
    Ok(MomentEstimate::exact(q, prof.abs_moments[0].powf(1.0 / q as f64)))
}

/// Exact signed moment `E[R(x)^q]`. Zero for `q = 1`; `R` is skewed, so
/// higher odd moments are generally nonzero.
pub fn exact_signed_moment(
    params: &SjlParams,
    x: &UnitVector,
    q: u32,
    budget: EnumerationBudget,
) -> Result<f64> {
    Ok(exact_profile(params, x, &[q], &[], budget)?.signed_moments[0])
}

/// Exact `P[|R(x)| > eps]` (strict inequality).
pub fn exact_tail(
    params: &SjlParams,
    x: &UnitVector,
    eps: f64,
    budget: EnumerationBudget,
) -> Result<f64> {
    Ok(exact_profile(params, x, &[], &[eps], budget)?.tails[0])
}

/// Exact `||Z_1(x)||_T` for one row, optionally restricted to the event that
/// exactly two support coordinates land in the row.
///
/// A single row has independent Bernoulli(s/m) entries across columns (for
/// both flavors) and independent signs, which is all that `Z_1` depends on.
/// For a hard vector the support is its first `N = 1/v^2` coordinates.
pub fn exact_row_moment(
    params: &SjlParams,
    x: &UnitVector,
    order: u32,
    indicator_two: bool,
    budget: EnumerationBudget,
) -> Result<MomentEstimate> {
    check_dim(params, x)?;
    if order == 0 {
        return Err(SjlError::Precondition("moment order must be >= 1".into()));
    }
    let support: Vec<f64> = x.support().map(|(_, v)| v).collect();
    let k = support.len();
    // sum_j C(k, j) 2^j = 3^k (subset, signs on the subset)
    let needed = 3u128.checked_pow(k as u32).unwrap_or(u128::MAX);
    check_budget(needed, budget)?;
    if k > 40 {
        return Err(SjlError::BudgetExceeded {
            needed,
            budget: budget.max_configs,
        });
    }

    let p = params.s() as f64 / params.m() as f64;
    let subsets: Vec<u64> = (0..1u64 << k).collect();
    let parts: Vec<CompensatedSum> = subsets
        .par_iter()
        .map(|&mask| {
            let members: Vec<f64> = (0..k)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| support[i])
                .collect();
            let j = members.len();
            let mut acc = CompensatedSum::new();
            if j < 2 || (indicator_two && j != 2) {
                return acc;
            }
            let weight = p.powi(j as i32) * (1.0 - p).powi((k - j) as i32);
            let diag: f64 = members.iter().map(|v| v * v).sum();
            // flipping every sign leaves Z unchanged, so fix the first sign
            let half = 1u64 << (j - 1);
            for signs in 0..half {
                let mut lin = members[0];
                for (t, &v) in members.iter().enumerate().skip(1) {
                    lin += if signs >> (t - 1) & 1 == 1 { -v } else { v };
                }
                let z = lin * lin - diag;
                acc.add(z.abs().powi(order as i32));
            }
            let mut scaled = CompensatedSum::new();
            scaled.add(acc.value() * weight / half as f64);
            scaled
        })
        .collect();
    let mut total = CompensatedSum::new();
    for part in &parts {
        total.merge(part);
    }
    Ok(MomentEstimate::exact(
        order,
        total.value().powf(1.0 / order as f64),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::error_sample;
    use crate::types::{basis_vector, hard_vector, make_unit_vector, SjlMatrix};

    fn closed_form_second(params: &SjlParams, x: &UnitVector) -> f64 {
        2.0 / params.m() as f64 * (1.0 - x.fourth_power_sum())
    }

    /// Enumerates every configuration of every column with no symmetry
    /// reduction, using the public sampler's error routine.
    fn brute_force(params: &SjlParams, x: &UnitVector, q: u32, eps: f64) -> (f64, f64) {
        let configs = column_configs(params);
        let n = params.n();
        let mut odo = vec![0usize; n];
        let (mut mom, mut tail, mut count) = (0.0, 0.0, 0.0);
        loop {
            let cols = odo.iter().map(|&c| configs[c].clone()).collect();
            let a = SjlMatrix::from_columns(*params, cols).unwrap();
            let r = error_sample(&a, x).unwrap();
            mom += r.abs().powi(q as i32);
            if r.abs() > eps {
                tail += 1.0;
            }
            count += 1.0;
            let mut k = 0;
            loop {
                if k == n {
                    return (mom / count, tail / count);
                }
                odo[k] += 1;
                if odo[k] < configs.len() {
                    break;
                }
                odo[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn config_counts() {
        let p = SjlParams::uniform(1, 6, 2).unwrap();
        assert_eq!(column_configs(&p).len(), 60);
        assert_eq!(configs_per_column(&p), 60);
        let b = SjlParams::new(1, 6, 2, Flavor::Block).unwrap();
        assert_eq!(column_configs(&b).len(), 36);
        assert_eq!(configs_per_column(&b), 36);
        for cfg in column_configs(&p) {
            assert!(cfg.windows(2).all(|w| w[0].row < w[1].row));
        }
    }

    #[test]
    fn symmetry_reduction_matches_brute_force() {
        for (n, m, s, flavor) in [
            (2, 3, 1, Flavor::Uniform),
            (3, 4, 2, Flavor::Uniform),
            (3, 4, 2, Flavor::Block),
            (2, 6, 3, Flavor::Block),
            (3, 3, 2, Flavor::Uniform),
        ] {
            let p = SjlParams::new(n, m, s, flavor).unwrap();
            let raw: Vec<f64> = (0..n).map(|i| 0.3 + 0.7 * i as f64).collect();
            let x = make_unit_vector(&raw).unwrap();
            let prof = exact_profile(&p, &x, &[2, 4], &[0.4], EnumerationBudget::default()).unwrap();
            let (m4, tail) = brute_force(&p, &x, 4, 0.4);
            assert!((prof.abs_moments[1] - m4).abs() < 1e-13, "{p:?}");
            assert!((prof.tails[0] - tail).abs() < 1e-15, "{p:?}");
            let (m2, _) = brute_force(&p, &x, 2, 0.4);
            assert!((prof.abs_moments[0] - m2).abs() < 1e-13);
        }
    }

    #[test]
    fn second_moment_closed_form() {
        let p = SjlParams::uniform(2, 4, 1).unwrap();
        let x = hard_vector(1.0 / 2f64.sqrt(), 2).unwrap();
        let est = exact_moment(&p, &x, 2, EnumerationBudget::default()).unwrap();
        assert!((est.value.powi(2) - 0.25).abs() < 1e-12);
        assert_eq!(est.method, crate::types::Method::Exact);
        assert_eq!(est.std_error, 0.0);
        for (n, m, s) in [(3, 5, 2), (3, 6, 3), (4, 3, 1)] {
            let p = SjlParams::uniform(n, m, s).unwrap();
            let x = make_unit_vector(&(0..n).map(|i| (i as f64 + 1.0).sqrt()).collect::<Vec<_>>()).unwrap();
            let est = exact_moment(&p, &x, 2, EnumerationBudget::default()).unwrap();
            assert!((est.value.powi(2) - closed_form_second(&p, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn first_moment_vanishes_third_does_not() {
        let p = SjlParams::uniform(3, 4, 2).unwrap();
        let x = make_unit_vector(&[1.0, -2.0, 0.5]).unwrap();
        let b = EnumerationBudget::default();
        assert!(exact_signed_moment(&p, &x, 1, b).unwrap().abs() < 1e-14);
        // products of sign pairs are invariant under a global flip, so R is
        // skewed: same-row triangles contribute positively to E[R^3]
        assert!(exact_signed_moment(&p, &x, 3, b).unwrap() > 1e-3);
    }

    #[test]
    fn collision_tail() {
        let p = SjlParams::uniform(2, 2, 1).unwrap();
        let x = make_unit_vector(&[1.0, 1.0]).unwrap();
        let t = exact_tail(&p, &x, 0.5, EnumerationBudget::default()).unwrap();
        assert_eq!(t, 0.5);
        let e = basis_vector(2, 0).unwrap();
        assert_eq!(exact_tail(&p, &e, 1e-9, EnumerationBudget::default()).unwrap(), 0.0);
    }

    #[test]
    fn tail_vanishes_beyond_max() {
        let p = SjlParams::uniform(3, 3, 2).unwrap();
        let x = make_unit_vector(&[1.0, 2.0, 3.0]).unwrap();
        let prof = exact_profile(&p, &x, &[2], &[], EnumerationBudget::default()).unwrap();
        assert!(prof.max_abs > 0.0);
        let t = exact_tail(&p, &x, prof.max_abs, EnumerationBudget::default()).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let p = SjlParams::uniform(5, 8, 2).unwrap();
        let x = make_unit_vector(&[1.0; 5]).unwrap();
        let small = EnumerationBudget { max_configs: 1000 };
        assert!(matches!(
            exact_moment(&p, &x, 2, small),
            Err(SjlError::BudgetExceeded { .. })
        ));
        assert!(exact_row_moment(&p, &x, 2, false, EnumerationBudget { max_configs: 10 }).is_err());
    }

    #[test]
    fn row_second_moment_identity() {
        // E[Z_1^2] = 2 v^4 (s/m)^2 N (N - 1)
        for (m, s, count) in [(4, 1, 2), (6, 2, 4), (8, 3, 6), (5, 5, 3)] {
            let p = SjlParams::uniform(count, m, s).unwrap();
            let x = crate::types::flat_vector(count, count).unwrap();
            let v2 = 1.0 / count as f64;
            let expected = 2.0 * v2 * v2 * (s as f64 / m as f64).powi(2) * (count * (count - 1)) as f64;
            let z = exact_row_moment(&p, &x, 2, false, EnumerationBudget::default()).unwrap();
            assert!((z.value.powi(2) - expected).abs() < 1e-12);
        }
        let p = SjlParams::uniform(2, 4, 1).unwrap();
        let x = hard_vector(1.0 / 2f64.sqrt(), 2).unwrap();
        let z = exact_row_moment(&p, &x, 2, false, EnumerationBudget::default()).unwrap();
        assert!((z.value.powi(2) - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn row_moment_of_basis_vector_is_zero() {
        let p = SjlParams::uniform(3, 4, 2).unwrap();
        let e = basis_vector(3, 2).unwrap();
        for t in [2, 3, 4, 8] {
            assert_eq!(exact_row_moment(&p, &e, t, false, EnumerationBudget::default()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn row_indicator_restricts_to_pairs() {
        // with exactly two coordinates the indicator changes nothing
        let p = SjlParams::uniform(2, 6, 2).unwrap();
        let x = crate::types::flat_vector(2, 2).unwrap();
        let a = exact_row_moment(&p, &x, 4, false, EnumerationBudget::default()).unwrap();
        let b = exact_row_moment(&p, &x, 4, true, EnumerationBudget::default()).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
        // with more coordinates it can only lower the moment
        let p = SjlParams::uniform(6, 6, 2).unwrap();
        let x = crate::types::flat_vector(6, 6).unwrap();
        let a = exact_row_moment(&p, &x, 4, false, EnumerationBudget::default()).unwrap();
        let b = exact_row_moment(&p, &x, 4, true, EnumerationBudget::default()).unwrap();
        assert!(b.value < a.value);
        // only pairs: Z = 2 v^2 sigma sigma, so E|Z I|^4 = C(6,2) p^2 (1-p)^4 (2/6)^4
        let pr: f64 = 1.0 / 3.0;
        let expected = 15.0 * pr.powi(2) * (1.0 - pr).powi(4) * (2.0f64 / 6.0).powi(4);
        assert!((b.value.powi(4) - expected).abs() < 1e-14);
    }

    #[test]
    fn partitioning_does_not_change_results() {
        let p = SjlParams::uniform(4, 5, 2).unwrap();
        let x = make_unit_vector(&[0.3, -1.0, 0.7, 0.2]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| exact_profile(&p, &x, &[2, 3, 6], &[0.2], EnumerationBudget::default()).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for k in 0..3 {
            assert_eq!(a.abs_moments[k].to_bits(), b.abs_moments[k].to_bits());
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
        #[test]
        fn norms_increase_and_tails_decrease(
            raw in proptest::collection::vec(-1.0f64..1.0, 2..4),
            m in 2usize..5,
            s_raw in 1usize..3,
            e1 in 0.0f64..1.5,
            e2 in 0.0f64..1.5,
        ) {
            proptest::prop_assume!(raw.iter().any(|&v| v.abs() > 1e-3));
            let s = s_raw.min(m);
            let p = SjlParams::uniform(raw.len(), m, s).unwrap();
            let x = make_unit_vector(&raw).unwrap();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let prof = exact_profile(&p, &x, &[1, 2, 3, 4, 6, 8], &[lo, hi], EnumerationBudget::default()).unwrap();
            let norms: Vec<f64> = prof.orders.iter().map(|&q| prof.norm(q).unwrap()).collect();
            for w in norms.windows(2) {
                proptest::prop_assert!(w[0] <= w[1] * (1.0 + 1e-12));
            }
            proptest::prop_assert!(prof.tails[0] >= prof.tails[1]);
            proptest::prop_assert!((prof.abs_moments[1] - closed_form_second(&p, &x)).abs() < 1e-12);
        }
    }
}
