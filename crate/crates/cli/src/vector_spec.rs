//! Parsing of the `x` setting into a unit vector.

use sjl_core::sampler::random_unit_vector;
use sjl_core::{basis_vector, flat_vector, hard_vector, make_unit_vector, Seed, UnitVector};

use crate::CliError;

/// Builds the vector named by `spec` in dimension `n`:
///
/// * `e<k>` the k-th standard basis vector (1-based, so `e1` is the first)
/// * `hard:<v>` the flat vector with `round(1/v^2)` equal entries
/// * `flat:<count>` the flat vector with `count` equal entries
/// * `random:<seed>` a uniformly random unit vector
/// * `values:<a>,<b>,...` explicit entries, normalized and zero-padded to `n`
pub fn build_vector(spec: &str, n: usize) -> Result<UnitVector, CliError> {
    let spec = spec.trim();
    let bad = || CliError::Config(format!("cannot parse vector spec '{spec}'"));
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let x = match kind {
        "hard" => hard_vector(arg.parse().map_err(|_| bad())?, n)?,
        "flat" => flat_vector(arg.parse().map_err(|_| bad())?, n)?,
        "random" => random_unit_vector(n, Seed::new(crate::config::parse_seed(arg)?))?,
        "values" => {
            let mut raw: Vec<f64> = arg
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            if raw.len() > n {
                return Err(CliError::Config(format!(
                    "vector has {} entries but n = {n}",
                    raw.len()
                )));
            }
            raw.resize(n, 0.0);
            make_unit_vector(&raw)?
        }
        k if k.starts_with('e') && arg.is_empty() => {
            let index: usize = k[1..].parse().map_err(|_| bad())?;
            if index == 0 {
                return Err(bad());
            }
            basis_vector(n, index - 1)?
        }
        _ => return Err(bad()),
    };
    Ok(x)
}

/// Whether every nonzero entry has the same magnitude.
pub fn is_flat(x: &UnitVector) -> bool {
    let level = x.linf_ratio();
    x.support().all(|(_, v)| (v.abs() - level).abs() <= 1e-12)
}
