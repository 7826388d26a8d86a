//! The universal constants of the threshold and moment formulas, made explicit.
//! None of them has a known value; all default to 1.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SjlError};

macro_rules! bound_constants {
    ($($field:ident => $doc:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(default)]
        pub struct BoundConstants {
            $(#[doc = $doc] pub $field: f64,)*
        }

        impl Default for BoundConstants {
            fn default() -> Self {
                BoundConstants { $($field: 1.0,)* }
            }
        }

        impl BoundConstants {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn get(&self, name: &str) -> Option<f64> {
                match name {
                    $(stringify!($field) => Some(self.$field),)*
                    _ => None,
                }
            }

            fn slot(&mut self, name: &str) -> Option<&mut f64> {
                match name {
                    $(stringify!($field) => Some(&mut self.$field),)*
                    _ => None,
                }
            }

            pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
                Self::NAMES.iter().map(move |&n| (n, self.get(n).unwrap_or(f64::NAN)))
            }
        }
    };
}

bound_constants! {
    c_eps => "Upper limit on the distortion for the threshold formulas.",
    c_delta => "Upper limit on the failure probability for the threshold formulas.",
    c_m => "Dimension floor `m >= C_M eps^-2 p` of the lower threshold (also the sufficient-dimension formula).",
    c_v => "Leading factor of the threshold values.",
    c_s => "Sparsity ceiling `s <= C_S eps^-1 p` and exponent constant of the middle regime.",
    c_u => "Exponent constant of the full-space regime of the lower threshold.",
    c_m1 => "Dimension below which the threshold is zero.",
    c_m2 => "Dimension floor of the min-form regime of the upper threshold.",
    c_e1 => "Exponent constant of the square-root regime of the upper threshold.",
    c_e2 => "Dimension ceiling `m <= eps^-2 e^{C_E2 p}` of the upper threshold.",
    c_l => "Exponent constant of the sparsity arm of the dimension lower bound.",
    c_t => "Exponent constant of the delta arm of the dimension lower bound.",
    c_2 => "Applicability constant `C_2 q^3 m v^4 >= s^2` of the moment upper bound.",
    c_floor => "Smallest sparsity covered by the dimension lower bound.",
    k_upper => "Leading constant of the aggregate moment upper bound.",
    k_lower => "Leading constant of the aggregate moment lower bound.",
    k_row_upper => "Leading constant of the single-row moment upper bound.",
    k_row_lower => "Leading constant of the single-row moment lower bound.",
}

impl BoundConstants {
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(SjlError::InvalidParams(format!(
                "constant {name} must be positive and finite, got {value}"
            )));
        }
        let names = Self::NAMES.join(", ");
        let slot = self.slot(name).ok_or_else(|| {
            SjlError::InvalidParams(format!("unknown constant '{name}'; valid names: {names}"))
        })?;
        *slot = value;
        Ok(())
    }

    /// Applies overrides of the form `name=value,name=value`.
    pub fn apply_overrides(&mut self, spec: &str) -> Result<()> {
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, value) = item.split_once('=').ok_or_else(|| {
                SjlError::InvalidParams(format!("constant override '{item}' is not name=value"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                SjlError::InvalidParams(format!("constant {name}: '{value}' is not a number"))
            })?;
            self.set(name.trim(), value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.iter() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SjlError::InvalidParams(format!(
                    "constant {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}
