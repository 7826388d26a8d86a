//! Text format for sampled matrices: a header line
//! `#sjl n=<n> m=<m> s=<s> flavor=<f> seed=<hex>` followed by one line per
//! column listing its nonzeros as `row:sign` pairs (0-based rows, sign 1 or -1).

use std::fmt::Write as _;

use sjl_core::{Entry, SjlError, SjlMatrix, SjlParams};

pub fn write_matrix(a: &SjlMatrix, seed: u64) -> String {
    let p = a.params();
    let mut out = format!(
        "#sjl n={} m={} s={} flavor={} seed={:#018x}\n",
        p.n(),
        p.m(),
        p.s(),
        p.flavor(),
        seed
    );
    for col in a.columns() {
        for (k, e) in col.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let sign = if e.negative { -1 } else { 1 };
            write!(out, "{}:{}", e.row, sign).expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

fn bad(msg: impl Into<String>) -> SjlError {
    SjlError::Parse(msg.into())
}

/// Parses a matrix file, returning the matrix and its recorded seed.
pub fn read_matrix(text: &str) -> Result<(SjlMatrix, u64), SjlError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty matrix file"))?;
    let fields = header
        .strip_prefix("#sjl")
        .ok_or_else(|| bad("missing '#sjl' header"))?;
    let (mut n, mut m, mut s, mut flavor, mut seed) = (None, None, None, None, None);
    for field in fields.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("header field '{field}' is not key=value")))?;
        let num = || value.parse::<usize>().map_err(|_| bad(format!("bad {key} '{value}'")));
        match key {
            "n" => n = Some(num()?),
            "m" => m = Some(num()?),
            "s" => s = Some(num()?),
            "flavor" => flavor = Some(value.parse()?),
            "seed" => {
                let hex = value.trim_start_matches("0x");
                seed = Some(
                    u64::from_str_radix(hex, 16).map_err(|_| bad(format!("bad seed '{value}'")))?,
                )
            }
            _ => return Err(bad(format!("unknown header field '{key}'"))),
        }
    }
    let missing = |k: &str| bad(format!("header lacks {k}"));
    let params = SjlParams::new(
        n.ok_or_else(|| missing("n"))?,
        m.ok_or_else(|| missing("m"))?,
        s.ok_or_else(|| missing("s"))?,
        flavor.ok_or_else(|| missing("flavor"))?,
    )?;
    let mut columns = Vec::with_capacity(params.n());
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let col = line
            .split(',')
            .map(|item| {
                let (row, sign) = item
                    .split_once(':')
                    .ok_or_else(|| bad(format!("column {i}: entry '{item}' is not row:sign")))?;
                let row: u32 = row
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("column {i}: bad row '{row}'")))?;
                let negative = match sign.trim() {
                    "1" | "+1" => false,
                    "-1" => true,
                    other => return Err(bad(format!("column {i}: bad sign '{other}'"))),
                };
                Ok(Entry { row, negative })
            })
            .collect::<Result<Vec<_>, _>>()?;
        columns.push(col);
    }
    let a = SjlMatrix::from_columns(params, columns)?;
    Ok((a, seed.ok_or_else(|| missing("seed"))?))
}
