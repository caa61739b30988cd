//! Text formats: `%.17g`-style numbers and Matrix Market coordinate files.

use std::fmt::Write as _;

use crate::coo::CooMatrix;

use super::CliError;

/// Format like C's `%.17g`, which round-trips every `f64`.
pub fn g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (16 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";
pub const LOWER_COMMENT: &str = "% lower triangle of symmetric matrix";

/// Matrix Market coordinate text with 1-based indices.
pub fn write_matrix_market(m: &CooMatrix, lower: bool) -> String {
    let mut out = String::new();
    out.push_str(MM_HEADER);
    out.push('\n');
    if lower {
        out.push_str(LOWER_COMMENT);
        out.push('\n');
    }
    let _ = writeln!(out, "{} {} {}", m.nrows, m.ncols, m.nnz());
    for (r, c, v) in m.iter() {
        let _ = writeln!(out, "{} {} {}", r + 1, c + 1, g17(v));
    }
    out
}

/// Parse a Matrix Market coordinate real file written by
/// [`write_matrix_market`].
pub fn read_matrix_market(text: &str) -> Result<CooMatrix, CliError> {
    let bad = |msg: &str| CliError::Input(format!("matrix market: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    if !header.starts_with("%%MatrixMarket matrix coordinate real") {
        return Err(bad("unsupported header"));
    }
    let mut lines = lines.filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let size: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing size line"))?
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| bad("invalid size line"))?;
    let [nrows, ncols, nnz] = size[..] else {
        return Err(bad("size line needs three integers"));
    };
    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let mut it = line.split_whitespace();
        let mut index = || -> Result<usize, CliError> {
            let i: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("invalid entry"))?;
            i.checked_sub(1).ok_or_else(|| bad("indices are 1-based"))
        };
        let (r, c) = (index()?, index()?);
        let v: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("invalid value"))?;
        triplets.push((r, c, v));
    }
    if triplets.len() != nnz {
        return Err(bad("entry count differs from size line"));
    }
    CooMatrix::from_triplets(nrows, ncols, triplets).map_err(|e| bad(&e.to_string()))
}
