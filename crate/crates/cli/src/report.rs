//! Canonical report emission.
//!
//! JSON reports are compact with keys in sorted order and every float
//! rendered as `%.12e` (twelve fractional digits, sign-padded two-digit
//! exponent), so identical runs produce byte-identical files. CSV output
//! carries the sweep curve with the fixed column set.

use std::io::{self, Write};

use serde_json::ser::Formatter;
use serde_json::Value;

use steersim_core::C64;

pub const SCHEMA_TAG: &str = "steersim/report/v1";
pub const CSV_HEADER: &str = "t,overlap_re,overlap_im,overlap_abs,s_max";

/// The shipped JSON schema for reports.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// `%.12e` rendering with a signed two-digit exponent.
pub fn fmt_e12(value: f64) -> String {
    let s = format!("{:.12e}", value);
    let (mantissa, exponent) = s.split_once('e').expect("exponential form");
    let e: i32 = exponent.parse().expect("integer exponent");
    format!(
        "{mantissa}e{}{:02}",
        if e < 0 { "-" } else { "+" },
        e.abs()
    )
}

struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        writer.write_all(fmt_e12(value).as_bytes())
    }
}

/// Serializes a value as canonical JSON (sorted keys, fixed floats),
/// newline-terminated.
pub fn to_canonical_json(value: &Value) -> io::Result<Vec<u8>> {
    use serde::Serialize as _;
    let mut out = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut serializer).map_err(io::Error::other)?;
    out.push(b'\n');
    Ok(out)
}

/// JSON number from a float; rejects non-finite values.
pub fn num(value: f64) -> io::Result<Value> {
    serde_json::Number::from_f64(value)
        .map(Value::Number)
        .ok_or_else(|| io::Error::other(format!("non-finite numeric field: {value}")))
}

/// `[re, im]` pair.
pub fn complex_pair(value: C64) -> io::Result<Value> {
    Ok(Value::Array(vec![num(value.re)?, num(value.im)?]))
}

/// Row-major complex matrix as a flat list of `[re, im]` pairs.
pub fn complex_matrix(matrix: &nalgebra::DMatrix<C64>) -> io::Result<Value> {
    let mut rows = Vec::with_capacity(matrix.nrows() * matrix.ncols());
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            rows.push(complex_pair(matrix[(i, j)])?);
        }
    }
    Ok(Value::Array(rows))
}

/// One sweep row in canonical CSV form.
pub fn csv_row(t: f64, overlap: C64, s_max: f64) -> String {
    format!(
        "{},{},{},{},{}",
        fmt_e12(t),
        fmt_e12(overlap.re),
        fmt_e12(overlap.im),
        fmt_e12(overlap.norm()),
        fmt_e12(s_max)
    )
}
