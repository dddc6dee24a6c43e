//! Admittance tables: CSV and JSON emission, CSV parsing.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::CliError;

pub const HEADER: [&str; 18] = [
    "freq_hz", "y11_re", "y11_im", "y12_re", "y12_im", "y21_re", "y21_im", "y22_re", "y22_im", "y11_db", "y11_deg",
    "y12_db", "y12_deg", "y21_db", "y21_deg", "y22_db", "y22_deg", "flagged",
];

/// One frequency row, `[y11, y12, y21, y22]` in load convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub freq_hz: f64,
    pub y: [Complex64; 4],
    pub flagged: bool,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    freq_hz: f64,
    y11: [f64; 2],
    y12: [f64; 2],
    y21: [f64; 2],
    y22: [f64; 2],
    flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

/// Twelve significant digits.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.11e}")
    }
}

pub fn db(z: Complex64) -> f64 {
    20.0 * z.norm().log10()
}

pub fn deg(z: Complex64) -> f64 {
    z.arg().to_degrees()
}

pub fn write_csv<W: Write>(mut w: W, rows: &[Row]) -> std::io::Result<()> {
    writeln!(w, "{}", HEADER.join(","))?;
    for r in rows {
        let mut f = vec![num(r.freq_hz)];
        for z in r.y {
            f.push(num(z.re));
            f.push(num(z.im));
        }
        for z in r.y {
            f.push(num(db(z)));
            f.push(num(deg(z)));
        }
        f.push(if r.flagged { "1" } else { "0" }.into());
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

pub fn write_json<W: Write>(w: W, rows: &[Row], notes: &[Option<String>]) -> serde_json::Result<()> {
    let out: Vec<JsonRow> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| JsonRow {
            freq_hz: r.freq_hz,
            y11: [r.y[0].re, r.y[0].im],
            y12: [r.y[1].re, r.y[1].im],
            y21: [r.y[2].re, r.y[2].im],
            y22: [r.y[3].re, r.y[3].im],
            flagged: r.flagged,
            note: notes.get(i).and_then(|n| n.as_deref()),
        })
        .collect();
    serde_json::to_writer_pretty(w, &out)
}

pub fn parse_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty table")?.split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or(format!("missing column {name}"))
    };
    let idx = [
        col("freq_hz")?,
        col("y11_re")?,
        col("y11_im")?,
        col("y12_re")?,
        col("y12_im")?,
        col("y21_re")?,
        col("y21_im")?,
        col("y22_re")?,
        col("y22_im")?,
        col("flagged")?,
    ];
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| -> Result<f64, String> {
            let c = cells.get(idx[i]).ok_or(format!("row {}: too few columns", n + 2))?;
            c.parse::<f64>().map_err(|_| format!("row {}: bad number '{c}'", n + 2))
        };
        let y = [
            Complex64::new(get(1)?, get(2)?),
            Complex64::new(get(3)?, get(4)?),
            Complex64::new(get(5)?, get(6)?),
            Complex64::new(get(7)?, get(8)?),
        ];
        let flagged = match cells.get(idx[9]).copied() {
            Some("0") => false,
            Some("1") => true,
            other => return Err(format!("row {}: flagged must be 0 or 1, got {other:?}", n + 2)),
        };
        rows.push(Row {
            freq_hz: get(0)?,
            y,
            flagged,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
