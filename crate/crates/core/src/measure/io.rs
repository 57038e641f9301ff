//! CSV point clouds: a `# d=<int> n=<int>` header, then `x1,...,xd,w` rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::DiscreteMeasure;
use crate::error::{Error, Result};

pub fn load_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path)?;
    parse_measure(&text)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse {
            row: 1,
            msg: "expected header `# d=<int> n=<int>`".into(),
        })?;
    let mut d = None;
    let mut n = None;
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            row: 1,
            msg: format!("bad header token `{tok}`"),
        })?;
        let v: usize = v.parse().map_err(|_| Error::Parse {
            row: 1,
            msg: format!("bad header value `{tok}`"),
        })?;
        match k {
            "d" => d = Some(v),
            "n" => n = Some(v),
            _ => {}
        }
    }
    match (d, n) {
        (Some(d), Some(n)) => {
            if d != n + 1 || n == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "header declares d={d}, n={n}; need d = n+1 with n ≥ 1"
                )));
            }
            Ok((d, n))
        }
        _ => Err(Error::Parse {
            row: 1,
            msg: "header must declare both d and n".into(),
        }),
    }
}

/// Parses CSV text. Row numbers in errors count the header as row 1.
pub fn parse_measure(text: &str) -> Result<DiscreteMeasure> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Empty("measure file has no header".into()))?;
    let (d, n) = parse_header(header)?;

    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        if line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(Error::DimensionMismatch(format!(
                "row {row} has {} fields, expected {} (d={d} coordinates and a weight)",
                fields.len(),
                d + 1
            )));
        }
        let mut vals = Vec::with_capacity(d + 1);
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("`{f}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("`{f}` is not finite"),
                });
            }
            vals.push(v);
        }
        let w = vals[d];
        if !(w > 0.0) {
            return Err(Error::NonpositiveWeight(row));
        }
        coords.extend_from_slice(&vals[..d]);
        weights.push(w);
    }
    if weights.is_empty() {
        return Err(Error::Empty("measure file has no atoms".into()));
    }
    DiscreteMeasure::from_flat(n, coords, weights)
}

pub fn write_measure<W: Write>(mu: &DiscreteMeasure, mut out: W) -> Result<()> {
    writeln!(out, "# d={} n={}", mu.dim(), mu.n())?;
    for i in 0..mu.len() {
        for c in mu.point(i) {
            write!(out, "{c:e},")?;
        }
        writeln!(out, "{:e}", mu.weight(i))?;
    }
    Ok(())
}

pub fn save_measure(mu: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<()> {
    let f = fs::File::create(path)?;
    write_measure(mu, std::io::BufWriter::new(f))
}
