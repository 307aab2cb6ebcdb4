//! Plain-text matrix format.
//!
//! ```text
//! # comment lines start with '#'
//! n m nnz
//! i j v        (nnz lines, 0-based indices)
//! ```
//!
//! Values are written with Rust's shortest round-trip scientific notation, so a
//! write/read cycle reproduces every `f64` bit-for-bit. Dense matrices use the
//! same layout with `nnz = n·m`, zeros included, in row-major order.

use std::io::{self, Write};

use super::{DenseMatrix, SparseCoo, SparseError};

pub fn format_value(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_sparse<W: Write>(out: &mut W, m: &SparseCoo) -> io::Result<()> {
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for &(r, c, v) in m.entries() {
        writeln!(out, "{r} {c} {}", format_value(v))?;
    }
    Ok(())
}

pub fn write_dense<W: Write>(out: &mut W, m: &DenseMatrix) -> io::Result<()> {
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.rows() * m.cols())?;
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            writeln!(out, "{i} {j} {}", format_value(v))?;
        }
    }
    Ok(())
}

pub fn sparse_to_string(m: &SparseCoo) -> String {
    let mut buf = Vec::new();
    write_sparse(&mut buf, m).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

pub fn dense_to_string(m: &DenseMatrix) -> String {
    let mut buf = Vec::new();
    write_dense(&mut buf, m).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

/// Non-comment, non-blank lines paired with their 1-based line numbers.
pub fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> SparseError {
    SparseError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads one matrix block (header plus `nnz` triplet lines) from `lines`.
pub fn read_triplets<'a, I>(lines: &mut I) -> Result<(usize, usize, Vec<(usize, usize, f64)>), SparseError>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "missing `n m nnz` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(ln, format!("bad header `{header}`: {e}")))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(ln, format!("header needs three integers, got `{header}`")));
    };
    let mut triplets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(ln, format!("expected {nnz} entries, found {}", triplets.len())))?;
        let mut it = line.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(parse_err(ln, format!("expected `i j v`, got `{line}`")));
        };
        let i: usize = i.parse().map_err(|e| parse_err(ln, format!("row index: {e}")))?;
        let j: usize = j.parse().map_err(|e| parse_err(ln, format!("col index: {e}")))?;
        let v: f64 = v.parse().map_err(|e| parse_err(ln, format!("value: {e}")))?;
        triplets.push((i, j, v));
    }
    Ok((rows, cols, triplets))
}

fn expect_end<'a>(mut lines: impl Iterator<Item = (usize, &'a str)>) -> Result<(), SparseError> {
    match lines.next() {
        Some((ln, l)) => Err(parse_err(ln, format!("unexpected trailing content `{l}`"))),
        None => Ok(()),
    }
}

pub fn parse_sparse(text: &str) -> Result<SparseCoo, SparseError> {
    let mut lines = content_lines(text);
    let (rows, cols, triplets) = read_triplets(&mut lines)?;
    expect_end(lines)?;
    SparseCoo::from_triplets(rows, cols, triplets)
}

pub fn parse_dense(text: &str) -> Result<DenseMatrix, SparseError> {
    // Going through SparseCoo rejects duplicates and out-of-range indices.
    Ok(parse_sparse(text)?.to_dense())
}
