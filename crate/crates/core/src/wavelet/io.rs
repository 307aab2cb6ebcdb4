//! Plain-text basis export.
//!
//! ```text
//! WAVELETS n L
//! FATHERS c_1 … c_{n-L}       father column indices
//! MOTHERS c_1 … c_L           mother column indices, by level
//! COORDINATES r_0 … r_{n-1}   source coordinate of every column
//! n n nnz                     W in the sparse matrix format
//! i j v
//! …
//! ```
//!
//! A list line with no entries is just its keyword.

use std::io::{self, Write};

use super::{WaveletBasis, WaveletError};
use crate::sparse::io::{content_lines, read_triplets, write_sparse};
use crate::sparse::SparseCoo;

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| format!(" {x}")).collect()
}

pub fn write_basis<W: Write>(out: &mut W, w: &WaveletBasis) -> io::Result<()> {
    writeln!(out, "WAVELETS {} {}", w.dim(), w.levels())?;
    writeln!(out, "FATHERS{}", join(w.father_columns()))?;
    writeln!(out, "MOTHERS{}", join(w.mother_columns()))?;
    writeln!(out, "COORDINATES{}", join(w.coordinates()))?;
    write_sparse(out, w.basis())
}

pub fn basis_to_string(w: &WaveletBasis) -> String {
    let mut buf = Vec::new();
    write_basis(&mut buf, w).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

fn perr(line: usize, message: impl Into<String>) -> WaveletError {
    WaveletError::Parse {
        line,
        message: message.into(),
    }
}

fn list(line: Option<(usize, &str)>, key: &str, len: usize) -> Result<Vec<usize>, WaveletError> {
    let (ln, line) = line.ok_or_else(|| perr(0, format!("missing {key} line")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(perr(ln, format!("expected {key}, got `{line}`")));
    }
    let xs: Vec<usize> = parts
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| perr(ln, format!("{key}: {e}")))?;
    if xs.len() != len {
        return Err(perr(ln, format!("{key} lists {} entries, expected {len}", xs.len())));
    }
    Ok(xs)
}

pub fn parse_basis(text: &str) -> Result<WaveletBasis, WaveletError> {
    let mut lines = content_lines(text);
    let (ln, header) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
    let nums: Vec<usize> = header
        .strip_prefix("WAVELETS")
        .ok_or_else(|| perr(ln, format!("expected `WAVELETS n L`, got `{header}`")))?
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| perr(ln, format!("header: {e}")))?;
    let [n, levels] = nums[..] else {
        return Err(perr(ln, "header needs `n L`"));
    };
    if levels > n {
        return Err(perr(ln, format!("{levels} levels exceed dimension {n}")));
    }
    let fathers = list(lines.next(), "FATHERS", n - levels)?;
    let mothers = list(lines.next(), "MOTHERS", levels)?;
    let coordinates = list(lines.next(), "COORDINATES", n)?;
    let (rows, cols, triplets) = read_triplets(&mut lines)?;
    if let Some((ln, l)) = lines.next() {
        return Err(perr(ln, format!("unexpected trailing content `{l}`")));
    }
    if (rows, cols) != (n, n) {
        return Err(WaveletError::InvalidBasis(format!("basis is {rows}x{cols}, expected {n}x{n}")));
    }
    let basis = SparseCoo::from_triplets(n, n, triplets)?;
    WaveletBasis::from_parts(basis, mothers, fathers, coordinates)
}
