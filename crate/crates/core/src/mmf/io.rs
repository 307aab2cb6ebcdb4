//! Plain-text factorization format.
//!
//! ```text
//! MMF n k L
//! RESIDUAL r
//! LEVEL 1 retired_index      (then, for each of the L levels:)
//! i_1 … i_k                  rotated indices, in core order
//! o_11 … o_1k                k rows of the k×k core
//! …
//! o_k1 … o_kk
//! n n nnz                    H in the sparse matrix format
//! i j v
//! …
//! ```
//!
//! Levels appear in order 1..L. `#` comment lines and blank lines are
//! ignored. Reals use the shortest round-trip notation, so a saved
//! factorization reloads bit-for-bit (descent traces are not stored).

use std::io::{self, Write};

use super::{CoreDiagonal, GivensRotation, MmfError, MmfFactorization, NestedIndexSets};
use crate::sparse::io::{content_lines, format_value, read_triplets, write_sparse};
use crate::sparse::{coo_from_dense, DenseMatrix, SparseCoo, SymmetricMatrix};

pub fn write_factorization<W: Write>(out: &mut W, f: &MmfFactorization) -> io::Result<()> {
    writeln!(out, "MMF {} {} {}", f.n, f.order_k, f.levels())?;
    writeln!(out, "RESIDUAL {}", format_value(f.residual))?;
    for (rot, &retired) in f.rotations.iter().zip(f.index_sets.retired()) {
        writeln!(out, "LEVEL {} {retired}", rot.level())?;
        let idx: Vec<String> = rot.index_set().iter().map(usize::to_string).collect();
        writeln!(out, "{}", idx.join(" "))?;
        for r in 0..rot.order() {
            let row: Vec<String> = rot.core().row(r).iter().map(|&v| format_value(v)).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    let h = coo_from_dense(f.h.to_symmetric().as_dense(), 0.0);
    write_sparse(out, &h)
}

pub fn factorization_to_string(f: &MmfFactorization) -> String {
    let mut buf = Vec::new();
    write_factorization(&mut buf, f).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

fn perr(line: usize, message: impl Into<String>) -> MmfError {
    MmfError::Parse {
        line,
        message: message.into(),
    }
}

fn fields<T: std::str::FromStr>(ln: usize, line: &str, expected: usize) -> Result<Vec<T>, MmfError>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| perr(ln, format!("`{line}`: {e}")))?;
    if v.len() != expected {
        return Err(perr(ln, format!("expected {expected} fields, got {}", v.len())));
    }
    Ok(v)
}

fn keyword<'a>(ln: usize, line: &'a str, key: &str) -> Result<&'a str, MmfError> {
    line.strip_prefix(key)
        .filter(|rest| rest.starts_with(char::is_whitespace))
        .ok_or_else(|| perr(ln, format!("expected `{key} …`, got `{line}`")))
}

/// Parses and validates a factorization: every core must lie in SO(k), the
/// index sets must nest, and `H` must be core-diagonal on the final set.
pub fn parse_factorization(text: &str) -> Result<MmfFactorization, MmfError> {
    let mut lines = content_lines(text);
    let mut next = |what: &str| lines.next().ok_or_else(|| perr(0, format!("unexpected end of input, expected {what}")));

    let (ln, header) = next("header")?;
    let [n, k, levels] = fields::<usize>(ln, keyword(ln, header, "MMF")?, 3)?[..] else {
        unreachable!()
    };
    let (ln, res) = next("RESIDUAL")?;
    let residual = fields::<f64>(ln, keyword(ln, res, "RESIDUAL")?, 1)?[0];
    if !(residual.is_finite() && residual >= 0.0) {
        return Err(perr(ln, format!("residual {residual} must be finite and nonnegative")));
    }

    let mut rotations = Vec::with_capacity(levels);
    let mut retired = Vec::with_capacity(levels);
    let mut active = vec![true; n];
    for expected_level in 1..=levels {
        let (ln, l) = next("LEVEL")?;
        let [level, wavelet] = fields::<usize>(ln, keyword(ln, l, "LEVEL")?, 2)?[..] else {
            unreachable!()
        };
        if level != expected_level {
            return Err(perr(ln, format!("expected level {expected_level}, found {level}")));
        }
        let (ln, idx_line) = next("rotation indices")?;
        let idx = fields::<usize>(ln, idx_line, k)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n || !active[i]) {
            return Err(perr(ln, format!("index {bad} is not in the active set of level {level}")));
        }
        if !idx.contains(&wavelet) {
            return Err(perr(ln, format!("retired index {wavelet} is not among the rotated indices")));
        }
        let mut core = Vec::with_capacity(k * k);
        for _ in 0..k {
            let (ln, row) = next("core row")?;
            core.extend(fields::<f64>(ln, row, k)?);
        }
        let core = DenseMatrix::from_vec(k, k, core)?;
        rotations.push(GivensRotation::new(level, idx, core)?);
        active[wavelet] = false;
        retired.push(wavelet);
    }
    let (rows, cols, triplets) = read_triplets(&mut lines)?;
    if let Some((ln, l)) = lines.next() {
        return Err(perr(ln, format!("unexpected trailing content `{l}`")));
    }
    if (rows, cols) != (n, n) {
        return Err(MmfError::InvalidFactorization(format!(
            "H is {rows}x{cols}, expected {n}x{n}"
        )));
    }
    let h = SparseCoo::from_triplets(n, n, triplets)?;
    if let Some(&(i, j, _)) = h.entries().iter().find(|&&(i, j, _)| i != j && !(active[i] && active[j])) {
        return Err(MmfError::InvalidFactorization(format!(
            "H has an entry at ({i}, {j}) outside the core-diagonal pattern"
        )));
    }
    let h = SymmetricMatrix::new(h.to_dense())?;
    let index_sets = NestedIndexSets::new(n, retired)?;
    let core = index_sets.final_set();
    Ok(MmfFactorization {
        n,
        order_k: k,
        rotations,
        h: CoreDiagonal::from_matrix(&h, &core),
        index_sets,
        residual,
        trace: Vec::new(),
    })
}
