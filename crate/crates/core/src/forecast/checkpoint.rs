//! Plain-text checkpoints.
//!
//! ```text
//! CHECKPOINT <nodes> <hidden> <layers> <history_len> <horizon>
//! PARAM <name> <d1> [<d2> ...]
//! <values, row-major, whitespace separated>
//! ...
//! ```
//!
//! One `PARAM` block per tensor, in the order of [`ModelParams::tensors`].
//! Values use shortest round-trip formatting, so a save/load cycle is exact.
//! Blank lines and lines starting with `#` are ignored.

use super::model::{ModelConfig, ModelParams, Seq2SeqModel};
use super::{BasisOperator, ForecastError};
use crate::sparse::io::{content_lines, format_value};
use std::io::{self, Write};
use std::sync::Arc;

pub fn write_checkpoint<W: Write>(out: &mut W, model: &Seq2SeqModel) -> io::Result<()> {
    let c = model.config();
    writeln!(
        out,
        "CHECKPOINT {} {} {} {} {}",
        c.nodes, c.hidden, c.layers, c.history_len, c.horizon
    )?;
    for (name, dims, values) in model.params().tensors() {
        let dims: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "PARAM {name} {}", dims.join(" "))?;
        let vals: Vec<String> = values.iter().map(|&v| format_value(v)).collect();
        writeln!(out, "{}", vals.join(" "))?;
    }
    Ok(())
}

pub fn checkpoint_to_string(model: &Seq2SeqModel) -> String {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn err(line: usize, message: impl Into<String>) -> ForecastError {
    ForecastError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads the model configuration from the header without parsing values.
pub fn checkpoint_config(text: &str) -> Result<ModelConfig, ForecastError> {
    let (line, header) = content_lines(text).next().ok_or_else(|| err(0, "empty checkpoint"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("CHECKPOINT") {
        return Err(err(line, "expected CHECKPOINT header"));
    }
    let nums: Vec<usize> = parts
        .map(|p| p.parse().map_err(|_| err(line, format!("bad count {p:?}"))))
        .collect::<Result<_, _>>()?;
    if nums.len() != 5 {
        return Err(err(line, "header needs nodes, hidden, layers, history_len and horizon"));
    }
    Ok(ModelConfig {
        nodes: nums[0],
        hidden: nums[1],
        layers: nums[2],
        history_len: nums[3],
        horizon: nums[4],
    })
}

pub fn parse_checkpoint(text: &str, basis: Arc<BasisOperator>) -> Result<Seq2SeqModel, ForecastError> {
    let config = checkpoint_config(text)?;
    if config.layers == 0 || config.hidden == 0 {
        return Err(err(1, "layers and hidden size must be positive"));
    }
    let mut params = ModelParams::zeros(&config);
    let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, d, _)| (n, d)).collect();
    let mut lines = content_lines(text).skip(1);
    for (slot, (name, dims)) in params.tensors_mut().into_iter().zip(expected) {
        let (line, head) = lines.next().ok_or_else(|| err(0, format!("missing tensor {name}")))?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("PARAM") {
            return Err(err(line, "expected PARAM line"));
        }
        if parts.next() != Some(name.as_str()) {
            return Err(err(line, format!("expected tensor {name}")));
        }
        let got: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| err(line, format!("bad dimension {p:?}"))))
            .collect::<Result<_, _>>()?;
        if got != dims {
            return Err(err(line, format!("tensor {name} has shape {got:?}, expected {dims:?}")));
        }
        let (vline, body) = lines.next().ok_or_else(|| err(line, format!("missing values for {name}")))?;
        let values: Vec<f64> = body
            .split_whitespace()
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(err(vline, format!("bad value {v:?}"))),
            })
            .collect::<Result<_, _>>()?;
        if values.len() != slot.len() {
            return Err(err(vline, format!("{name} needs {} values, found {}", slot.len(), values.len())));
        }
        *slot = values;
    }
    if let Some((line, _)) = lines.next() {
        return Err(err(line, "trailing content"));
    }
    Seq2SeqModel::from_params(basis, config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmf::{factorize, FactorizeConfig};
    use crate::sparse::{DenseMatrix, SymmetricMatrix};
    use crate::wavelet::extract_basis;

    fn model() -> (Seq2SeqModel, Arc<BasisOperator>) {
        let a = SymmetricMatrix::symmetrized(&DenseMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64)).unwrap();
        let w = extract_basis(&factorize(&a, &FactorizeConfig::new(2, 2)).unwrap(), 0.0).unwrap();
        let basis = Arc::new(BasisOperator::sparse(&w));
        let cfg = ModelConfig {
            nodes: 5,
            hidden: 2,
            layers: 2,
            history_len: 4,
            horizon: 3,
        };
        (Seq2SeqModel::new(basis.clone(), cfg, 21).unwrap(), basis)
    }

    #[test]
    fn round_trip_is_exact() {
        let (m, basis) = model();
        let text = checkpoint_to_string(&m);
        assert!(text.starts_with("CHECKPOINT 5 2 2 4 3\nPARAM encoder.0.reset.filter 5 3 2\n"));
        let back = parse_checkpoint(&text, basis).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(checkpoint_to_string(&back), text);
    }

    #[test]
    fn rejects_damaged_files() {
        let (m, basis) = model();
        let text = checkpoint_to_string(&m);
        let renamed = text.replacen("encoder.0.update.filter", "encoder.0.gate.filter", 1);
        assert!(parse_checkpoint(&renamed, basis.clone()).is_err());
        let reshaped = text.replacen("PARAM projection.weight 2", "PARAM projection.weight 3", 1);
        assert!(parse_checkpoint(&reshaped, basis.clone()).is_err());
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(parse_checkpoint(&truncated, basis.clone()).is_err());
        let nan = text.replacen("PARAM projection.bias 1\n", "PARAM projection.bias 1\nNaN\n#", 1);
        assert!(parse_checkpoint(&nan, basis.clone()).is_err());
        assert!(parse_checkpoint(&format!("{text}1\n"), basis.clone()).is_err());
        assert!(parse_checkpoint("", basis).is_err());
    }
}
