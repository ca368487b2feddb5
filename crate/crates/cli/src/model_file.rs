//! Text model files: a versioned header, then `index value` per nonzero weight.

use std::fs;
use std::path::Path;

use salbfgs_core::{Error, ParameterVector, Result};

use crate::output::write_lines;

const MAGIC: &str = "salbfgs-model";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub theta: ParameterVector,
    /// Hash bits the features were produced with, 0 for indexed input.
    pub bits: u8,
}

pub fn render(model: &ModelFile) -> Vec<String> {
    let mut lines = vec![format!("{MAGIC} {VERSION} dim={} bits={}", model.theta.dim(), model.bits)];
    for (i, &w) in model.theta.iter().enumerate() {
        if w != 0.0 {
            lines.push(format!("{i} {w}"));
        }
    }
    lines
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_lines(path, &render(model))
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty model file"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let (dim, bits) = match fields.as_slice() {
        [MAGIC, VERSION, dim, bits] => (
            dim.strip_prefix("dim=").and_then(|d| d.parse::<usize>().ok()),
            bits.strip_prefix("bits=").and_then(|b| b.parse::<u8>().ok()),
        ),
        _ => (None, None),
    };
    let (Some(dim), Some(bits)) = (dim, bits) else {
        return Err(bad(1, format!("unrecognized model header {header:?}")));
    };
    let mut theta = vec![0.0; dim];
    let mut prev: Option<usize> = None;
    for (n, line) in lines.enumerate() {
        let n = n + 2;
        let (i, w) = line
            .split_once(' ')
            .ok_or_else(|| bad(n, format!("malformed weight line {line:?}")))?;
        let i: usize = i.parse().map_err(|_| bad(n, format!("bad index {i:?}")))?;
        let w: f64 = w.parse().map_err(|_| bad(n, format!("bad weight {w:?}")))?;
        if i >= dim {
            return Err(bad(n, format!("index {i} outside dimension {dim}")));
        }
        if prev.is_some_and(|p| i <= p) {
            return Err(bad(n, "weight indices must be strictly increasing"));
        }
        if !w.is_finite() {
            return Err(bad(n, "weight must be finite"));
        }
        theta[i] = w;
        prev = Some(i);
    }
    Ok(ModelFile {
        theta: ParameterVector::new(theta)?,
        bits,
    })
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_model(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
