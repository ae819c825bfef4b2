//! Text checkpoints: a header with the architecture, then one value per line
//! in flat (row-major) parameter order.
//!
//! ```text
//! prefixlab-critic 1
//! scalar f64
//! vocab 29 rows 2 width 32 hidden 64 categories 10 value_scale 100
//! values 6594
//! 0.0123…
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{CriticArch, CriticParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "prefixlab-critic";
const VERSION: u32 = 1;

fn scalar_name<F: Scalar>() -> &'static str {
    if std::mem::size_of::<F>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn write_checkpoint<F: Scalar, W: Write>(params: &CriticParams<F>, mut out: W) -> Result<()> {
    let a = params.arch();
    let mut text = String::new();
    let _ = writeln!(text, "{MAGIC} {VERSION}");
    let _ = writeln!(text, "scalar {}", scalar_name::<F>());
    let _ = writeln!(
        text,
        "vocab {} rows {} width {} hidden {} categories {} value_scale {}",
        a.vocab, a.rows, a.width, a.hidden, a.n_categories, a.value_scale
    );
    let _ = writeln!(text, "values {}", params.as_slice().len());
    for v in params.as_slice() {
        // shortest representation that round-trips
        let _ = writeln!(text, "{v}");
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn corrupt(line: usize, reason: impl Into<String>) -> Error {
    Error::CorruptRecord {
        line,
        reason: reason.into(),
    }
}

fn field<T: FromStr>(tokens: &[&str], name: &str, line: usize) -> Result<T> {
    let pos = tokens
        .iter()
        .position(|t| *t == name)
        .ok_or_else(|| corrupt(line, format!("missing `{name}`")))?;
    tokens
        .get(pos + 1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(line, format!("bad value for `{name}`")))
}

pub fn read_checkpoint<F: Scalar, R: Read>(input: R) -> Result<CriticParams<F>> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let mut next = |n: usize| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| corrupt(n, "unexpected end of file"))?
            .map_err(Error::from)
    };
    let head = next(1)?;
    let mut it = head.split_whitespace();
    if it.next() != Some(MAGIC) {
        return Err(corrupt(1, "not a critic checkpoint"));
    }
    let version: u32 = it
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(1, "missing version"))?;
    if version != VERSION {
        return Err(Error::FormatVersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let scalar = next(2)?;
    if scalar.trim() != format!("scalar {}", scalar_name::<F>()) {
        return Err(corrupt(2, format!("expected scalar {}", scalar_name::<F>())));
    }
    let shape = next(3)?;
    let tokens: Vec<&str> = shape.split_whitespace().collect();
    let arch = CriticArch {
        vocab: field(&tokens, "vocab", 3)?,
        rows: field(&tokens, "rows", 3)?,
        width: field(&tokens, "width", 3)?,
        hidden: field(&tokens, "hidden", 3)?,
        n_categories: field(&tokens, "categories", 3)?,
        value_scale: field(&tokens, "value_scale", 3)?,
    };
    let count_line = next(4)?;
    let count: usize = field(&count_line.split_whitespace().collect::<Vec<_>>(), "values", 4)?;
    if count != arch.n_params() {
        return Err(corrupt(4, format!("expected {} values, header says {count}", arch.n_params())));
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let line = next(5 + i)?;
        let v = F::from_str_radix(line.trim(), 10)
            .map_err(|_| corrupt(5 + i, format!("bad number `{line}`")))?;
        data.push(v);
    }
    CriticParams::from_flat(arch, data)
}

pub fn save_checkpoint<F: Scalar>(params: &CriticParams<F>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(params, std::io::BufWriter::new(file))
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<CriticParams<F>> {
    read_checkpoint(std::fs::File::open(path)?)
}
