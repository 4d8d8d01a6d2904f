//! Plain-text serialization of [`Network`]s (format `homobound-net v1`).
//!
//! The file is line-oriented: a magic line, the layer count, then one block
//! per layer:
//!
//! ```text
//! homobound-net v1
//! layers <n>
//! layer <index> <relu|linear> <out> <in>
//! <in floats>      (out lines, row-major weight matrix)
//! bias <out floats>
//! ```
//!
//! The final layer must be `linear`. Floats are written with 17 significant
//! digits, so parsing reproduces the original values bitwise. A worked
//! two-layer example lives in the repository README.

use super::{Layer, Network, VerifierError};
use std::fmt::Write as _;
use std::path::Path;

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_row(row: &[f64]) -> String {
    let cells: Vec<String> = row.iter().map(|&v| fmt_f(v)).collect();
    cells.join(" ")
}

/// Renders a network in the v1 text format.
pub fn serialize_network(net: &Network) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "homobound-net v1").unwrap();
    writeln!(w, "layers {}", net.layers().len()).unwrap();
    for (idx, layer) in net.layers().iter().enumerate() {
        let kind = if layer.relu() { "relu" } else { "linear" };
        writeln!(w, "layer {idx} {kind} {} {}", layer.out_dim(), layer.in_dim()).unwrap();
        for row in layer.weights() {
            writeln!(w, "{}", fmt_row(row)).unwrap();
        }
        writeln!(w, "bias {}", fmt_row(layer.bias())).unwrap();
    }
    out
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    origin: &'a str,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> VerifierError {
        VerifierError::Schema {
            path: self.origin.to_string(),
            msg: format!("line {}: {}", self.lineno, msg.into()),
        }
    }

    fn next_line(&mut self) -> Result<&'a str, VerifierError> {
        for line in self.iter.by_ref() {
            self.lineno += 1;
            if !line.trim().is_empty() {
                return Ok(line.trim());
            }
        }
        self.lineno += 1;
        Err(VerifierError::Schema {
            path: self.origin.to_string(),
            msg: "unexpected end of file".into(),
        })
    }

    /// Reads a line and strips the expected leading keyword.
    fn keyed(&mut self, key: &str) -> Result<&'a str, VerifierError> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .filter(|rest| rest.is_empty() || rest.starts_with(' '))
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected {key:?}, found {line:?}")))
    }

    fn floats(&self, rest: &str, n: usize) -> Result<Vec<f64>, VerifierError> {
        let vals: Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| self.err(format!("bad float: {e}")))?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn uints(&self, rest: &str, n: usize) -> Result<Vec<u64>, VerifierError> {
        let vals: Result<Vec<u64>, _> = rest.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| self.err(format!("bad integer: {e}")))?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn keyed_floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>, VerifierError> {
        let rest = self.keyed(key)?;
        self.floats(rest, n)
    }

    fn keyed_uints(&mut self, key: &str, n: usize) -> Result<Vec<u64>, VerifierError> {
        let rest = self.keyed(key)?;
        self.uints(rest, n)
    }
}

/// Parses the v1 text format. `origin` names the source in error messages.
pub fn parse_network(text: &str, origin: &str) -> Result<Network, VerifierError> {
    let mut lines = Lines { iter: text.lines(), origin, lineno: 0 };

    let magic = lines.next_line()?;
    if magic != "homobound-net v1" {
        return Err(lines.err(format!("unrecognized header {magic:?}")));
    }
    let count = lines.keyed_uints("layers", 1)?[0] as usize;
    if count == 0 {
        return Err(lines.err("a network needs at least one layer"));
    }

    let mut layers = Vec::with_capacity(count);
    for want_idx in 0..count {
        let head = lines.keyed("layer")?;
        let mut parts = head.split_whitespace();
        let idx: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| lines.err("layer header needs an index"))?;
        if idx != want_idx {
            return Err(lines.err(format!("layer index {idx}, expected {want_idx}")));
        }
        let relu = match parts.next() {
            Some("relu") => true,
            Some("linear") => false,
            other => return Err(lines.err(format!("unknown activation {other:?}"))),
        };
        let dims: Vec<usize> = parts
            .map(|t| t.parse().map_err(|e| lines.err(format!("bad integer: {e}"))))
            .collect::<Result<_, _>>()?;
        let [out_dim, in_dim] = dims[..] else {
            return Err(lines.err("layer header needs <out> <in> dimensions"));
        };
        if out_dim == 0 || in_dim == 0 {
            return Err(lines.err("layer dimensions must be positive"));
        }
        let weights = (0..out_dim)
            .map(|_| {
                let row = lines.next_line()?;
                lines.floats(row, in_dim)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bias = lines.keyed_floats("bias", out_dim)?;
        layers.push(Layer::new(want_idx, weights, bias, relu)?);
    }
    if lines.next_line().is_ok() {
        return Err(lines.err("trailing content after the last layer"));
    }
    Network::new(layers)
}

/// Reads and parses a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network, VerifierError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| VerifierError::Io { path: path.display().to_string(), source })?;
    parse_network(&text, &path.display().to_string())
}

/// Writes a network in the v1 text format.
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<(), VerifierError> {
    let path = path.as_ref();
    std::fs::write(path, serialize_network(net))
        .map_err(|source| VerifierError::Io { path: path.display().to_string(), source })
}
