//! Plain-text feedback matrices and model checkpoints.
//!
//! Feedback block:
//!
//! ```text
//! feedback
//! neurons 400
//! errors 10
//! rank 10
//! sparsity 0.9
//! seed 1234
//! nonzeros 400
//! 0 7 -0.0123
//! ...
//! end
//! ```
//!
//! Each body line is `row col value`; absent entries are zero. Values are
//! written in the shortest form that parses back to the same double, so a
//! round trip is exact.
//!
//! Checkpoint:
//!
//! ```text
//! ssdfa-checkpoint 1
//! dims 784 400 10
//! activations tanh linear
//! bias false
//! seed 1
//! algorithm ssdfa
//! precision single
//! weights 0
//! <one line per row>
//! bias 0            (only with bias)
//! <one line>
//! ...
//! <feedback blocks, each preceded by `layer <l>`>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use ssdfa_core::network::Precision;
use ssdfa_core::{Activation, Algorithm, FeedbackMatrix, Layer, Matrix, Network, Scalar};

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "ssdfa-checkpoint 1";

pub fn write_feedback<T: Scalar>(fb: &FeedbackMatrix<T>, out: &mut String) {
    let _ = writeln!(out, "feedback");
    let _ = writeln!(out, "neurons {}", fb.neurons());
    let _ = writeln!(out, "errors {}", fb.errors());
    let _ = writeln!(out, "rank {}", fb.target_rank());
    let _ = writeln!(out, "sparsity {}", fb.sparsity());
    let _ = writeln!(out, "seed {}", fb.seed());
    let _ = writeln!(out, "nonzeros {}", fb.nnz());
    for i in 0..fb.neurons() {
        let (cols, vals) = fb.sparse().row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let _ = writeln!(out, "{i} {j} {}", v.as_f64());
        }
    }
    let _ = writeln!(out, "end");
}

pub fn feedback_to_string<T: Scalar>(fb: &FeedbackMatrix<T>) -> String {
    let mut s = String::new();
    write_feedback(fb, &mut s);
    s
}

pub fn save_feedback<T: Scalar>(fb: &FeedbackMatrix<T>, path: &Path) -> Result<()> {
    std::fs::write(path, feedback_to_string(fb)).map_err(|e| Error::io(path, e))
}

pub fn load_feedback(path: &Path) -> Result<FeedbackMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feedback(&text, path)
}

pub fn parse_feedback(text: &str, path: &Path) -> Result<FeedbackMatrix<f64>> {
    let mut lines = Lines::new(text, path);
    let fb = read_feedback(&mut lines)?;
    lines.expect_end()?;
    Ok(fb)
}

/// Line cursor that skips blank lines and `#` comments and tracks line
/// numbers for errors.
struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    path: &'a Path,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        Lines { inner: text.lines().enumerate().peekable(), path, last: 0 }
    }

    fn next(&mut self) -> Result<&'a str> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let line = raw.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok(line);
            }
        }
        Err(Error::parse(self.path, self.last, "unexpected end of file"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.last, msg)
    }

    /// `key value` line with the expected key.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.err(format!("expected '{key} ...', got '{line}'"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("invalid {key} '{v}'")))
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let line = self.next()?;
        if line == word {
            Ok(())
        } else {
            Err(self.err(format!("expected '{word}', got '{line}'")))
        }
    }

    fn numbers<T: std::str::FromStr>(&mut self, expected: usize) -> Result<Vec<T>> {
        let line = self.next()?;
        let vals: Vec<T> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("invalid number '{t}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.next() {
            Ok(line) => Err(self.err(format!("unexpected trailing content '{line}'"))),
            Err(_) => Ok(()),
        }
    }
}

fn read_feedback(lines: &mut Lines<'_>) -> Result<FeedbackMatrix<f64>> {
    lines.keyword("feedback")?;
    let n: usize = lines.parsed("neurons")?;
    let m: usize = lines.parsed("errors")?;
    let rank: usize = lines.parsed("rank")?;
    let sparsity: f64 = lines.parsed("sparsity")?;
    let seed: u64 = lines.parsed("seed")?;
    let nnz: usize = lines.parsed("nonzeros")?;
    let mut mat = Matrix::zeros(n, m);
    for _ in 0..nnz {
        let line = lines.next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let triplet = match parts.as_slice() {
            [i, j, v] => i.parse::<usize>().ok().zip(j.parse::<usize>().ok()).zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let ((i, j), v) = triplet.ok_or_else(|| lines.err(format!("expected 'row col value', got '{line}'")))?;
        if i >= n || j >= m {
            return Err(lines.err(format!("entry ({i}, {j}) outside {n}x{m}")));
        }
        mat[(i, j)] = v;
    }
    lines.keyword("end")?;
    Ok(FeedbackMatrix::from_dense(mat, rank, sparsity, seed))
}

/// Everything a checkpoint stores besides the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub precision: Precision,
}

pub fn checkpoint_to_string<T: Scalar>(net: &Network<T>, meta: &CheckpointMeta) -> String {
    let mut out = String::new();
    let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "dims {}", join(&mut net.dims().iter().map(|d| d.to_string())));
    let _ = writeln!(out, "activations {}", join(&mut net.layers().iter().map(|l| l.activation().name().to_string())));
    let _ = writeln!(out, "bias {}", net.has_bias());
    let _ = writeln!(out, "seed {}", meta.seed);
    let _ = writeln!(out, "algorithm {}", meta.algorithm);
    let _ = writeln!(out, "precision {}", meta.precision);
    for (l, layer) in net.layers().iter().enumerate() {
        let _ = writeln!(out, "weights {l}");
        let w = layer.weights();
        for r in 0..w.rows() {
            let _ = writeln!(out, "{}", join(&mut w.row(r).iter().map(|v| v.as_f64().to_string())));
        }
        if let Some(b) = layer.bias() {
            let _ = writeln!(out, "bias {l}");
            let _ = writeln!(out, "{}", join(&mut b.iter().map(|v| v.as_f64().to_string())));
        }
    }
    for (l, layer) in net.layers().iter().enumerate() {
        if let Some(fb) = layer.feedback() {
            let _ = writeln!(out, "layer {l}");
            write_feedback(fb, &mut out);
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(net, meta)).map_err(|e| Error::io(path, e))
}

/// Parses a checkpoint. Parameters are returned in double precision; casting
/// back to single precision is exact for checkpoints written from `f32`.
pub fn parse_checkpoint(text: &str, path: &Path) -> Result<(Network<f64>, CheckpointMeta)> {
    let mut lines = Lines::new(text, path);
    lines.keyword(CHECKPOINT_MAGIC)?;
    let dims: Vec<usize> = {
        let v = lines.field("dims")?;
        v.split_whitespace().map(|t| t.parse().map_err(|_| lines.err(format!("invalid dim '{t}'")))).collect::<Result<_>>()?
    };
    if dims.len() < 2 {
        return Err(lines.err("need at least two dims"));
    }
    let acts: Vec<Activation> = {
        let v = lines.field("activations")?;
        v.split_whitespace().map(|t| t.parse().map_err(|_| lines.err(format!("invalid activation '{t}'")))).collect::<Result<_>>()?
    };
    if acts.len() != dims.len() - 1 {
        return Err(lines.err(format!("{} activations for {} layers", acts.len(), dims.len() - 1)));
    }
    let bias: bool = lines.parsed("bias")?;
    let seed: u64 = lines.parsed("seed")?;
    let algorithm: Algorithm = lines.parsed("algorithm")?;
    let precision: Precision = lines.parsed("precision")?;

    let mut layers = Vec::with_capacity(acts.len());
    for (l, &act) in acts.iter().enumerate() {
        let (fanin, fanout) = (dims[l], dims[l + 1]);
        let idx: usize = lines.parsed("weights")?;
        if idx != l {
            return Err(lines.err(format!("expected weights {l}, got weights {idx}")));
        }
        let mut data = Vec::with_capacity(fanin * fanout);
        for _ in 0..fanout {
            data.extend(lines.numbers::<f64>(fanin)?);
        }
        let b = if bias {
            let idx: usize = lines.parsed("bias")?;
            if idx != l {
                return Err(lines.err(format!("expected bias {l}, got bias {idx}")));
            }
            Some(lines.numbers::<f64>(fanout)?)
        } else {
            None
        };
        layers.push(Layer::new(Matrix::new(fanout, fanin, data)?, b, act)?);
    }
    let mut net = Network::from_layers(layers)?;
    while let Ok(line) = lines.next() {
        let l: usize = line
            .strip_prefix("layer ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| lines.err(format!("expected 'layer <index>', got '{line}'")))?;
        let fb = read_feedback(&mut lines)?;
        net.set_feedback(l, fb)?;
    }
    Ok((net, CheckpointMeta { seed, algorithm, precision }))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network<f64>, CheckpointMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}
