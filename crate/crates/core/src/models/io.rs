//! Text serialization of [`MlpParams`].
//!
//! Layout, one item per line:
//!
//! ```text
//! mlp v1
//! activation <relu|tanh>
//! dims <in> <hidden> <out>
//! w1 <hidden·in values, row-major>
//! b1 <hidden values>
//! w2 <out·hidden values, row-major>
//! b2 <out values>
//! ```
//!
//! Values are space separated and printed as shortest round-trip decimals,
//! so a write/read cycle is bit-exact for `f64`.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::models::mlp::{Activation, MlpParams};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

const HEADER: &str = "mlp v1";

fn join<T: Scalar>(tag: &str, vals: &[T]) -> String {
    let mut s = String::from(tag);
    for v in vals {
        s.push(' ');
        s.push_str(&format!("{:?}", v.as_f64()));
    }
    s
}

/// Appends the textual form of `p` to `out`.
pub fn write_mlp<T: Scalar>(p: &MlpParams<T>, out: &mut String) {
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("activation {}\n", p.activation().name()));
    out.push_str(&format!("dims {} {} {}\n", p.input_dim(), p.hidden_dim(), p.output_dim()));
    for (tag, vals) in [
        ("w1", p.w1().as_slice()),
        ("b1", p.b1()),
        ("w2", p.w2().as_slice()),
        ("b2", p.b2()),
    ] {
        out.push_str(&join(tag, vals));
        out.push('\n');
    }
}

/// Line source that tracks line numbers for diagnostics.
pub(crate) struct Lines<'a> {
    inner: Box<dyn Iterator<Item = std::io::Result<String>> + 'a>,
    line: usize,
    origin: String,
}

impl<'a> Lines<'a> {
    pub(crate) fn new<R: BufRead + 'a>(r: R, origin: impl Into<String>) -> Self {
        Self { inner: Box::new(r.lines()), line: 0, origin: origin.into() }
    }

    pub(crate) fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::parse(&self.origin, format!("line {}: {msg}", self.line))
    }

    pub(crate) fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(self.err(e)),
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Reads a line `<tag> rest…` and returns the rest.
    pub(crate) fn tagged(&mut self, tag: &str) -> Result<String> {
        let l = self.next_line()?;
        let mut it = l.splitn(2, ' ');
        if it.next() != Some(tag) {
            return Err(self.err(format!("expected `{tag}`")));
        }
        Ok(it.next().unwrap_or("").trim().to_string())
    }

    fn values<T: Scalar>(&mut self, tag: &str, n: usize) -> Result<Vec<T>> {
        let rest = self.tagged(tag)?;
        let vals: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("`{tag}`: {e}")))?;
        if vals.len() != n {
            return Err(self.err(format!("`{tag}` has {} values, expected {n}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(self.err(format!("`{tag}` contains a non-finite value")));
        }
        Ok(vals.into_iter().map(T::lit).collect())
    }
}

/// Parses one MLP section produced by [`write_mlp`].
pub(crate) fn read_mlp_lines<T: Scalar>(lines: &mut Lines<'_>) -> Result<MlpParams<T>> {
    let head = lines.next_line()?;
    if head.trim() != HEADER {
        return Err(lines.err(format!("expected `{HEADER}`")));
    }
    let act = lines.tagged("activation")?;
    let act = Activation::from_name(&act).ok_or_else(|| lines.err(format!("unknown activation `{act}`")))?;
    let dims = lines.tagged("dims")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| lines.err(format!("dims: {e}")))?;
    let [i, h, o] = dims[..] else {
        return Err(lines.err("dims needs three integers"));
    };
    let w1 = lines.values::<T>("w1", h * i)?;
    let b1 = lines.values::<T>("b1", h)?;
    let w2 = lines.values::<T>("w2", o * h)?;
    let b2 = lines.values::<T>("b2", o)?;
    MlpParams::new(Matrix::new(h, i, w1)?, b1, Matrix::new(o, h, w2)?, b2, act)
}

/// Parses an MLP from its textual form.
pub fn read_mlp<T: Scalar>(text: &str) -> Result<MlpParams<T>> {
    read_mlp_lines(&mut Lines::new(text.as_bytes(), "<mlp>"))
}
