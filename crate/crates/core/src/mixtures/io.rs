//! On-disk dataset layout.
//!
//! A dataset directory holds
//!
//! * `spec.json`: the [`MixtureSpec`] (`kind`, `d`, `m`, `n_samples`,
//!   `seed`, `knobs`);
//! * `latents.csv`, `observations.csv`: header `s1..sd` / `x1..xm`, one
//!   sample per line, shortest round-trip decimals;
//! * `artifacts.bin`: the mixing artifacts, little-endian:
//!
//! ```text
//! magic   8 bytes  "DICAART\x01"
//! kind    u8       0 linear, 1 distorted, 2 mlp
//! d, m    u32, u32
//! linear:     f64[m·d] A (row-major), f64[d·d] Σ
//! distorted:  as linear, then u32 count, f64[count] amplitudes
//! mlp:        u32 hidden, then per output k = 1..m:
//!             f64[d] input scale, f64[hidden·d] w1, f64[hidden] b1,
//!             f64[hidden] w2, f64 b2   (tanh activation)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mixtures::{Dataset, MixingArtifacts, MixtureSpec, MlpUnit};
use crate::models::{Activation, MlpParams};
use crate::numerics::Matrix;

const MAGIC: &[u8; 8] = b"DICAART\x01";

pub(crate) fn write_matrix_csv(path: &Path, prefix: &str, m: &Matrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    let header: Vec<String> = (1..=m.cols()).map(|i| format!("{prefix}{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.row_iter() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a numeric CSV with a header row. `expect_cols` checks the width.
pub(crate) fn read_matrix_csv(path: &Path, expect_cols: Option<usize>) -> Result<Matrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        })?;
    let cols = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.len();
    if let Some(c) = expect_cols {
        if c != cols {
            return Err(Error::parse(path, format!("header has {cols} columns, expected {c}")));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != cols {
            return Err(Error::parse(path, format!("line {}: {} fields, expected {cols}", i + 2, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: `{field}` is not a number", i + 2)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, format!("line {}: non-finite value", i + 2)));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, cols, data)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::parse(self.path, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::parse(self.path, "length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn encode_artifacts(art: &MixingArtifacts, d: usize, m: usize) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    match art {
        MixingArtifacts::Linear { a, sigma } => {
            w.u8(0);
            w.u32(d);
            w.u32(m);
            w.f64s(a.as_slice());
            w.f64s(sigma.as_slice());
        }
        MixingArtifacts::Distorted { a, sigma, amplitudes } => {
            w.u8(1);
            w.u32(d);
            w.u32(m);
            w.f64s(a.as_slice());
            w.f64s(sigma.as_slice());
            w.u32(amplitudes.len());
            w.f64s(amplitudes);
        }
        MixingArtifacts::Mlp { units } => {
            w.u8(2);
            w.u32(d);
            w.u32(m);
            w.u32(units.first().map_or(0, |u| u.net.hidden_dim()));
            for u in units {
                w.f64s(&u.input_scale);
                w.f64s(u.net.w1().as_slice());
                w.f64s(u.net.b1());
                w.f64s(u.net.w2().as_slice());
                w.f64s(u.net.b2());
            }
        }
    }
    w.0
}

fn decode_artifacts(buf: &[u8], path: &Path, d: usize, m: usize) -> Result<MixingArtifacts> {
    let mut r = Reader { buf, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(path, "bad magic"));
    }
    let kind = r.u8()?;
    let (fd, fm) = (r.u32()?, r.u32()?);
    if (fd, fm) != (d, m) {
        return Err(Error::parse(path, format!("artifact dims ({fd}, {fm}) disagree with spec ({d}, {m})")));
    }
    let art = match kind {
        0 | 1 => {
            let a = Matrix::new(m, d, r.f64s(m * d)?)?;
            let sigma = Matrix::new(d, d, r.f64s(d * d)?)?;
            if kind == 0 {
                MixingArtifacts::Linear { a, sigma }
            } else {
                let n = r.u32()?;
                if n != 1 && n != m {
                    return Err(Error::parse(path, format!("{n} amplitudes for m = {m}")));
                }
                MixingArtifacts::Distorted { a, sigma, amplitudes: r.f64s(n)? }
            }
        }
        2 => {
            let h = r.u32()?;
            let mut units = Vec::with_capacity(m);
            for _ in 0..m {
                let input_scale = r.f64s(d)?;
                let w1 = Matrix::new(h, d, r.f64s(h * d)?)?;
                let b1 = r.f64s(h)?;
                let w2 = Matrix::new(1, h, r.f64s(h)?)?;
                let b2 = r.f64s(1)?;
                units.push(MlpUnit { input_scale, net: MlpParams::new(w1, b1, w2, b2, Activation::Tanh)? });
            }
            MixingArtifacts::Mlp { units }
        }
        k => return Err(Error::parse(path, format!("unknown artifact kind {k}"))),
    };
    if r.pos != buf.len() {
        return Err(Error::parse(path, "trailing bytes"));
    }
    Ok(art)
}

impl Dataset {
    /// Writes the dataset directory (created if missing).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let spec_path = dir.join("spec.json");
        let json = serde_json::to_string_pretty(self.spec()).expect("spec serializes");
        fs::write(&spec_path, json + "\n").map_err(|e| Error::io(&spec_path, e))?;
        write_matrix_csv(&dir.join("latents.csv"), "s", &self.latents)?;
        write_matrix_csv(&dir.join("observations.csv"), "x", self.observations())?;
        if let Some(art) = self.artifacts() {
            let p = dir.join("artifacts.bin");
            fs::write(&p, encode_artifacts(art, self.spec().d, self.spec().m)).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    /// Reads a dataset directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
        }
        let spec_path = dir.join("spec.json");
        let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let spec: MixtureSpec = serde_json::from_str(&text)
            .map_err(|e| Error::parse(&spec_path, format!("line {} column {}: {e}", e.line(), e.column())))?;
        let latents = read_matrix_csv(&dir.join("latents.csv"), Some(spec.d))?;
        let observations = read_matrix_csv(&dir.join("observations.csv"), Some(spec.m))?;
        let art_path = dir.join("artifacts.bin");
        let artifacts = if art_path.exists() {
            let buf = fs::read(&art_path).map_err(|e| Error::io(&art_path, e))?;
            Some(decode_artifacts(&buf, &art_path, spec.d, spec.m)?)
        } else {
            None
        };
        Dataset::from_parts(latents, observations, spec, artifacts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::{gen_mixture, MixtureKind};

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [MixtureKind::A, MixtureKind::B, MixtureKind::C].into_iter().enumerate() {
            let ds = gen_mixture(&MixtureSpec::new(kind, 2, 5, 30, 3)).unwrap();
            let p = dir.path().join(format!("ds{i}"));
            ds.save(&p).unwrap();
            assert_eq!(Dataset::load(&p).unwrap(), ds);
        }
    }

    #[test]
    fn load_reports_bad_csv() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_mixture(&MixtureSpec::new(MixtureKind::A, 2, 4, 5, 3)).unwrap();
        ds.save(dir.path()).unwrap();
        fs::write(dir.path().join("observations.csv"), "x1,x2,x3,x4\n1,2,3\n").unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Parse { .. })));
        assert!(matches!(Dataset::load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
