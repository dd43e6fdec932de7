//! Checkpoint text format:
//!
//! ```text
//! dica-checkpoint v1
//! epoch <completed epochs>
//! c_cap <value | none>
//! <encoder, as written by write_mlp>
//! <decoder, as written by write_mlp>
//! ```
//!
//! Adam moments are not stored; a checkpoint is for evaluation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::io::{read_mlp_lines, Lines};
use crate::models::{write_mlp, MlpParams};

const HEADER: &str = "dica-checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub c_cap: Option<f64>,
    pub encoder: MlpParams<f64>,
    pub decoder: MlpParams<f64>,
}

pub fn write_checkpoint(ck: &Checkpoint) -> String {
    let mut s = format!("{HEADER}\nepoch {}\n", ck.epoch);
    match ck.c_cap {
        Some(c) => s.push_str(&format!("c_cap {c:?}\n")),
        None => s.push_str("c_cap none\n"),
    }
    write_mlp(&ck.encoder, &mut s);
    write_mlp(&ck.decoder, &mut s);
    s
}

/// Parses a checkpoint; `origin` names the source in diagnostics.
pub fn read_checkpoint(text: &str, origin: &Path) -> Result<Checkpoint> {
    let mut lines = Lines::new(text.as_bytes(), origin.display().to_string());
    if lines.next_line()?.trim() != HEADER {
        return Err(lines.err(format!("expected `{HEADER}`")));
    }
    let epoch = lines.tagged("epoch")?;
    let epoch = epoch.parse().map_err(|e| lines.err(format!("epoch: {e}")))?;
    let c_cap = match lines.tagged("c_cap")?.as_str() {
        "none" => None,
        v => Some(
            v.parse::<f64>()
                .ok()
                .filter(|c| c.is_finite() && *c > 0.0)
                .ok_or_else(|| lines.err(format!("c_cap `{v}` is not a positive number")))?,
        ),
    };
    let encoder = read_mlp_lines(&mut lines)?;
    let decoder = read_mlp_lines(&mut lines)?;
    if encoder.output_dim() != decoder.input_dim() || encoder.input_dim() != decoder.output_dim() {
        return Err(Error::parse(origin, "encoder and decoder dimensions do not chain"));
    }
    Ok(Checkpoint { epoch, c_cap, encoder, decoder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;
    use crate::numerics::Rng;
    use crate::trainer::{he_init, InitScheme};

    #[test]
    fn round_trip_and_corruption() {
        let mut rng = Rng::new(4);
        let ck = Checkpoint {
            epoch: 7,
            c_cap: Some(0.123),
            encoder: he_init(&mut rng, 5, 8, 2, Activation::Relu, InitScheme::HeUniform),
            decoder: he_init(&mut rng, 2, 8, 5, Activation::Relu, InitScheme::HeUniform),
        };
        let text = write_checkpoint(&ck);
        let p = Path::new("ck");
        assert_eq!(read_checkpoint(&text, p).unwrap(), ck);
        let none = text.replace("c_cap 0.123", "c_cap none");
        assert_eq!(read_checkpoint(&none, p).unwrap().c_cap, None);
        let bad = text.replace("epoch 7", "epoch seven");
        let err = read_checkpoint(&bad, p).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }) && err.to_string().contains("line 2"), "{err}");
        assert!(read_checkpoint(&text[..text.len() / 2], p).is_err());
    }
}
