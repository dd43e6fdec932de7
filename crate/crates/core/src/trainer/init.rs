use serde::{Deserialize, Serialize};

use crate::models::{Activation, MlpParams};
use crate::numerics::{Matrix, Rng};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(−√(6/fan_in), √(6/fan_in))`.
    #[default]
    HeUniform,
    /// `N(0, 2/fan_in)`.
    HeNormal,
}

fn he_matrix<T: Scalar>(rng: &mut Rng, rows: usize, fan_in: usize, scheme: InitScheme) -> Matrix<T> {
    let f = fan_in.max(1) as f64;
    match scheme {
        InitScheme::HeUniform => {
            let b = (6.0 / f).sqrt();
            Matrix::from_fn(rows, fan_in, |_, _| T::lit(rng.uniform_range(-b, b)))
        }
        InitScheme::HeNormal => {
            let sd = (2.0 / f).sqrt();
            Matrix::from_fn(rows, fan_in, |_, _| T::lit(sd * rng.normal()))
        }
    }
}

/// He-initialized network `input → hidden → output` with zero biases.
pub fn he_init<T: Scalar>(
    rng: &mut Rng,
    input: usize,
    hidden: usize,
    output: usize,
    activation: Activation,
    scheme: InitScheme,
) -> MlpParams<T> {
    let w1 = he_matrix(rng, hidden, input, scheme);
    let w2 = he_matrix(rng, output, hidden, scheme);
    MlpParams::new(w1, vec![T::zero(); hidden], w2, vec![T::zero(); output], activation)
        .expect("consistent shapes")
}
