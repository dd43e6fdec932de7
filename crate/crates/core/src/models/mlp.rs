use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::scalar::Scalar;

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// First derivative; relu uses the convention act'(0) = 0.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }

    /// Second derivative (zero almost everywhere for relu).
    #[inline]
    pub fn second_derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => T::zero(),
            Activation::Tanh => {
                let t = z.tanh();
                T::lit(-2.0) * t * (T::one() - t * t)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// One-hidden-layer perceptron `w2 · act(w1 · x + b1) + b2`.
///
/// Used for both the encoder (m → d) and the decoder (d → m).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub(crate) w1: Matrix<T>,
    pub(crate) b1: Vec<T>,
    pub(crate) w2: Matrix<T>,
    pub(crate) b2: Vec<T>,
    pub(crate) activation: Activation,
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(
        w1: Matrix<T>,
        b1: Vec<T>,
        w2: Matrix<T>,
        b2: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        let hidden = w1.rows();
        if b1.len() != hidden || w2.cols() != hidden || b2.len() != w2.rows() {
            return Err(Error::InvalidDims(format!(
                "inconsistent MLP shapes: w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                w1.shape(),
                b1.len(),
                w2.shape(),
                b2.len()
            )));
        }
        if b1.iter().chain(&b2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP bias".into()));
        }
        Ok(Self { w1, b1, w2, b2, activation })
    }

    pub fn zeros(input: usize, hidden: usize, output: usize, activation: Activation) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input),
            b1: vec![T::zero(); hidden],
            w2: Matrix::zeros(output, hidden),
            b2: vec![T::zero(); output],
            activation,
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    #[inline]
    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn w1(&self) -> &Matrix<T> {
        &self.w1
    }

    pub fn b1(&self) -> &[T] {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix<T> {
        &self.w2
    }

    pub fn b2(&self) -> &[T] {
        &self.b2
    }

    /// Number of scalar parameters, in the flat order w1, b1, w2, b2.
    pub fn param_count(&self) -> usize {
        let (h, i, o) = (self.hidden_dim(), self.input_dim(), self.output_dim());
        h * i + h + o * h + o
    }

    /// Appends all parameters in flat order (w1 row-major, b1, w2 row-major, b2).
    pub fn flatten_into(&self, out: &mut Vec<T>) {
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        self.flatten_into(&mut v);
        v
    }

    /// Overwrites all parameters from a flat slice of length `param_count()`.
    pub fn assign_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        let mut off = 0;
        for dst in [
            self.w1.as_mut_slice(),
            &mut self.b1[..],
            self.w2.as_mut_slice(),
            &mut self.b2[..],
        ] {
            let n = dst.len();
            dst.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn with_flat(&self, flat: &[T]) -> Self {
        let mut p = self.clone();
        p.assign_flat(flat);
        p
    }

    /// Hidden pre-activations `w1 · x + b1`.
    pub fn preactivations(&self, input: &[T]) -> Vec<T> {
        assert_eq!(input.len(), self.input_dim(), "MLP input dimension mismatch");
        self.w1.row_iter().zip(&self.b1).map(|(r, &b)| dot(r, input) + b).collect()
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        let act = self.activation;
        let hidden: Vec<T> = self.preactivations(input).into_iter().map(|z| act.apply(z)).collect();
        self.w2.row_iter().zip(&self.b2).map(|(r, &b)| dot(r, &hidden) + b).collect()
    }

    /// Input Jacobian `w2 · diag(act'(w1·x + b1)) · w1`.
    pub fn jacobian(&self, input: &[T]) -> JacobianMatrix<T> {
        let act = self.activation;
        let slopes: Vec<T> =
            self.preactivations(input).into_iter().map(|z| act.derivative(z)).collect();
        let (o, h, i) = (self.output_dim(), self.hidden_dim(), self.input_dim());
        let mut j = Matrix::zeros(o, i);
        for r in 0..o {
            let w2r = self.w2.row(r);
            let out = j.row_mut(r);
            for k in 0..h {
                let c = w2r[k] * slopes[k];
                if c != T::zero() {
                    for (o, &w) in out.iter_mut().zip(self.w1.row(k)) {
                        *o += c * w;
                    }
                }
            }
        }
        JacobianMatrix(j)
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        MlpParams {
            w1: self.w1.cast(),
            b1: self.b1.iter().map(|&v| U::lit(v.as_f64())).collect(),
            w2: self.w2.cast(),
            b2: self.b2.iter().map(|&v| U::lit(v.as_f64())).collect(),
            activation: self.activation,
        }
    }
}

/// Decoder Jacobian: entry (i, j) is ∂(output i)/∂(latent j).
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianMatrix<T>(pub Matrix<T>);

impl<T: Scalar> JacobianMatrix<T> {
    /// Number of outputs.
    pub fn m(&self) -> usize {
        self.0.rows()
    }

    /// Number of latent inputs.
    pub fn d(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

/// Decoder Jacobian at latent point `shat`.
pub fn decoder_jacobian<T: Scalar>(p: &MlpParams<T>, shat: &[T]) -> JacobianMatrix<T> {
    p.jacobian(shat)
}

pub fn mlp_forward<T: Scalar>(p: &MlpParams<T>, input: &[T]) -> Vec<T> {
    p.forward(input)
}
