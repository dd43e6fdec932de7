//! MLP encoder/decoder, Jacobians, and the training loss terms with their
//! parameter gradients.

pub mod batch;
pub mod io;
pub mod loss;
pub mod mlp;
pub mod terms;

pub use batch::{BatchObjective, BatchStats, BatchWorkspace, LogdetRidge};
pub use io::{read_mlp, write_mlp};
pub use loss::{loss_gradients, loss_terms, LossOptions, LossTermGrads, LossTerms, LossWeights};
pub use mlp::{decoder_jacobian, mlp_forward, Activation, JacobianMatrix, MlpParams};
pub use terms::{sigmoid, softplus, NormVariant, Phase, VolSurrogate};
