//! Minimal dense linear algebra and numeric oracles: the tensor type,
//! softmax, power-iteration spectral norm, central finite differences, and a
//! seeded deterministic RNG. Everything else in the crate builds on this.

mod finite_diff;
mod rng;
mod spectral;
mod tensor;

pub use finite_diff::finite_diff_grad;
pub use rng::Rng;
pub use spectral::{spectral_norm, SpectralEstimate};
pub use tensor::{matmul, row_softmax, row_softmax_backward, Tensor2D};
