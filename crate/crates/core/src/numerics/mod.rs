//! Dense linear algebra, activations, spectral radius and seeded RNG streams.

mod activation;
mod linalg;
mod matrix;
mod rng;
pub(crate) mod sparse;
mod spectral;

pub use activation::{logistic, sigmoid, tanh_act};
pub use linalg::{solve_spd, Cholesky};
pub use matrix::{axpy, dot, norm, Matrix};
pub(crate) use rng::splitmix64;
pub use rng::RngStream;
pub use spectral::{rescale_to_radius, spectral_radius};
