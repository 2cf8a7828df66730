//! Heisenberg-picture dynamics for finite-dimensional open quantum systems.
//!
//! A system `S` (dimension `d_S`) is coupled to a bath `B` (dimension `d_B`)
//! through `H = H₀ + H_B + λ H_I`. Every system observable `O` acquires a
//! `d_B × d_B` family of *image operators* `O_{αβ}(t) = T_α† O(t) T_β` acting on
//! the system space; contracting the family with the bath state gives the
//! one-point operator `O_S(t) = tr_B{O(t) ρ_B}` and chaining families gives all
//! reduced N-point operators.
//!
//! The crate is organised bottom-up:
//!
//! - [`hilbert`]: dense complex operators tagged with the space they act on,
//!   tensor products, partial traces, unitary exponentials.
//! - [`oracle`]: exact full-space Heisenberg evolution; the reference every
//!   perturbative quantity is tested against.
//! - [`image`]: image families, their exact coupled evolution, composition and
//!   bath contraction.
//! - [`dyson`]: interaction-picture images and the Dyson kernels `K̃⁽ⁿ⁾`, `K⁽ⁿ⁾`.
//! - [`superop`]: the super-operators `P⁽ⁿ⁾`, one-point operators, the inversion
//!   from one-point operators back to image families, the deformed (star)
//!   product and the local-in-time one-point generator.
//! - [`npoint`]: even-partition bookkeeping, cumulants of 2- and 3-point
//!   operators.
//! - [`markov`]: interaction decomposition, Bohr decomposition, bath spectral
//!   coefficients and the adjoint Lindblad generator.
//! - [`presets`]: the two-qubit model, an engineered dephasing bath and seeded
//!   random models.
//!
//! Index convention: the full-space basis vector `|i α⟩` has flat index
//! `i · d_B + α`, everywhere.

#![forbid(unsafe_code)]

pub mod dyson;
pub mod error;
pub mod hilbert;
pub mod image;
pub mod markov;
pub mod npoint;
pub mod ode;
pub mod oracle;
pub mod presets;
pub mod quad;
pub mod superop;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use hilbert::{CMatrix, Constants, DensityMatrix, Dims, Operator, SpaceKind, SpaceTag, C64};
pub use image::ImageFamily;
pub use ode::{OdeOptions, TimeGrid};
pub use oracle::ModelSpec;
