//! Free-boundary evolution on a flattened strip.
//!
//! The moving domain `0 < y' < h(x')` is mapped onto the fixed strip
//! `Q = T_L × (0,1)`, the transformed elliptic problem is solved by
//! Fourier–Chebyshev collocation, and the interface advances by
//! `dg/dt + O(g) = 0` where `O(g)` is the oblique Dirichlet-to-Neumann map.
//!
//! The operator `A` acts on `E = C^m`. Products such as `1/(ν+g)` are
//! evaluated componentwise.

pub mod dtn;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod holder;
pub mod linalg;
pub mod model;
pub mod operator;
pub mod par;
pub mod scenario;
pub mod stepper;
pub mod strip;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Small dense complex matrix used for operator-valued quantities.
pub type CMat = nalgebra::DMatrix<C64>;
/// Small dense complex vector (an element of `E`).
pub type CVec = nalgebra::DVector<C64>;
