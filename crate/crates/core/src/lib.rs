//! Layer potentials for constant-coefficient second order elliptic operators:
//! fundamental solutions, boundary quadrature, the potential-type kernel-class
//! calculus, the auxiliary operators Q_j, R, T_lj, and numerical verification
//! of the tangential-derivative identities and regularity gains they encode.

pub mod error;
pub mod fundsol;
pub mod geometry;
pub mod kernels;
pub mod lab;
pub mod operator;
pub mod potentials;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
pub use operator::C64;
