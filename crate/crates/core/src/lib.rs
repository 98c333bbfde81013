//! Anisotropic Orlicz-Sobolev toolkit: Young-function calculus, the
//! isotropic rearrangement and Sobolev conjugate of a G-function, sampled
//! hypothesis audits, and a discrete mountain-pass solver for
//! `-div(∇Φ(∇u)) + V(x)N'(u) = f(u)` on a truncated box.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod commands;
pub mod config;
pub mod conjugation;
pub mod error;
pub mod mpa;
pub mod quadrature;
pub mod rearrangement;
pub mod spaces;
pub mod sampling;
pub mod young;

pub use error::{Error, Result};
pub use sampling::{SamplePlan, Verdict};
pub use young::{AnisotropicGFunction, GrowthIndices, MonotoneScalarFunction};
