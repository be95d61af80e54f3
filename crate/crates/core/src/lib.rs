//! Numerical and exact-arithmetic verification of Joyce structures.
//!
//! The crate is organised bottom-up: [`frame`] and [`plebanski`] hold the
//! shared data, [`heavenly`] and [`hyperkahler`] build the pointwise
//! geometry from a Plebanski function, and the remaining modules cover
//! twistor flows, linear Stokes data, wall-crossing automorphisms and
//! periods of spectral curves.

pub mod acceptance;
pub mod error;
pub mod examples;
pub mod expr;
pub mod frame;
pub mod grid;
pub mod heavenly;
pub mod hyperkahler;
pub mod jet;
pub mod lagrangian;
pub mod linalg;
pub mod ode;
pub mod plebanski;
pub mod spectral;
pub mod stokes;
pub mod twistor;
pub mod wallcrossing;

pub use error::{Error, Result};
pub use expr::{Expr, Var};
pub use frame::{DarbouxFrame, FrameSummary};
pub use linalg::{CMat, CVec};
pub use num_complex::Complex64;
pub use num_rational::BigRational;
pub use ode::Precision;
pub use plebanski::{eval_jet, Jet, PlebanskiFunction, SymmetryFlags, XPoint};
