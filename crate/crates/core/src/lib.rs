//! Variational integrators and diagnostics for mechanical systems with
//! fractional-derivative damping.
//!
//! The crate is organised around one idea: a damped second-order system can
//! be written as the stationarity condition of a discrete action built from
//! left/right fractional differences of order alpha on a doubled state
//! (a forward path x and a reversed companion path y). Everything else is
//! scaffolding around that fact:
//!
//! - [`frac_ops`]: Grünwald–Letnikov weights, discrete difference operators,
//!   composed convolutions, summation-by-parts checker.
//! - [`linalg`]: small dense solves for the implicit steps.

mod accum;
mod error;
mod special;

pub mod diagnostics;
pub mod dynamics;
pub mod frac_ops;
pub mod integrator;
pub mod linalg;
pub mod rl_continuous;

pub use error::{Error, Result};
