//! Minimal reverse-mode differentiation engine: flat named parameter
//! storage, an eagerly evaluated op tape, and a central-difference checker.

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::{grad_check, grad_check_input, GradCheckReport};
pub use params::{ParamStore, SliceInfo};
pub use tape::{Gradients, Tape, Var, EXP_CAP, LN_FLOOR};
