//! Reverse-mode differentiation on a per-example tape.

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::{check_gradients, check_gradients_of, rel_err, GradCheck, REL_ERR_FLOOR};
pub use params::{Init, Param, ParamId, ParamStore};
pub use tape::{sigmoid, Tape, Var};
