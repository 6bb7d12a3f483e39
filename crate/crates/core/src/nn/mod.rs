//! Small reverse-mode autodiff engine used by the model and training loop.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use params::{normal_init, xavier_uniform, ParamGrads, ParamStore};
pub use tape::{Tape, VarId};
pub use tensor::{matmul, shifted_softplus, sigmoid, Tensor};
