//! Dense tensors, parameters, reverse-mode differentiation and seeded
//! randomness shared by every other module.

mod gradcheck;
mod param;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheck};
pub use param::{ParamId, ParamSet, Parameter};
pub use rng::Rng;
pub use tape::{Bindings, Gradients, Tape, Var};
pub use tensor::{
    activation, l2_normalize, sigmoid, softmax, softplus, Activation, Tensor, EPS_NORM,
};
