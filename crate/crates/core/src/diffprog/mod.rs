//! Reverse-mode differentiation, neural layers and optimization.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use layers::{
    gcn_normalized_adjacency, row_normalized_with_self_loops, Activation, Bound, Gcn, Mlp, ParamId, ParamSet,
};
pub use optim::Adam;
pub use tape::{Grads, Tape, Var};
pub use tensor::{Csr, Matrix};
