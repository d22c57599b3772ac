//! Small reverse-mode automatic differentiation over dense f64 tensors.

pub mod check;
pub mod error;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{AutodiffError, Result};
pub use lstm::{BoundLstm, Lstm};
pub use optim::AdaGrad;
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{softmax, GraphEdge, Tape, Var};
pub use tensor::Tensor;
pub use check::{check_gradients, relative_error, CheckReport};
