//! Minimal reverse-mode differentiable substrate: a define-by-run tape over
//! a fixed set of vector ops, the layers the models need (dense, LSTM cell,
//! 1-D convolution, max pooling, dropout), an Adam optimizer, and
//! finite-difference gradient checking.

mod layers;
mod optim;
mod tape;

pub use layers::{Activation, Conv1d, Dense, LstmCell, LstmState};
pub use optim::Adam;
pub use tape::{grad_check, NodeId, PTensor, ParamId, ParamStore, Tape};
