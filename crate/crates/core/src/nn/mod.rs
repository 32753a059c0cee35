//! Minimal neural substrate: dense layers, an LSTM-family recurrent cell,
//! hand-written backward passes, an adaptive-moment optimizer and a
//! finite-difference gradient checker.

mod gradcheck;
mod io;
mod network;
mod optim;
mod spec;
mod store;

pub use gradcheck::{
    compare_with_finite_differences, gradient_check, relative_error, GradCheckReport, Parameterized, FD_STEP,
};
pub use io::{ModelFile, SavedNetwork, MODEL_FORMAT, MODEL_VERSION};
pub use network::{backward, forward, predict, Network, Tape};
pub use optim::Adam;
pub use spec::{Activation, LayerKind, LayerSpec, NetworkSpec};
pub use store::{init_network, ParameterStore, Tensor};
