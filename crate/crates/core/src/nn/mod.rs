//! Minimal neural-network toolkit: parameter storage, a reverse-mode tape,
//! layers and the Adam optimizer.

pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use layers::{Gru, GruCell, Linear, Mlp};
pub use optim::Adam;
pub use params::{ParamArchive, ParamBuilder, ParamId, ParamStore, Tensor};
pub use tape::{Gradients, Tape, Var};
