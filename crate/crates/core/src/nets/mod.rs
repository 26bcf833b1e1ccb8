//! Tanh networks for the encoder, decoder and CLF, a batched autodiff tape
//! and the Adam optimizer.

mod adam;
mod clf;
pub mod mlp;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use clf::{Clf, Encoder, TapedClf};
pub use mlp::{MlpSpec, Network};
pub use tape::{Gradients, Tape, TapedMlp, Var};
