//! Dense f64 tensors, a reverse-mode tape, attention/MLP blocks and AdamW.

mod attention;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use attention::{EdgeLayout, SeqLayout, SeqMask};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Grads, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
