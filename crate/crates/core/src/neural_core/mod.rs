//! Minimal differentiable numerics: dense MLPs, a reverse-mode tape,
//! Adam, Glorot initialization and a binary checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod mlp;
pub mod params;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use init::{glorot_init, standard_normal};
pub use mlp::Mlp;
pub use params::{Bindings, GradientRecord, Parameterized};
pub use tape::{Gradients, Tape, Tensor, Var};
