//! The network: per-view shared/private encoders and decoders, the shared
//! instance and label heads, availability-weighted fusion, gated
//! interaction and the sigmoid classifier.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use forward::{check_compatible, forward_all, fuse, interact, taped, ForwardCache};
pub use params::{Mlp, MlpVars, ModelConfig, ModelParams, ParamVars};
