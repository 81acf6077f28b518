//! Permutation-augmented sparse layers, a small ReLU MLP with a hand-written
//! reverse pass, and the re-indexed inference path.

mod checkpoint;
mod inference;
mod layer;
mod net;

pub use checkpoint::{Checkpoint, LayerRecord, MaskRecord, PermRecord, CHECKPOINT_VERSION};
pub use inference::{forward_explicit, forward_inference, InferenceLayer, InferenceNet};
pub use layer::{transpose_layer, PALayer, PermSide, TransposedLayer};
pub use net::{backward, forward_train, relu, GradientBundle, LayerGrad, LayerTape, SmallNet, Tape};
