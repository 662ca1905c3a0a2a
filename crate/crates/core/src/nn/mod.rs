//! Minimal 1-D convolutional network with exact backpropagation.

pub mod io;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

pub use layers::{DropoutMask, LayerKind, LayerParams, Mode, Padding};
pub use network::{ChannelArch, DropoutMasks, ForwardCache, Gradients, LayerShape, Network};
pub use optim::{RmsProp, RmsPropConfig};
pub use tensor::Tensor2;
