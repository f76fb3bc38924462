//! Pixel-level primitives shared by every stage.

mod channels;
mod components;
pub mod filters;
mod gradient;
mod nms;
mod slic;

#[allow(unused_imports)]
pub(crate) use channels::raw_channels;
pub use channels::{feature_channels, rgb_to_luv, ChannelStack, N_CHANNELS};
pub use components::{connected_components, patch_segmentation};
pub use gradient::gradient_magnitude;
pub use nms::{is_locally_maximal, nms, normal_orientation};
pub use slic::{enforce_connectivity, slic, superpixel_edges, SlicParams, SuperpixelLabeling};
