//! Learning edge detectors from motion.
//!
//! Starting from semi-dense frame-to-frame matches and plain image
//! gradients, the pipeline alternates between edge-aware dense flow
//! interpolation, motion edge harvesting on colorized flow, and training a
//! structured random forest edge detector on the harvested edges.

pub mod bipartite;
pub mod config;
pub mod error;
pub mod eval;
pub mod flow;
pub mod image;
pub mod imgproc;
pub mod matching;
pub mod motionedge;
pub mod pipeline;
pub mod rng;
pub mod sedge;
pub mod synth;

pub use error::{Error, Result};
pub use image::{EdgeMap, Image, Mask};
