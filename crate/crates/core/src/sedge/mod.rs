//! Structured Edge detector: a random forest mapping 32x32 image patches to
//! 16x16 edge patches, trained on structured labels and applied densely
//! over several scales.

mod detect;
pub mod features;
mod forest;
mod model;
mod samples;
mod train;

pub use detect::DetectOptions;
pub use features::{FeatureSource, N_FEATURES, RECIPE_VERSION};
pub use forest::{seg_edges, StructuredForest, Tree};
pub use model::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION};
pub use samples::{add_image, extract_samples, label_window, origin_for, Sample, SampleParams, Seg, TrainingSet};
pub use train::{train_forest, ForestParams};

use crate::error::Result;
use crate::image::{EdgeMap, Image};
use crate::imgproc::gradient_magnitude;

/// The edge operator of one iteration: plain gradients before any training,
/// a trained forest afterwards.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeDetector {
    Gradient,
    Forest(StructuredForest),
}

impl EdgeDetector {
    pub fn name(&self) -> &'static str {
        match self {
            EdgeDetector::Gradient => "gradient",
            EdgeDetector::Forest(_) => "forest",
        }
    }
}

/// Dense (not thinned) edge strengths in `[0, 1]`. The gradient detector
/// ignores `opts`.
pub fn detect(det: &EdgeDetector, img: &Image, opts: &DetectOptions) -> Result<EdgeMap> {
    match det {
        EdgeDetector::Gradient => gradient_magnitude(img),
        EdgeDetector::Forest(f) => detect::detect_forest(f, img, opts),
    }
}
